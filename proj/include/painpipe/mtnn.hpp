// ============================================================================
// mtnn.hpp - multi-task feed-forward regressor: one shared ReLU layer and one
// ReLU head per profile, MAE loss, Adam, inverted dropout, early stopping.
// Phase 1 trains a joint single-head network; phase 2 clones the head per
// profile, freezes the shared layer, and fine-tunes each head on its profile's
// windows using cached shared activations.
// ============================================================================
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "painpipe/common.hpp"
#include "painpipe/linalg.hpp"

namespace painpipe {

struct MtnnHyper {
    std::size_t input_dim = 290;
    std::size_t h1 = 64;
    std::size_t h2 = 32;
    double dropout = 0.2;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t batch = 128;
    int max_epochs = 200;
    int patience = 10;
    std::uint64_t seed = 0;
};

struct HeadParams {
    Matrix m2;                  // h2 × h1
    std::vector<double> b2;     // h2
    std::vector<double> w_out;  // h2
    double b_out = 0.0;
};

struct MtnnModel {
    MtnnHyper hyper;
    Matrix m1;               // h1 × input_dim
    std::vector<double> b1;  // h1
    std::vector<HeadParams> heads;
    std::vector<double> feat_mean, feat_sd;  // z-score stats from the training split
};

enum class RunMode { eval, train };

// Seeded He-uniform initialization; biases zero; single head.
inline MtnnModel init_model(const MtnnHyper& hyper) {
    MtnnModel m;
    m.hyper = hyper;
    SplitMix rng(derive_seed(hyper.seed, "init"));
    auto he = [&](Matrix& w, std::size_t rows, std::size_t cols) {
        w = Matrix(rows, cols);
        const double limit = std::sqrt(6.0 / static_cast<double>(cols));
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) w(i, j) = rng.uniform(-limit, limit);
    };
    he(m.m1, hyper.h1, hyper.input_dim);
    m.b1.assign(hyper.h1, 0.0);
    HeadParams h;
    he(h.m2, hyper.h2, hyper.h1);
    h.b2.assign(hyper.h2, 0.0);
    h.w_out.resize(hyper.h2);
    const double limit = std::sqrt(6.0 / static_cast<double>(hyper.h2));
    for (double& v : h.w_out) v = rng.uniform(-limit, limit);
    h.b_out = 0.0;
    m.heads.push_back(std::move(h));
    m.feat_mean.assign(hyper.input_dim, 0.0);
    m.feat_sd.assign(hyper.input_dim, 1.0);
    return m;
}

// Reference Adam update with bias-corrected moments; t is the 1-based global
// step shared by all parameter groups.
inline void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                        std::span<double> v, std::size_t t, const MtnnHyper& h) {
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        p[i] -= h.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + h.adam_eps);
    }
}

namespace detail {

// Per-sample forward/backward scratch. The same routines serve the public
// forward pass, the gradient API, and both training phases, so the math has a
// single source of truth.
struct MtnnWs {
    std::vector<double> x_std, a1, z1;      // shared stage
    std::vector<double> mask1, z1d;         // head input after dropout
    std::vector<double> a2, z2, mask2, z2d; // head hidden
    std::vector<double> gz1;                // dL/dz1 out of the head

    void resize(const MtnnHyper& h) {
        x_std.resize(h.input_dim);
        a1.resize(h.h1);
        z1.resize(h.h1);
        mask1.resize(h.h1);
        z1d.resize(h.h1);
        a2.resize(h.h2);
        z2.resize(h.h2);
        mask2.resize(h.h2);
        z2d.resize(h.h2);
        gz1.resize(h.h1);
    }
};

inline void standardize_into(const MtnnModel& m, std::span<const double> x,
                             std::span<double> out) {
    for (std::size_t j = 0; j < x.size(); ++j)
        out[j] = (x[j] - m.feat_mean[j]) / m.feat_sd[j];
}

inline void shared_forward(const MtnnModel& m, std::span<const double> x_std, MtnnWs& ws) {
    const std::size_t h1 = m.hyper.h1, d = m.hyper.input_dim;
    for (std::size_t i = 0; i < h1; ++i) {
        const double* row = m.m1.row(i);
        double s = m.b1[i];
        for (std::size_t j = 0; j < d; ++j) s += row[j] * x_std[j];
        ws.a1[i] = s;
        ws.z1[i] = s > 0.0 ? s : 0.0;
    }
}

// Head stage over a given z1 (cached or fresh). Inverted dropout on both the
// head input (z1) and the head hidden layer in train mode.
inline double head_forward(const MtnnModel& m, const HeadParams& h, std::span<const double> z1,
                           RunMode mode, SplitMix* rng, MtnnWs& ws) {
    const std::size_t h1 = m.hyper.h1, h2 = m.hyper.h2;
    const double p = m.hyper.dropout;
    if (mode == RunMode::train && p > 0.0) {
        if (!rng) throw Error(ErrorCode::invalid_argument, "train-mode forward needs an RNG");
        const double inv = 1.0 / (1.0 - p);
        for (std::size_t j = 0; j < h1; ++j) ws.mask1[j] = (rng->uniform() >= p) ? inv : 0.0;
        for (std::size_t j = 0; j < h2; ++j) ws.mask2[j] = (rng->uniform() >= p) ? inv : 0.0;
    } else {
        for (std::size_t j = 0; j < h1; ++j) ws.mask1[j] = 1.0;
        for (std::size_t j = 0; j < h2; ++j) ws.mask2[j] = 1.0;
    }
    for (std::size_t j = 0; j < h1; ++j) ws.z1d[j] = z1[j] * ws.mask1[j];
    for (std::size_t i = 0; i < h2; ++i) {
        const double* row = h.m2.row(i);
        double s = h.b2[i];
        for (std::size_t j = 0; j < h1; ++j) s += row[j] * ws.z1d[j];
        ws.a2[i] = s;
        ws.z2[i] = s > 0.0 ? s : 0.0;
        ws.z2d[i] = ws.z2[i] * ws.mask2[i];
    }
    double y = h.b_out;
    for (std::size_t i = 0; i < h2; ++i) y += h.w_out[i] * ws.z2d[i];
    return y;
}

struct HeadGrad {
    Matrix m2;
    std::vector<double> b2, w_out;
    double b_out = 0.0;

    void init(const MtnnHyper& h) {
        m2 = Matrix(h.h2, h.h1);
        b2.assign(h.h2, 0.0);
        w_out.assign(h.h2, 0.0);
        b_out = 0.0;
    }
    void zero() {
        std::fill(m2.data().begin(), m2.data().end(), 0.0);
        std::fill(b2.begin(), b2.end(), 0.0);
        std::fill(w_out.begin(), w_out.end(), 0.0);
        b_out = 0.0;
    }
};

// Accumulates head gradients for output gradient g; fills ws.gz1 with dL/dz1
// (for the shared backward) when want_gz1.
inline void head_backward(const MtnnModel& m, const HeadParams& h, double g, MtnnWs& ws,
                          HeadGrad& gh, bool want_gz1) {
    const std::size_t h1 = m.hyper.h1, h2 = m.hyper.h2;
    if (want_gz1) std::fill(ws.gz1.begin(), ws.gz1.end(), 0.0);
    gh.b_out += g;
    for (std::size_t i = 0; i < h2; ++i) {
        gh.w_out[i] += g * ws.z2d[i];
        const double da2 = (ws.a2[i] > 0.0) ? g * h.w_out[i] * ws.mask2[i] : 0.0;
        if (da2 == 0.0) continue;
        gh.b2[i] += da2;
        double* grow = gh.m2.row(i);
        const double* wrow = h.m2.row(i);
        for (std::size_t j = 0; j < h1; ++j) {
            grow[j] += da2 * ws.z1d[j];
            if (want_gz1) ws.gz1[j] += da2 * wrow[j];
        }
    }
    if (want_gz1)
        for (std::size_t j = 0; j < h1; ++j) ws.gz1[j] *= ws.mask1[j];
}

inline void shared_backward(const MtnnModel& m, std::span<const double> x_std, const MtnnWs& ws,
                            Matrix& gm1, std::span<double> gb1) {
    const std::size_t h1 = m.hyper.h1, d = m.hyper.input_dim;
    for (std::size_t i = 0; i < h1; ++i) {
        const double da1 = (ws.a1[i] > 0.0) ? ws.gz1[i] : 0.0;
        if (da1 == 0.0) continue;
        gb1[i] += da1;
        double* row = gm1.row(i);
        for (std::size_t j = 0; j < d; ++j) row[j] += da1 * x_std[j];
    }
}

inline double sign_subgradient(double e) { return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

// ----------------------------------------------------------------------------
// Public forward / gradients
// ----------------------------------------------------------------------------

inline double forward(const MtnnModel& m, std::size_t head, std::span<const double> x,
                      RunMode mode = RunMode::eval, SplitMix* rng = nullptr) {
    if (head >= m.heads.size())
        throw Error(ErrorCode::invalid_argument, "forward: head index out of range");
    if (x.size() != m.hyper.input_dim)
        throw Error(ErrorCode::invalid_argument, "forward: input dimension mismatch");
    detail::MtnnWs ws;
    ws.resize(m.hyper);
    detail::standardize_into(m, x, ws.x_std);
    detail::shared_forward(m, ws.x_std, ws);
    return detail::head_forward(m, m.heads[head], ws.z1, mode, rng, ws);
}

struct Gradients {
    Matrix m1;
    std::vector<double> b1;
    std::vector<detail::HeadGrad> heads;  // inactive heads stay zero
};

// Batch MAE gradients for one head (eval-mode activations unless use_dropout).
inline Gradients compute_gradients(const MtnnModel& m, std::size_t head, const Matrix& x,
                                   std::span<const double> y, bool use_dropout = false,
                                   SplitMix* rng = nullptr) {
    if (head >= m.heads.size())
        throw Error(ErrorCode::invalid_argument, "compute_gradients: head out of range");
    if (x.rows() != y.size() || x.rows() == 0)
        throw Error(ErrorCode::invalid_argument, "compute_gradients: empty batch or length mismatch");
    Gradients g;
    g.m1 = Matrix(m.hyper.h1, m.hyper.input_dim);
    g.b1.assign(m.hyper.h1, 0.0);
    g.heads.resize(m.heads.size());
    for (auto& hg : g.heads) hg.init(m.hyper);

    detail::MtnnWs ws;
    ws.resize(m.hyper);
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (std::size_t s = 0; s < x.rows(); ++s) {
        detail::standardize_into(m, std::span<const double>(x.row(s), x.cols()), ws.x_std);
        detail::shared_forward(m, ws.x_std, ws);
        const double yh = detail::head_forward(m, m.heads[head], ws.z1,
                                               use_dropout ? RunMode::train : RunMode::eval, rng, ws);
        const double go = detail::sign_subgradient(yh - y[s]) * inv_n;
        if (go == 0.0) continue;
        detail::head_backward(m, m.heads[head], go, ws, g.heads[head], true);
        detail::shared_backward(m, ws.x_std, ws, g.m1, g.b1);
    }
    return g;
}

// ----------------------------------------------------------------------------
// Training
// ----------------------------------------------------------------------------

struct DataSlice {
    Matrix x;                  // n × input_dim, raw (unstandardized) features
    std::vector<double> y;     // labels
    std::vector<int> cluster;  // head routing (used by phase 2 / prediction)
};

struct EpochLog {
    int epoch = 0;
    double train_mae = 0.0;
    double val_mae = 0.0;
};

struct JointResult {
    MtnnModel model;  // single head, standardization fitted
    std::vector<EpochLog> history;
};

struct TrainResult {
    MtnnModel model;
    std::vector<EpochLog> phase1;
    std::vector<std::vector<EpochLog>> phase2;  // per head
    std::vector<std::string> warnings;
};

namespace detail {

struct AdamSlot {
    std::vector<double> m, v;
    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

inline double eval_mae_shared(const MtnnModel& model, const Matrix& z1_rows,
                              std::span<const double> y, std::span<const std::size_t> idx,
                              const HeadParams& head) {
    if (idx.empty()) return 0.0;
    MtnnWs ws;
    ws.resize(model.hyper);
    double s = 0.0;
    for (std::size_t i : idx) {
        const double yh = head_forward(model, head,
                                       std::span<const double>(z1_rows.row(i), z1_rows.cols()),
                                       RunMode::eval, nullptr, ws);
        s += std::fabs(yh - y[i]);
    }
    return s / static_cast<double>(idx.size());
}

// Cache shared-layer activations (eval mode) for every row.
inline Matrix cache_z1(const MtnnModel& model, const Matrix& x) {
    Matrix z1(x.rows(), model.hyper.h1);
    MtnnWs ws;
    ws.resize(model.hyper);
    for (std::size_t s = 0; s < x.rows(); ++s) {
        standardize_into(model, std::span<const double>(x.row(s), x.cols()), ws.x_std);
        shared_forward(model, ws.x_std, ws);
        for (std::size_t j = 0; j < model.hyper.h1; ++j) z1(s, j) = ws.z1[j];
    }
    return z1;
}

}  // namespace detail

// Phase 1: joint single-head training on the whole training slice with early
// stopping on validation MAE; best weights restored.
inline JointResult train_joint(const DataSlice& tr, const DataSlice& va, const MtnnHyper& hyper) {
    if (tr.x.rows() == 0 || tr.x.rows() != tr.y.size())
        throw Error(ErrorCode::invalid_argument, "train_joint: empty or inconsistent training slice");
    if (va.x.rows() == 0 || va.x.rows() != va.y.size())
        throw Error(ErrorCode::invalid_argument, "train_joint: validation split must be nonempty");
    if (tr.x.cols() != hyper.input_dim || va.x.cols() != hyper.input_dim)
        throw Error(ErrorCode::invalid_argument, "train_joint: feature dimension mismatch");

    MtnnModel model = init_model(hyper);
    const std::size_t n = tr.x.rows(), d = hyper.input_dim;

    // Standardization from the training split; constant features map to 0.
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += tr.x(i, j);
        model.feat_mean[j] = s / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dd = tr.x(i, j) - model.feat_mean[j];
            ss += dd * dd;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n));
        model.feat_sd[j] = sd > 1e-12 ? sd : 1.0;
    }

    Matrix xs(n, d), vs(va.x.rows(), d);
    for (std::size_t i = 0; i < n; ++i)
        detail::standardize_into(model, std::span<const double>(tr.x.row(i), d),
                                 std::span<double>(xs.row(i), d));
    for (std::size_t i = 0; i < va.x.rows(); ++i)
        detail::standardize_into(model, std::span<const double>(va.x.row(i), d),
                                 std::span<double>(vs.row(i), d));

    // Optimizer state
    detail::AdamSlot am1, ab1, am2, ab2, awo, abo;
    am1.init(hyper.h1 * d);
    ab1.init(hyper.h1);
    am2.init(hyper.h2 * hyper.h1);
    ab2.init(hyper.h2);
    awo.init(hyper.h2);
    abo.init(1);
    std::size_t adam_t = 0;

    Matrix gm1(hyper.h1, d);
    std::vector<double> gb1(hyper.h1, 0.0);
    detail::HeadGrad gh;
    gh.init(hyper);
    detail::MtnnWs ws;
    ws.resize(hyper);

    auto val_mae = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < vs.rows(); ++i) {
            detail::shared_forward(model, std::span<const double>(vs.row(i), d), ws);
            const double yh =
                detail::head_forward(model, model.heads[0], ws.z1, RunMode::eval, nullptr, ws);
            s += std::fabs(yh - va.y[i]);
        }
        return s / static_cast<double>(vs.rows());
    };

    JointResult out;
    MtnnModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    int patience_left = hyper.patience;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
        SplitMix erng(derive_seed(hyper.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        shuffle_deterministic(order, erng);
        double epoch_abs = 0.0;
        for (std::size_t start = 0; start < n; start += hyper.batch) {
            const std::size_t bs = std::min(hyper.batch, n - start);
            std::fill(gm1.data().begin(), gm1.data().end(), 0.0);
            std::fill(gb1.begin(), gb1.end(), 0.0);
            gh.zero();
            const double inv_bs = 1.0 / static_cast<double>(bs);
            for (std::size_t k = 0; k < bs; ++k) {
                const std::size_t i = order[start + k];
                const std::span<const double> row(xs.row(i), d);
                detail::shared_forward(model, row, ws);
                const double yh = detail::head_forward(model, model.heads[0], ws.z1,
                                                       RunMode::train, &erng, ws);
                const double e = yh - tr.y[i];
                epoch_abs += std::fabs(e);
                const double go = detail::sign_subgradient(e) * inv_bs;
                if (go == 0.0) continue;
                detail::head_backward(model, model.heads[0], go, ws, gh, true);
                detail::shared_backward(model, row, ws, gm1, gb1);
            }
            ++adam_t;
            adam_update(model.m1.data(), gm1.data(), am1.m, am1.v, adam_t, hyper);
            adam_update(model.b1, gb1, ab1.m, ab1.v, adam_t, hyper);
            adam_update(model.heads[0].m2.data(), gh.m2.data(), am2.m, am2.v, adam_t, hyper);
            adam_update(model.heads[0].b2, gh.b2, ab2.m, ab2.v, adam_t, hyper);
            adam_update(model.heads[0].w_out, gh.w_out, awo.m, awo.v, adam_t, hyper);
            double bo[1] = {model.heads[0].b_out}, gbo[1] = {gh.b_out};
            adam_update(bo, gbo, abo.m, abo.v, adam_t, hyper);
            model.heads[0].b_out = bo[0];
        }
        const double vm = val_mae();
        out.history.push_back({epoch, epoch_abs / static_cast<double>(n), vm});
        if (vm < best_val) {
            best_val = vm;
            best = model;
            patience_left = hyper.patience;
        } else if (--patience_left <= 0) {
            break;
        }
    }
    out.model = std::move(best);
    return out;
}

// Phase 2: clone the joint head into c heads, freeze the shared layer, and
// fine-tune each head on its profile's windows over cached shared activations.
// The pre-fine-tuning clone participates in early stopping, so a head never
// ends worse on validation than the joint model it started from.
inline TrainResult specialize_heads(const JointResult& joint, const DataSlice& tr,
                                    const DataSlice& va, std::size_t c, const MtnnHyper& hyper) {
    if (c < 1) throw Error(ErrorCode::invalid_argument, "specialize_heads: c must be >= 1");
    if (tr.cluster.size() != tr.x.rows() || va.cluster.size() != va.x.rows())
        throw Error(ErrorCode::invalid_argument, "specialize_heads: cluster routing missing");

    TrainResult out;
    out.phase1 = joint.history;
    out.model = joint.model;
    out.model.heads.assign(c, joint.model.heads[0]);
    out.phase2.resize(c);

    const Matrix z1_tr = detail::cache_z1(out.model, tr.x);
    const Matrix z1_va = detail::cache_z1(out.model, va.x);
    const std::size_t h1 = hyper.h1;

    detail::MtnnWs ws;
    ws.resize(hyper);
    for (std::size_t k = 0; k < c; ++k) {
        std::vector<std::size_t> tidx, vidx;
        for (std::size_t i = 0; i < tr.x.rows(); ++i)
            if (tr.cluster[i] == static_cast<int>(k)) tidx.push_back(i);
        for (std::size_t i = 0; i < va.x.rows(); ++i)
            if (va.cluster[i] == static_cast<int>(k)) vidx.push_back(i);
        if (tidx.empty() || vidx.empty()) {
            out.warnings.push_back("head " + std::to_string(k) +
                                   ": no training or validation windows for this profile; "
                                   "keeping the joint clone");
            log_warn("%s", out.warnings.back().c_str());
            continue;
        }

        HeadParams& head = out.model.heads[k];
        HeadParams best = head;
        double best_val = detail::eval_mae_shared(out.model, z1_va, va.y, vidx, head);
        int patience_left = hyper.patience;

        detail::AdamSlot am2, ab2, awo, abo;
        am2.init(hyper.h2 * h1);
        ab2.init(hyper.h2);
        awo.init(hyper.h2);
        abo.init(1);
        std::size_t adam_t = 0;
        detail::HeadGrad gh;
        gh.init(hyper);

        out.phase2[k].push_back({0, 0.0, best_val});
        for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
            SplitMix erng(derive_seed(hyper.seed, "head-epoch",
                                      (static_cast<std::uint64_t>(k) << 32) |
                                          static_cast<std::uint64_t>(epoch)));
            shuffle_deterministic(tidx, erng);
            double epoch_abs = 0.0;
            for (std::size_t start = 0; start < tidx.size(); start += hyper.batch) {
                const std::size_t bs = std::min(hyper.batch, tidx.size() - start);
                gh.zero();
                const double inv_bs = 1.0 / static_cast<double>(bs);
                for (std::size_t kk = 0; kk < bs; ++kk) {
                    const std::size_t i = tidx[start + kk];
                    const double yh = detail::head_forward(
                        out.model, head, std::span<const double>(z1_tr.row(i), h1),
                        RunMode::train, &erng, ws);
                    const double e = yh - tr.y[i];
                    epoch_abs += std::fabs(e);
                    const double go = detail::sign_subgradient(e) * inv_bs;
                    if (go == 0.0) continue;
                    detail::head_backward(out.model, head, go, ws, gh, false);
                }
                ++adam_t;
                adam_update(head.m2.data(), gh.m2.data(), am2.m, am2.v, adam_t, hyper);
                adam_update(head.b2, gh.b2, ab2.m, ab2.v, adam_t, hyper);
                adam_update(head.w_out, gh.w_out, awo.m, awo.v, adam_t, hyper);
                double bo[1] = {head.b_out}, gbo[1] = {gh.b_out};
                adam_update(bo, gbo, abo.m, abo.v, adam_t, hyper);
                head.b_out = bo[0];
            }
            const double vm = detail::eval_mae_shared(out.model, z1_va, va.y, vidx, head);
            out.phase2[k].push_back(
                {epoch, epoch_abs / static_cast<double>(tidx.size()), vm});
            if (vm < best_val) {
                best_val = vm;
                best = head;
                patience_left = hyper.patience;
            } else if (--patience_left <= 0) {
                break;
            }
        }
        head = std::move(best);
    }
    return out;
}

inline TrainResult train_mtnn(const DataSlice& tr, const DataSlice& va, std::size_t c,
                              const MtnnHyper& hyper) {
    return specialize_heads(train_joint(tr, va, hyper), tr, va, c, hyper);
}

// Routes each row to its cluster's head; eval mode.
inline std::vector<double> predict_rows(const MtnnModel& m, const Matrix& x,
                                        std::span<const int> cluster) {
    if (x.rows() != cluster.size())
        throw Error(ErrorCode::invalid_argument, "predict_rows: cluster routing length mismatch");
    detail::MtnnWs ws;
    ws.resize(m.hyper);
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (cluster[i] < 0 || static_cast<std::size_t>(cluster[i]) >= m.heads.size())
            throw Error(ErrorCode::invalid_argument,
                        "predict_rows: window routed to unassigned head " +
                            std::to_string(cluster[i]));
        detail::standardize_into(m, std::span<const double>(x.row(i), x.cols()), ws.x_std);
        detail::shared_forward(m, ws.x_std, ws);
        out[i] = detail::head_forward(m, m.heads[static_cast<std::size_t>(cluster[i])], ws.z1,
                                      RunMode::eval, nullptr, ws);
    }
    return out;
}

// ----------------------------------------------------------------------------
// JSON persistence (versioned bundle)
// ----------------------------------------------------------------------------

inline nlohmann::ordered_json model_to_json(const MtnnModel& m) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["hyper"] = {{"input_dim", m.hyper.input_dim}, {"h1", m.hyper.h1},     {"h2", m.hyper.h2},
                  {"dropout", m.hyper.dropout},     {"lr", m.hyper.lr},     {"beta1", m.hyper.beta1},
                  {"beta2", m.hyper.beta2},         {"adam_eps", m.hyper.adam_eps},
                  {"batch", m.hyper.batch},         {"max_epochs", m.hyper.max_epochs},
                  {"patience", m.hyper.patience},   {"seed", m.hyper.seed}};
    j["feat_mean"] = m.feat_mean;
    j["feat_sd"] = m.feat_sd;
    j["m1"] = m.m1.data();
    j["b1"] = m.b1;
    j["heads"] = nlohmann::ordered_json::array();
    for (const HeadParams& h : m.heads) {
        nlohmann::ordered_json hj;
        hj["m2"] = h.m2.data();
        hj["b2"] = h.b2;
        hj["w_out"] = h.w_out;
        hj["b_out"] = h.b_out;
        j["heads"].push_back(std::move(hj));
    }
    return j;
}

inline MtnnModel model_from_json(const nlohmann::json& j) {
    MtnnModel m;
    try {
        if (j.at("format_version").get<int>() != 1)
            throw Error(ErrorCode::schema, "model bundle: unsupported format_version");
        const auto& h = j.at("hyper");
        m.hyper.input_dim = h.at("input_dim").get<std::size_t>();
        m.hyper.h1 = h.at("h1").get<std::size_t>();
        m.hyper.h2 = h.at("h2").get<std::size_t>();
        m.hyper.dropout = h.at("dropout").get<double>();
        m.hyper.lr = h.at("lr").get<double>();
        m.hyper.beta1 = h.at("beta1").get<double>();
        m.hyper.beta2 = h.at("beta2").get<double>();
        m.hyper.adam_eps = h.at("adam_eps").get<double>();
        m.hyper.batch = h.at("batch").get<std::size_t>();
        m.hyper.max_epochs = h.at("max_epochs").get<int>();
        m.hyper.patience = h.at("patience").get<int>();
        m.hyper.seed = h.at("seed").get<std::uint64_t>();
        m.feat_mean = j.at("feat_mean").get<std::vector<double>>();
        m.feat_sd = j.at("feat_sd").get<std::vector<double>>();
        auto m1v = j.at("m1").get<std::vector<double>>();
        if (m1v.size() != m.hyper.h1 * m.hyper.input_dim ||
            m.feat_mean.size() != m.hyper.input_dim || m.feat_sd.size() != m.hyper.input_dim)
            throw Error(ErrorCode::schema, "model bundle: m1/standardization dimensions inconsistent");
        m.m1 = Matrix(m.hyper.h1, m.hyper.input_dim);
        m.m1.data() = std::move(m1v);
        m.b1 = j.at("b1").get<std::vector<double>>();
        if (m.b1.size() != m.hyper.h1)
            throw Error(ErrorCode::schema, "model bundle: b1 dimension inconsistent");
        for (const auto& hj : j.at("heads")) {
            HeadParams hp;
            auto m2v = hj.at("m2").get<std::vector<double>>();
            if (m2v.size() != m.hyper.h2 * m.hyper.h1)
                throw Error(ErrorCode::schema, "model bundle: m2 dimension inconsistent");
            hp.m2 = Matrix(m.hyper.h2, m.hyper.h1);
            hp.m2.data() = std::move(m2v);
            hp.b2 = hj.at("b2").get<std::vector<double>>();
            hp.w_out = hj.at("w_out").get<std::vector<double>>();
            hp.b_out = hj.at("b_out").get<double>();
            if (hp.b2.size() != m.hyper.h2 || hp.w_out.size() != m.hyper.h2)
                throw Error(ErrorCode::schema, "model bundle: head dimensions inconsistent");
            m.heads.push_back(std::move(hp));
        }
        if (m.heads.empty()) throw Error(ErrorCode::schema, "model bundle: no heads");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema, std::string("model bundle: invalid JSON structure: ") + e.what());
    }
    return m;
}

}  // namespace painpipe
