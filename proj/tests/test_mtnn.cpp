// Tests for the multi-task network: hand-traced forward pass, dropout
// expectation, Adam reference trace, gradient checking, head isolation,
// deterministic training, persistence, and the freeze/fine-tune phase.
#include <gtest/gtest.h>

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "painpipe/mtnn.hpp"

namespace pp = painpipe;

namespace {

// 2-2-2 toy network whose activations are easy to trace by hand.
pp::MtnnModel toy_model() {
    pp::MtnnHyper h;
    h.input_dim = 2;
    h.h1 = 2;
    h.h2 = 2;
    h.dropout = 0.0;
    pp::MtnnModel m;
    m.hyper = h;
    m.m1 = pp::Matrix(2, 2);
    m.m1(0, 0) = 1.0;
    m.m1(1, 1) = 1.0;
    m.b1 = {0.0, 0.0};
    pp::HeadParams head;
    head.m2 = pp::Matrix(2, 2);
    head.m2(0, 0) = 1.0;
    head.m2(0, 1) = 1.0;
    head.m2(1, 1) = 1.0;
    head.b2 = {0.5, -0.2};
    head.w_out = {2.0, -1.0};
    head.b_out = 0.1;
    m.heads.push_back(head);
    m.feat_mean = {0.0, 0.0};
    m.feat_sd = {1.0, 1.0};
    return m;
}

struct ToyData {
    pp::DataSlice tr, va;
};

// Learnable piecewise-linear target with two planted regimes for the
// specialization tests: cluster 0 follows +x0, cluster 1 follows -x0.
ToyData make_dataset(std::size_t n_tr, std::size_t n_va, bool flip_by_cluster,
                     std::uint64_t seed) {
    pp::SplitMix rng(seed);
    auto fill = [&](pp::DataSlice& s, std::size_t n) {
        s.x = pp::Matrix(n, 4);
        s.y.resize(n);
        s.cluster.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < 4; ++j) s.x(i, j) = rng.uniform(-1.0, 1.0);
            const int c = static_cast<int>(i % 2);
            s.cluster[i] = c;
            const double sign = (flip_by_cluster && c == 1) ? -1.0 : 1.0;
            s.y[i] = sign * (1.2 * s.x(i, 0) - 0.5 * s.x(i, 1)) + 0.3 * s.x(i, 2) + 2.0;
        }
    };
    ToyData d;
    fill(d.tr, n_tr);
    fill(d.va, n_va);
    return d;
}

pp::MtnnHyper small_hyper(std::uint64_t seed) {
    pp::MtnnHyper h;
    h.input_dim = 4;
    h.h1 = 8;
    h.h2 = 4;
    h.dropout = 0.1;
    h.lr = 0.01;
    h.batch = 32;
    h.max_epochs = 12;
    h.patience = 6;
    h.seed = seed;
    return h;
}

bool models_equal(const pp::MtnnModel& a, const pp::MtnnModel& b) {
    if (a.m1.data() != b.m1.data() || a.b1 != b.b1) return false;
    if (a.feat_mean != b.feat_mean || a.feat_sd != b.feat_sd) return false;
    if (a.heads.size() != b.heads.size()) return false;
    for (std::size_t k = 0; k < a.heads.size(); ++k) {
        if (a.heads[k].m2.data() != b.heads[k].m2.data()) return false;
        if (a.heads[k].b2 != b.heads[k].b2 || a.heads[k].w_out != b.heads[k].w_out) return false;
        if (a.heads[k].b_out != b.heads[k].b_out) return false;
    }
    return true;
}

}  // namespace

TEST(Forward, HandTracedToyNetwork) {
    const pp::MtnnModel m = toy_model();
    const std::vector<double> x = {0.3, -0.4};
    // z1=(0.3,0); a2=(0.8,-0.2); z2=(0.8,0); y=2*0.8+0.1
    EXPECT_DOUBLE_EQ(pp::forward(m, 0, x), 1.7);
    // standardization folds in before the shared layer
    pp::MtnnModel ms = toy_model();
    ms.feat_mean = {1.0, 1.0};
    ms.feat_sd = {2.0, 2.0};
    const std::vector<double> raw = {1.6, 0.2};  // standardizes to (0.3, -0.4)
    EXPECT_DOUBLE_EQ(pp::forward(ms, 0, raw), 1.7);
    EXPECT_THROW((void)pp::forward(m, 1, x), pp::Error);
    EXPECT_THROW((void)pp::forward(m, 0, std::vector<double>{1.0}), pp::Error);
}

TEST(Forward, InvertedDropoutPreservesExpectationOnToyNet) {
    pp::MtnnModel m = toy_model();
    m.hyper.dropout = 0.4;
    const std::vector<double> x = {0.3, -0.4};
    // in this network every dropout configuration keeps a2 >= 0 for the live
    // unit and the dead unit stays dead, so E[train forward] equals the eval
    // output exactly; the Monte Carlo mean must land near 1.7
    pp::SplitMix rng(2024);
    double acc = 0.0;
    const int n = 80000;
    for (int i = 0; i < n; ++i) acc += pp::forward(m, 0, x, pp::RunMode::train, &rng);
    EXPECT_NEAR(acc / n, 1.7, 0.04);
    // train mode without an RNG is an error when dropout is active
    EXPECT_THROW((void)pp::forward(m, 0, x, pp::RunMode::train, nullptr), pp::Error);
}

TEST(Adam, ThreeStepReferenceTrace) {
    pp::MtnnHyper h;
    h.lr = 0.1;
    std::vector<double> p = {1.0}, m = {0.0}, v = {0.0};
    const double grads[3] = {0.5, -0.25, 0.1};
    const double expected[3] = {0.900000002, 0.8733662987078463, 0.8418419430257161};
    for (std::size_t t = 1; t <= 3; ++t) {
        std::vector<double> g = {grads[t - 1]};
        pp::adam_update(p, g, m, v, t, h);
        EXPECT_NEAR(p[0], expected[t - 1], 1e-12) << "step " << t;
    }
}

TEST(Gradients, MatchCentralFiniteDifferences) {
    pp::MtnnHyper hy;
    hy.input_dim = 3;
    hy.h1 = 4;
    hy.h2 = 3;
    hy.dropout = 0.0;
    hy.seed = 5;
    pp::MtnnModel m = pp::init_model(hy);
    pp::SplitMix rng(77);
    const std::size_t n = 6;
    pp::Matrix x(n, 3);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1.5, 1.5);
        y[i] = rng.uniform(-1.0, 1.0);
    }
    const pp::Gradients g = pp::compute_gradients(m, 0, x, y);

    auto loss = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += std::fabs(pp::forward(m, 0, std::span<const double>(x.row(i), 3)) - y[i]);
        return s / static_cast<double>(n);
    };
    auto check = [&](double* param, double analytic, const char* what) {
        const double h = 1e-6;
        const double orig = *param;
        *param = orig + h;
        const double lp = loss();
        *param = orig - h;
        const double lm = loss();
        *param = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        EXPECT_NEAR(analytic, numeric, 1e-5 * std::max(1.0, std::fabs(numeric))) << what;
    };
    for (std::size_t i = 0; i < hy.h1; ++i) {
        for (std::size_t j = 0; j < hy.input_dim; ++j)
            check(&m.m1(i, j), g.m1(i, j), "m1");
        check(&m.b1[i], g.b1[i], "b1");
    }
    for (std::size_t i = 0; i < hy.h2; ++i) {
        for (std::size_t j = 0; j < hy.h1; ++j)
            check(&m.heads[0].m2(i, j), g.heads[0].m2(i, j), "m2");
        check(&m.heads[0].b2[i], g.heads[0].b2[i], "b2");
        check(&m.heads[0].w_out[i], g.heads[0].w_out[i], "w_out");
    }
    check(&m.heads[0].b_out, g.heads[0].b_out, "b_out");
}

TEST(Gradients, InactiveHeadsStayExactlyZero) {
    pp::MtnnHyper hy;
    hy.input_dim = 3;
    hy.h1 = 4;
    hy.h2 = 3;
    hy.seed = 8;
    pp::MtnnModel m = pp::init_model(hy);
    m.heads.push_back(m.heads[0]);  // second head
    m.heads[1].b_out = 0.5;
    pp::Matrix x(4, 3);
    std::vector<double> y(4, 0.3);
    pp::SplitMix rng(3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    const pp::Gradients g = pp::compute_gradients(m, 0, x, y);
    ASSERT_EQ(g.heads.size(), 2u);
    for (double v : g.heads[1].m2.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.heads[1].b2) EXPECT_EQ(v, 0.0);
    for (double v : g.heads[1].w_out) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(g.heads[1].b_out, 0.0);
    // some active-head gradient is nonzero
    double mag = std::fabs(g.heads[0].b_out);
    for (double v : g.heads[0].w_out) mag += std::fabs(v);
    EXPECT_GT(mag, 0.0);
}

TEST(TrainJoint, DeterministicAndSeedSensitive) {
    const ToyData d = make_dataset(120, 40, false, 10);
    const pp::MtnnHyper hy = small_hyper(42);
    const pp::JointResult a = pp::train_joint(d.tr, d.va, hy);
    const pp::JointResult b = pp::train_joint(d.tr, d.va, hy);
    EXPECT_TRUE(models_equal(a.model, b.model));
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history[i].train_mae, b.history[i].train_mae);
        EXPECT_EQ(a.history[i].val_mae, b.history[i].val_mae);
    }
    pp::MtnnHyper hy2 = hy;
    hy2.seed = 43;
    const pp::JointResult c = pp::train_joint(d.tr, d.va, hy2);
    EXPECT_FALSE(models_equal(a.model, c.model));
}

TEST(TrainJoint, LearnsAndRestoresBestSnapshot) {
    const ToyData d = make_dataset(200, 60, false, 21);
    pp::MtnnHyper hy = small_hyper(7);
    hy.dropout = 0.0;
    hy.max_epochs = 40;
    const pp::JointResult r = pp::train_joint(d.tr, d.va, hy);
    ASSERT_GE(r.history.size(), 2u);
    double best_logged = r.history[0].val_mae;
    for (const auto& e : r.history) best_logged = std::min(best_logged, e.val_mae);
    // returned model reproduces the best logged validation MAE
    double s = 0.0;
    for (std::size_t i = 0; i < d.va.x.rows(); ++i)
        s += std::fabs(pp::forward(r.model, 0, std::span<const double>(d.va.x.row(i), 4)) -
                       d.va.y[i]);
    const double val = s / static_cast<double>(d.va.x.rows());
    EXPECT_NEAR(val, best_logged, 1e-12);
    EXPECT_LT(val, r.history.front().val_mae);  // training actually helped
    // standardization fitted from the train split
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_LT(std::fabs(r.model.feat_mean[j]), 0.3);
        EXPECT_GT(r.model.feat_sd[j], 0.3);
    }
}

TEST(TrainJoint, ValidatesInputs) {
    const ToyData d = make_dataset(30, 10, false, 3);
    const pp::MtnnHyper hy = small_hyper(1);
    pp::DataSlice empty;
    EXPECT_THROW((void)pp::train_joint(empty, d.va, hy), pp::Error);
    EXPECT_THROW((void)pp::train_joint(d.tr, empty, hy), pp::Error);
    pp::MtnnHyper wrong = hy;
    wrong.input_dim = 7;
    EXPECT_THROW((void)pp::train_joint(d.tr, d.va, wrong), pp::Error);
}

TEST(Specialize, FreezesSharedLayerAndNeverWorsensValidation) {
    const ToyData d = make_dataset(240, 80, true, 33);
    pp::MtnnHyper hy = small_hyper(11);
    hy.max_epochs = 30;
    const pp::JointResult joint = pp::train_joint(d.tr, d.va, hy);
    const pp::TrainResult r = pp::specialize_heads(joint, d.tr, d.va, 2, hy);
    ASSERT_EQ(r.model.heads.size(), 2u);
    EXPECT_TRUE(r.warnings.empty());
    // shared layer is untouched by phase 2
    EXPECT_EQ(r.model.m1.data(), joint.model.m1.data());
    EXPECT_EQ(r.model.b1, joint.model.b1);
    // per-head validation MAE <= the joint clone's (epoch-0 entry)
    for (std::size_t k = 0; k < 2; ++k) {
        ASSERT_FALSE(r.phase2[k].empty());
        EXPECT_EQ(r.phase2[k].front().epoch, 0);
        const double clone_val = r.phase2[k].front().val_mae;
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < d.va.x.rows(); ++i) {
            if (d.va.cluster[i] != static_cast<int>(k)) continue;
            s += std::fabs(pp::forward(r.model, k, std::span<const double>(d.va.x.row(i), 4)) -
                           d.va.y[i]);
            ++n;
        }
        ASSERT_GT(n, 0u);
        EXPECT_LE(s / static_cast<double>(n), clone_val + 1e-9) << "head " << k;
    }
    // opposite-sign targets force the two heads apart
    EXPECT_NE(r.model.heads[0].m2.data(), r.model.heads[1].m2.data());
}

TEST(Specialize, EmptyClusterKeepsCloneWithWarning) {
    const ToyData d = make_dataset(120, 40, false, 5);  // clusters only 0 and 1
    pp::MtnnHyper hy = small_hyper(2);
    const pp::JointResult joint = pp::train_joint(d.tr, d.va, hy);
    const pp::TrainResult r = pp::specialize_heads(joint, d.tr, d.va, 3, hy);
    ASSERT_EQ(r.model.heads.size(), 3u);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("head 2"), std::string::npos);
    EXPECT_EQ(r.model.heads[2].m2.data(), joint.model.heads[0].m2.data());
    EXPECT_EQ(r.model.heads[2].b_out, joint.model.heads[0].b_out);
    EXPECT_TRUE(r.phase2[2].empty());
}

TEST(Predict, RoutesByClusterAndValidates) {
    const ToyData d = make_dataset(160, 60, true, 13);
    pp::MtnnHyper hy = small_hyper(3);
    hy.max_epochs = 25;
    const pp::TrainResult r = pp::train_mtnn(d.tr, d.va, 2, hy);
    const std::vector<double> preds = pp::predict_rows(r.model, d.va.x, d.va.cluster);
    ASSERT_EQ(preds.size(), d.va.x.rows());
    for (std::size_t i = 0; i < 5; ++i)
        EXPECT_DOUBLE_EQ(preds[i],
                         pp::forward(r.model, static_cast<std::size_t>(d.va.cluster[i]),
                                     std::span<const double>(d.va.x.row(i), 4)));
    std::vector<int> bad = d.va.cluster;
    bad[0] = 9;
    EXPECT_THROW((void)pp::predict_rows(r.model, d.va.x, bad), pp::Error);
    bad[0] = -1;
    EXPECT_THROW((void)pp::predict_rows(r.model, d.va.x, bad), pp::Error);
    EXPECT_THROW((void)pp::predict_rows(r.model, d.va.x, std::vector<int>{0}), pp::Error);
}

TEST(Persistence, JsonRoundTripIsBitExact) {
    const ToyData d = make_dataset(100, 30, true, 44);
    pp::MtnnHyper hy = small_hyper(9);
    const pp::TrainResult r = pp::train_mtnn(d.tr, d.va, 2, hy);
    const nlohmann::ordered_json j = pp::model_to_json(r.model);
    // serialize through text exactly as the artifact writer does
    const pp::MtnnModel back = pp::model_from_json(nlohmann::json::parse(j.dump(2)));
    EXPECT_TRUE(models_equal(r.model, back));
    const std::vector<double> p1 = pp::predict_rows(r.model, d.va.x, d.va.cluster);
    const std::vector<double> p2 = pp::predict_rows(back, d.va.x, d.va.cluster);
    EXPECT_EQ(p1, p2);  // bitwise identical predictions
    EXPECT_EQ(back.hyper.seed, hy.seed);
    EXPECT_EQ(back.hyper.batch, hy.batch);
}

TEST(Persistence, RejectsMalformedBundles) {
    const pp::MtnnModel m = toy_model();
    auto code_of = [](const nlohmann::json& j) -> std::optional<pp::ErrorCode> {
        try {
            (void)pp::model_from_json(j);
        } catch (const pp::Error& e) {
            return e.code;
        }
        return std::nullopt;
    };
    nlohmann::json good = pp::model_to_json(m);
    nlohmann::json bad = good;
    bad["format_version"] = 99;
    EXPECT_EQ(code_of(bad), pp::ErrorCode::schema);
    bad = good;
    bad.erase("b1");
    EXPECT_EQ(code_of(bad), pp::ErrorCode::schema);
    bad = good;
    bad["m1"] = std::vector<double>{1.0, 2.0};  // wrong size
    EXPECT_EQ(code_of(bad), pp::ErrorCode::schema);
    bad = good;
    bad["heads"] = nlohmann::json::array();
    EXPECT_EQ(code_of(bad), pp::ErrorCode::schema);
    bad = good;
    bad["heads"][0]["w_out"] = std::vector<double>{1.0};
    EXPECT_EQ(code_of(bad), pp::ErrorCode::schema);
    EXPECT_EQ(code_of(good), std::nullopt);
}
