// ============================================================================
// profiler.hpp - 44D subject descriptors, RBF similarity, normalized spectral
// clustering (Shi-Malik via the symmetric Laplacian + Jacobi), k-means, and
// cluster meta-statistics
// ============================================================================
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "painpipe/common.hpp"
#include "painpipe/dataset.hpp"
#include "painpipe/linalg.hpp"
#include "painpipe/metrics.hpp"

namespace painpipe {

inline constexpr std::size_t kProfileFeatureDim = 11;  // 6 SC + 4 IBI + l_exp
inline constexpr std::size_t kDescriptorDim = 44;
inline constexpr std::size_t kNumLevels = 4;

// Level-major layout: the 11 features of level 1, then of level 2, ...
inline constexpr std::size_t desc_index(std::size_t level_idx, std::size_t feature_idx) {
    return level_idx * kProfileFeatureDim + feature_idx;
}

struct ProfileWindowFeatures {
    int level = 0;  // 1..4
    std::array<double, kProfileFeatureDim> features{};
};

struct SubjectDescriptor {
    std::string subject_id;
    std::array<double, kDescriptorDim> p{};      // per-level feature means
    std::array<double, kDescriptorDim> p_hat{};  // normalized across levels per feature
};

// Per-level feature means, then per-feature normalization across the 4 levels.
// Sign-consistent features divide by the plain sum (level-sums become exactly
// 1); sign-mixed ones (possible for the IBI slope) divide by the absolute sum;
// an all-zero feature falls back to the uniform 0.25 profile.
inline SubjectDescriptor build_descriptor(const std::string& subject_id,
                                          std::span<const ProfileWindowFeatures> windows) {
    std::array<std::array<double, kProfileFeatureDim>, kNumLevels> sums{};
    std::array<std::size_t, kNumLevels> counts{};
    for (const ProfileWindowFeatures& w : windows) {
        if (w.level < 1 || w.level > 4)
            throw Error(ErrorCode::invalid_argument, "build_descriptor: level out of range");
        const auto li = static_cast<std::size_t>(w.level - 1);
        for (std::size_t j = 0; j < kProfileFeatureDim; ++j) sums[li][j] += w.features[j];
        ++counts[li];
    }
    for (std::size_t li = 0; li < kNumLevels; ++li)
        if (counts[li] == 0)
            throw Error(ErrorCode::invalid_data,
                        "subject " + subject_id + ": no usable profile windows at level " +
                            std::to_string(li + 1) + "; subject excluded from profiling");

    SubjectDescriptor d;
    d.subject_id = subject_id;
    for (std::size_t li = 0; li < kNumLevels; ++li)
        for (std::size_t j = 0; j < kProfileFeatureDim; ++j)
            d.p[desc_index(li, j)] = sums[li][j] / static_cast<double>(counts[li]);

    for (std::size_t j = 0; j < kProfileFeatureDim; ++j) {
        double sum = 0.0, abs_sum = 0.0;
        bool pos = false, neg = false;
        for (std::size_t li = 0; li < kNumLevels; ++li) {
            const double v = d.p[desc_index(li, j)];
            sum += v;
            abs_sum += std::fabs(v);
            if (v > 0.0) pos = true;
            if (v < 0.0) neg = true;
        }
        for (std::size_t li = 0; li < kNumLevels; ++li) {
            const std::size_t ix = desc_index(li, j);
            if (abs_sum <= 1e-12)
                d.p_hat[ix] = 1.0 / static_cast<double>(kNumLevels);
            else if ((pos && neg) || std::fabs(sum) <= 1e-12)
                d.p_hat[ix] = d.p[ix] / abs_sum;
            else
                d.p_hat[ix] = d.p[ix] / sum;
        }
    }
    return d;
}

// ----------------------------------------------------------------------------
// RBF similarity over normalized descriptors: w_ij = exp(-gamma ||pi - pj||^2),
// unit diagonal, fully connected.
// ----------------------------------------------------------------------------

inline Matrix similarity_matrix(std::span<const SubjectDescriptor> descriptors,
                                double gamma = 0.18) {
    const std::size_t m = descriptors.size();
    Matrix w(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        w(i, i) = 1.0;
        for (std::size_t j = i + 1; j < m; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < kDescriptorDim; ++k) {
                const double dd = descriptors[i].p_hat[k] - descriptors[j].p_hat[k];
                d2 += dd * dd;
            }
            const double v = std::exp(-gamma * d2);
            w(i, j) = v;
            w(j, i) = v;
        }
    }
    return w;
}

// ----------------------------------------------------------------------------
// Seeded k-means with k-means++ initialization, >= `restarts` restarts, ties
// broken toward the lowest cluster index, empty clusters reseeded from the
// farthest point.
// ----------------------------------------------------------------------------

struct KmeansResult {
    std::vector<int> assign;
    Matrix centroids;  // k × d
    double inertia = 0.0;
};

inline KmeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, int restarts = 10,
                           int max_iter = 100) {
    const std::size_t n = x.rows(), d = x.cols();
    if (k == 0 || k > n)
        throw Error(ErrorCode::invalid_argument, "kmeans: need 1 <= k <= n");
    auto dist2 = [&](std::size_t i, const double* c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dd = x(i, j) - c[j];
            s += dd * dd;
        }
        return s;
    };

    KmeansResult best;
    for (int r = 0; r < std::max(1, restarts); ++r) {
        SplitMix rng(derive_seed(seed, "kmeans", static_cast<std::uint64_t>(r)));

        // k-means++ seeding
        Matrix cent(k, d);
        std::vector<double> mind2(n, std::numeric_limits<double>::infinity());
        std::size_t first = static_cast<std::size_t>(bounded_rand(rng, n));
        for (std::size_t j = 0; j < d; ++j) cent(0, j) = x(first, j);
        for (std::size_t cidx = 1; cidx < k; ++cidx) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                mind2[i] = std::min(mind2[i], dist2(i, cent.row(cidx - 1)));
                total += mind2[i];
            }
            std::size_t pick = 0;
            if (total > 0.0) {
                const double u = rng.uniform() * total;
                double acc = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += mind2[i];
                    if (acc >= u) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<std::size_t>(bounded_rand(rng, n));
            }
            for (std::size_t j = 0; j < d; ++j) cent(cidx, j) = x(pick, j);
        }

        std::vector<int> assign(n, 0);
        for (int it = 0; it < max_iter; ++it) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int bi = 0;
                double bd = dist2(i, cent.row(0));
                for (std::size_t cidx = 1; cidx < k; ++cidx) {
                    const double dd = dist2(i, cent.row(cidx));
                    if (dd < bd) {  // strict: ties keep the lower index
                        bd = dd;
                        bi = static_cast<int>(cidx);
                    }
                }
                if (assign[i] != bi) {
                    assign[i] = bi;
                    changed = true;
                }
            }
            Matrix sums(k, d);
            std::vector<std::size_t> cnt(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                ++cnt[static_cast<std::size_t>(assign[i])];
                for (std::size_t j = 0; j < d; ++j) sums(static_cast<std::size_t>(assign[i]), j) += x(i, j);
            }
            for (std::size_t cidx = 0; cidx < k; ++cidx) {
                if (cnt[cidx] == 0) {
                    // reseed from the point farthest from its centroid
                    std::size_t far = 0;
                    double fard = -1.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double dd = dist2(i, cent.row(static_cast<std::size_t>(assign[i])));
                        if (dd > fard) {
                            fard = dd;
                            far = i;
                        }
                    }
                    for (std::size_t j = 0; j < d; ++j) cent(cidx, j) = x(far, j);
                    changed = true;
                } else {
                    for (std::size_t j = 0; j < d; ++j)
                        cent(cidx, j) = sums(cidx, j) / static_cast<double>(cnt[cidx]);
                }
            }
            if (!changed && it > 0) break;
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += dist2(i, cent.row(static_cast<std::size_t>(assign[i])));

        if (best.assign.empty() || inertia < best.inertia) {
            best.assign = std::move(assign);
            best.centroids = std::move(cent);
            best.inertia = inertia;
        }
    }
    return best;
}

// ----------------------------------------------------------------------------
// Normalized spectral clustering. The random-walk Laplacian L_rw = I - D^-1 W
// shares eigenvalues with the symmetric L_sym = I - D^-1/2 W D^-1/2, and its
// eigenvectors are D^-1/2 times the symmetric ones, so we solve the stable
// symmetric problem with Jacobi and back-transform.
// ----------------------------------------------------------------------------

struct SpectralModel {
    Matrix w;
    std::vector<double> degrees;
    std::vector<double> eigenvalues;  // full spectrum of L_sym, ascending
    Matrix embedding;                 // M × c back-transformed eigenvectors (unit columns)
    std::vector<int> assignments;     // 0-based clusters
    double gamma = 0.18;
    std::size_t c = 1;
    std::uint64_t seed = 0;
    double kmeans_inertia = 0.0;
};

inline SpectralModel spectral_cluster(Matrix w, std::size_t c, std::uint64_t seed,
                                      double gamma = 0.18, int kmeans_restarts = 10) {
    const std::size_t m = w.rows();
    if (m == 0 || w.cols() != m)
        throw Error(ErrorCode::invalid_argument, "spectral_cluster: W must be square and nonempty");
    if (c < 1 || c > m)
        throw Error(ErrorCode::invalid_argument, "spectral_cluster: need 1 <= c <= M");

    SpectralModel model;
    model.gamma = gamma;
    model.c = c;
    model.seed = seed;
    model.degrees.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += w(i, j);
        if (!(s > 0.0))
            throw Error(ErrorCode::invalid_data, "spectral_cluster: nonpositive degree");
        model.degrees[i] = s;
    }

    Matrix lsym(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double v = w(i, j) / std::sqrt(model.degrees[i] * model.degrees[j]);
            lsym(i, j) = (i == j ? 1.0 : 0.0) - v;
        }
    EigenDecomposition eig = jacobi_eigen_symmetric(std::move(lsym));
    model.eigenvalues = eig.values;

    model.embedding = Matrix(m, c);
    for (std::size_t k = 0; k < c; ++k) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double u = eig.vectors(i, k) / std::sqrt(model.degrees[i]);
            model.embedding(i, k) = u;
            norm2 += u * u;
        }
        const double inv = (norm2 > 0.0) ? 1.0 / std::sqrt(norm2) : 1.0;
        for (std::size_t i = 0; i < m; ++i) model.embedding(i, k) *= inv;
    }

    KmeansResult km = kmeans(model.embedding, c, derive_seed(seed, "spectral"), kmeans_restarts);
    model.assignments = std::move(km.assign);
    model.kmeans_inertia = km.inertia;
    model.w = std::move(w);
    return model;
}

// ----------------------------------------------------------------------------
// Cluster meta-statistics (Table-1 style): size, gender split, age mean (sd),
// Welch two-tail t-test of the cluster's ages against all other subjects
// pooled, significance marked at p <= 0.05.
// ----------------------------------------------------------------------------

struct ClusterStats {
    std::size_t cluster = 0;
    std::size_t size = 0;
    double pct_male = 0.0, pct_female = 0.0;
    double age_mean = 0.0, age_sd = 0.0;
    std::optional<TestResult> age_vs_rest;
    bool significant = false;
    std::string note;
};

inline std::vector<ClusterStats> cluster_statistics(std::span<const int> assignments,
                                                    std::span<const double> ages,
                                                    std::span<const Gender> genders,
                                                    std::size_t c) {
    const std::size_t n = assignments.size();
    if (ages.size() != n || genders.size() != n)
        throw Error(ErrorCode::invalid_argument, "cluster_statistics: demographics length mismatch");
    std::vector<ClusterStats> out;
    for (std::size_t k = 0; k < c; ++k) {
        ClusterStats cs;
        cs.cluster = k;
        std::vector<double> in_ages, rest_ages;
        std::size_t males = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (assignments[i] == static_cast<int>(k)) {
                in_ages.push_back(ages[i]);
                if (genders[i] == Gender::male) ++males;
            } else {
                rest_ages.push_back(ages[i]);
            }
        }
        cs.size = in_ages.size();
        if (cs.size > 0) {
            cs.pct_male = 100.0 * static_cast<double>(males) / static_cast<double>(cs.size);
            cs.pct_female = 100.0 - cs.pct_male;
            cs.age_mean = mean_of(in_ages);
            cs.age_sd = sample_sd(in_ages);
        }
        if (cs.size >= 2 && rest_ages.size() >= 2) {
            cs.age_vs_rest = welch_two_tail_ttest(in_ages, rest_ages);
            cs.significant = cs.age_vs_rest->p <= 0.05;
        } else {
            cs.note = "t-test skipped (needs >= 2 subjects per side)";
        }
        out.push_back(std::move(cs));
    }
    return out;
}

// ----------------------------------------------------------------------------
// Rendering: similarity CSV and a cluster-ordered viridis heatmap SVG. The
// ordering groups subjects by cluster and sorts each cluster by similarity to
// its medoid, reproducing the block structure of the similarity figure.
// ----------------------------------------------------------------------------

inline std::vector<std::size_t> heatmap_order(const SpectralModel& model) {
    const std::size_t m = model.w.rows();
    std::vector<std::size_t> order;
    for (std::size_t k = 0; k < model.c; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < m; ++i)
            if (model.assignments[i] == static_cast<int>(k)) members.push_back(i);
        if (members.empty()) continue;
        std::size_t medoid = members[0];
        double best = -1.0;
        for (std::size_t a : members) {
            double s = 0.0;
            for (std::size_t b : members) s += model.w(a, b);
            if (s > best) {
                best = s;
                medoid = a;
            }
        }
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            const double sa = model.w(a, medoid), sb = model.w(b, medoid);
            if (sa != sb) return sa > sb;
            return a < b;
        });
        order.insert(order.end(), members.begin(), members.end());
    }
    return order;
}

inline std::array<int, 3> viridis_rgb(double t) {
    static const double stops[9][3] = {{68, 1, 84},    {72, 40, 120},  {62, 74, 137},
                                       {49, 104, 142}, {38, 130, 142}, {31, 158, 137},
                                       {53, 183, 121}, {109, 205, 89}, {253, 231, 37}};
    t = std::clamp(t, 0.0, 1.0);
    const double pos = t * 8.0;
    const auto i = static_cast<std::size_t>(std::min(7.0, std::floor(pos)));
    const double f = pos - static_cast<double>(i);
    std::array<int, 3> rgb{};
    for (int ch = 0; ch < 3; ++ch)
        rgb[static_cast<std::size_t>(ch)] = static_cast<int>(
            std::lround(stops[i][ch] + f * (stops[i + 1][ch] - stops[i][ch])));
    return rgb;
}

inline void write_similarity_csv(const std::filesystem::path& path, const Matrix& w,
                                 std::span<const std::string> ids) {
    std::ofstream f = detail::open_output(path);
    f << "subject";
    for (const std::string& id : ids) f << ',' << id;
    f << '\n';
    for (std::size_t i = 0; i < w.rows(); ++i) {
        f << ids[i];
        for (std::size_t j = 0; j < w.cols(); ++j) f << ',' << format_double(w(i, j));
        f << '\n';
    }
}

inline void write_heatmap_svg(const std::filesystem::path& path, const SpectralModel& model,
                              std::span<const std::string> ids) {
    const std::vector<std::size_t> order = heatmap_order(model);
    const std::size_t m = order.size();
    const int cell = m <= 64 ? 10 : 6;
    const int margin = 70;
    const int size = margin + cell * static_cast<int>(m) + 10;

    std::ofstream f = detail::open_output(path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t cix = 0; cix < m; ++cix) {
            const double v = model.w(order[r], order[cix]);
            const auto rgb = viridis_rgb(v);
            f << "<rect x=\"" << margin + cell * static_cast<int>(cix) << "\" y=\""
              << margin + cell * static_cast<int>(r) << "\" width=\"" << cell << "\" height=\""
              << cell << "\" fill=\"rgb(" << rgb[0] << ',' << rgb[1] << ',' << rgb[2] << ")\"/>\n";
        }
    // cluster boundary lines
    std::size_t off = 0;
    for (std::size_t k = 0; k < model.c; ++k) {
        std::size_t sz = 0;
        for (int a : model.assignments)
            if (a == static_cast<int>(k)) ++sz;
        off += sz;
        if (off == 0 || off >= m) continue;
        const int p = margin + cell * static_cast<int>(off);
        f << "<line x1=\"" << p << "\" y1=\"" << margin << "\" x2=\"" << p << "\" y2=\""
          << margin + cell * static_cast<int>(m) << "\" stroke=\"white\" stroke-width=\"2\"/>\n";
        f << "<line x1=\"" << margin << "\" y1=\"" << p << "\" x2=\""
          << margin + cell * static_cast<int>(m) << "\" y2=\"" << p
          << "\" stroke=\"white\" stroke-width=\"2\"/>\n";
    }
    if (m <= 48) {
        for (std::size_t r = 0; r < m; ++r) {
            f << "<text x=\"" << margin - 4 << "\" y=\""
              << margin + cell * static_cast<int>(r) + cell - 2
              << "\" font-size=\"8\" text-anchor=\"end\" font-family=\"monospace\">"
              << ids[order[r]] << "</text>\n";
        }
    }
    f << "</svg>\n";
}

}  // namespace painpipe
