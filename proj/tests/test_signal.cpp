#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "painpipe/common.hpp"
#include "painpipe/signal.hpp"

using namespace painpipe;

TEST(Irf, BatemanShape) {
    const IrfParams irf;
    EXPECT_DOUBLE_EQ(irf_value(irf, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(irf_value(irf, -1.0), 0.0);
    // Analytic peak: t* = ln(tau2/tau1) tau1 tau2 / (tau2 - tau1), frozen.
    EXPECT_NEAR(irf_value(irf, 1.1769951036140713), 0.3469754742067062, 1e-12);
    EXPECT_NEAR(irf_value(irf, 1.0), 0.34293352159690665, 1e-12);
    // Strictly below peak away from it
    EXPECT_LT(irf_value(irf, 0.4), 0.3469754742067062);
    EXPECT_LT(irf_value(irf, 3.0), 0.3469754742067062);
}

TEST(Decimate, BoxcarMeansAndTruncation) {
    const std::vector<double> x{1, 2, 3, 4, 5, 6};
    const std::vector<double> d2 = decimate_boxcar(x, 2);
    ASSERT_EQ(d2.size(), 3u);
    EXPECT_DOUBLE_EQ(d2[0], 1.5);
    EXPECT_DOUBLE_EQ(d2[1], 3.5);
    EXPECT_DOUBLE_EQ(d2[2], 5.5);
    const std::vector<double> d4 = decimate_boxcar(x, 4);  // partial tail dropped
    ASSERT_EQ(d4.size(), 1u);
    EXPECT_DOUBLE_EQ(d4[0], 2.5);
    EXPECT_EQ(decimate_boxcar(x, 1), x);
}

namespace {

// Builds SC = tonic + driver (*) IRF at 32 Hz from planted impulses.
struct Planted {
    std::vector<double> sc;
    std::vector<double> driver;  // impulse train on the 32 Hz grid
    double fs = 32.0;
};

Planted plant_sc(double duration_s, const std::vector<std::pair<double, double>>& impulses,
                 double tonic_level) {
    Planted p;
    const auto n = static_cast<std::size_t>(duration_s * p.fs);
    p.driver.assign(n, 0.0);
    for (const auto& [t, a] : impulses)
        p.driver[static_cast<std::size_t>(t * p.fs)] += a;
    p.sc.assign(n, tonic_level);
    const double dt = 1.0 / p.fs;
    const IrfParams irf;
    for (std::size_t j = 0; j < n; ++j) {
        if (p.driver[j] == 0.0) continue;
        for (std::size_t i = j; i < n; ++i) {
            const double h = irf_value(irf, static_cast<double>(i - j) * dt) * dt;
            if (i > j + 16 * 32) break;  // IRF support
            p.sc[i] += p.driver[j] * h;
        }
    }
    return p;
}

}  // namespace

TEST(Deconvolve, RecoversPlantedDriverAndTonic) {
    const Planted p = plant_sc(
        90.0, {{10.0, 3.0}, {25.5, 2.0}, {26.8, 1.5}, {50.0, 4.0}, {71.2, 2.5}}, 1.5);
    const ScDecomposition d = deconvolve_sc(p.sc, p.fs);
    ASSERT_EQ(d.driver.size(), p.driver.size());
    EXPECT_GE(oracles::correlation(d.driver, p.driver), 0.95);
    EXPECT_LE(d.residual_rms, 0.01 * d.signal_rms);
    // Tonic close to the planted constant level away from onset effects.
    double tmax = 0.0;
    for (std::size_t i = 0; i < d.tonic.size(); ++i)
        tmax = std::max(tmax, std::fabs(d.tonic[i] - 1.5));
    EXPECT_LE(tmax, 0.12);
}

TEST(Deconvolve, ScrCountAndOnsets) {
    // Well-separated impulse groups -> one SCR per group, onsets near the
    // planted times.
    const Planted p = plant_sc(80.0, {{12.0, 3.0}, {35.0, 2.5}, {60.0, 3.5}}, 2.0);
    const ScDecomposition d = deconvolve_sc(p.sc, p.fs);
    ASSERT_EQ(d.scrs.size(), 3u);
    EXPECT_NEAR(d.scrs[0].onset_time, 12.0, 0.5);
    EXPECT_NEAR(d.scrs[1].onset_time, 35.0, 0.5);
    EXPECT_NEAR(d.scrs[2].onset_time, 60.0, 0.5);
    // Reconvolved amplitude of an isolated unit-group impulse a at peak is
    // a * h(t*) / fs; planted 3.0 -> 3.0 * 0.3469754742067062 / 32.
    EXPECT_NEAR(d.scrs[0].amplitude, 3.0 * 0.3469754742067062 / 32.0, 0.01);
    for (const ScrEvent& s : d.scrs) EXPECT_GE(s.amplitude, 0.01);
}

TEST(Deconvolve, ThresholdSuppressesTinyScrs) {
    // Amplitude below 0.01 uS after reconvolution must not be reported.
    const Planted p = plant_sc(60.0, {{20.0, 3.0}, {40.0, 0.5}}, 1.0);
    // 0.5 * 0.347 / 32 = 0.0054 < 0.01
    const ScDecomposition d = deconvolve_sc(p.sc, p.fs);
    ASSERT_EQ(d.scrs.size(), 1u);
    EXPECT_NEAR(d.scrs[0].onset_time, 20.0, 0.5);
}

TEST(Deconvolve, DecimatesHigherRates) {
    const Planted p = plant_sc(60.0, {{15.0, 3.0}}, 1.2);
    // Upsample by sample-and-hold to 128 Hz; boxcar decimation recovers a
    // 32 Hz series of the same length.
    std::vector<double> hi;
    hi.reserve(p.sc.size() * 4);
    for (double v : p.sc)
        for (int r = 0; r < 4; ++r) hi.push_back(v);
    const ScDecomposition d = deconvolve_sc(hi, 128.0);
    EXPECT_DOUBLE_EQ(d.fs, 32.0);
    EXPECT_EQ(d.sc.size(), p.sc.size());
    ASSERT_EQ(d.scrs.size(), 1u);
    EXPECT_NEAR(d.scrs[0].onset_time, 15.0, 0.5);
}

TEST(Deconvolve, InputValidation) {
    std::vector<double> sc(400, 1.0);
    EXPECT_THROW(deconvolve_sc(sc, 0.0), Error);
    EXPECT_THROW(deconvolve_sc(std::vector<double>(100, 1.0), 32.0), Error);  // < 10 s
    sc[5] = std::nan("");
    EXPECT_THROW(deconvolve_sc(sc, 32.0), Error);
}

TEST(ScWindowFeatures, ConstantDriverIntegralIsExact) {
    // Constant driver 0.5 across a 6 s window -> trapezoidal integral 3.0.
    ScDecomposition d;
    d.fs = 32.0;
    d.sc.assign(400, 0.0);
    d.tonic.assign(400, 1.25);
    d.driver.assign(400, 0.5);
    const auto f = sc_window_features(d, 0.0, 6.0);
    EXPECT_DOUBLE_EQ(f[0], 0.0);  // no SCRs
    EXPECT_DOUBLE_EQ(f[1], 0.0);
    EXPECT_DOUBLE_EQ(f[2], 0.5);  // driver mean
    EXPECT_DOUBLE_EQ(f[3], 0.5);  // driver max
    EXPECT_DOUBLE_EQ(f[4], 3.0);  // trapezoidal integral
    EXPECT_DOUBLE_EQ(f[5], 1.25);
}

TEST(ScWindowFeatures, CountsScrsByOnsetInterval) {
    ScDecomposition d;
    d.fs = 32.0;
    d.sc.assign(640, 0.0);
    d.tonic.assign(640, 0.0);
    d.driver.assign(640, 0.0);
    d.scrs = {{2.0, 0.05}, {5.9, 0.02}, {6.0, 0.03}, {11.0, 0.04}};
    const auto f = sc_window_features(d, 0.0, 6.0);
    EXPECT_DOUBLE_EQ(f[0], 2.0);  // onsets at 2.0 and 5.9; 6.0 excluded
    EXPECT_NEAR(f[1], 0.07, 1e-12);
    const auto g = sc_window_features(d, 6.0, 6.0);
    EXPECT_DOUBLE_EQ(g[0], 2.0);  // 6.0 and 11.0
    EXPECT_THROW(sc_window_features(d, 15.0, 6.0), Error);  // beyond span
}

TEST(RPeaks, CleanSyntheticEcgAt72Bpm) {
    const double fs = 256.0, bpm = 72.0;
    const double period = 60.0 / bpm;
    const auto n = static_cast<std::size_t>(30.0 * fs);
    std::vector<double> ecg(n, 0.0);
    std::vector<double> truth;
    for (double t = 1.0; t < 29.0; t += period) truth.push_back(t);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        for (double r : truth) {
            const double dt = t - r;
            ecg[i] += 1.2 * std::exp(-dt * dt / (2 * 0.011 * 0.011));   // R
            ecg[i] += 0.25 * std::exp(-(dt - 0.25) * (dt - 0.25) / (2 * 0.04 * 0.04));  // T
        }
    }
    const IbiSeries s = detect_r_peaks(ecg, fs);
    ASSERT_EQ(s.r_peak_times.size(), truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i)
        EXPECT_NEAR(s.r_peak_times[i], truth[i], 0.01);
    ASSERT_EQ(s.ibis.size(), truth.size() - 1);
    for (double ibi : s.ibis) EXPECT_NEAR(ibi, period * 1000.0, 15.0);

    // Scale invariance: x1000 gives identical peaks.
    std::vector<double> scaled = ecg;
    for (double& v : scaled) v *= 1000.0;
    const IbiSeries s2 = detect_r_peaks(scaled, fs);
    ASSERT_EQ(s2.r_peak_times.size(), s.r_peak_times.size());
    for (std::size_t i = 0; i < s2.r_peak_times.size(); ++i)
        EXPECT_NEAR(s2.r_peak_times[i], s.r_peak_times[i], 0.005);
}

TEST(RPeaks, EdgeCases) {
    EXPECT_THROW(detect_r_peaks(std::vector<double>(1000, 0.0), 50.0), Error);  // fs < 100
    EXPECT_THROW(detect_r_peaks(std::vector<double>(100, 0.0), 256.0), Error);  // < 2 s
    const IbiSeries flat = detect_r_peaks(std::vector<double>(2000, 3.3), 256.0);
    EXPECT_TRUE(flat.r_peak_times.empty());
    EXPECT_TRUE(flat.ibis.empty());
}

TEST(IbiWindowFeatures, FrozenHandExample) {
    // IBIs 800/810/820/830 ms -> mean 815, RMSSD 10, sample SD 12.9099...,
    // slope 10 ms per beat.
    IbiSeries s;
    s.r_peak_times = {0.0, 0.8, 1.61, 2.43, 3.26};
    s.ibis = {800.0, 810.0, 820.0, 830.0};
    const auto f = ibi_window_features(s, 0.0, 4.0);
    ASSERT_TRUE(f.has_value());
    EXPECT_NEAR((*f)[0], 815.0, 1e-12);
    EXPECT_NEAR((*f)[1], 10.0, 1e-12);
    EXPECT_NEAR((*f)[2], 12.909944487358056, 1e-12);
    EXPECT_NEAR((*f)[3], 10.0, 1e-12);
}

TEST(IbiWindowFeatures, SelectionBySecondPeakAndMinimumCount) {
    IbiSeries s;
    s.r_peak_times = {0.0, 0.8, 1.6, 2.4, 3.2};
    s.ibis = {800.0, 800.0, 800.0, 800.0};
    // Window [0, 1.7): second peaks 0.8 and 1.6 -> two IBIs.
    const auto f = ibi_window_features(s, 0.0, 1.7);
    ASSERT_TRUE(f.has_value());
    EXPECT_DOUBLE_EQ((*f)[0], 800.0);
    // Window [0, 1.0): only one IBI -> nullopt.
    EXPECT_FALSE(ibi_window_features(s, 0.0, 1.0).has_value());
    EXPECT_FALSE(ibi_window_features(s, 10.0, 12.0).has_value());
}
