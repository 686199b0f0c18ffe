#include <gtest/gtest.h>

#include <cmath>

#include "painpipe/common.hpp"
#include "painpipe/linalg.hpp"

using namespace painpipe;

TEST(Matrix, RowMajorLayout) {
    Matrix m(2, 3);
    m(0, 0) = 1;
    m(0, 2) = 3;
    m(1, 1) = 5;
    EXPECT_EQ(m.data()[0], 1);
    EXPECT_EQ(m.data()[2], 3);
    EXPECT_EQ(m.data()[4], 5);
    EXPECT_EQ(m.row(1)[1], 5);
}

TEST(Cholesky, SolvesSpdSystem) {
    // A = [[4,2],[2,3]], b = [10, 8] -> x = [1.75, 1.5] (hand-solved).
    Matrix a(2, 2);
    a(0, 0) = 4;
    a(0, 1) = 2;
    a(1, 0) = 2;
    a(1, 1) = 3;
    const std::vector<double> b{10.0, 8.0};
    const std::vector<double> x = cholesky_solve(a, b);
    EXPECT_NEAR(x[0], 1.75, 1e-12);
    EXPECT_NEAR(x[1], 1.5, 1e-12);
}

TEST(Cholesky, RejectsNonSpd) {
    Matrix a(2, 2);
    a(0, 0) = 1;
    a(0, 1) = 2;
    a(1, 0) = 2;
    a(1, 1) = 1;  // eigenvalues 3, -1
    EXPECT_THROW(cholesky_solve(a, std::vector<double>{1.0, 1.0}), Error);
}

TEST(Jacobi, AnalyticTwoByTwo) {
    // [[2,1],[1,2]] has eigenvalues 1 and 3 with eigenvectors (1,-1)/sqrt2,
    // (1,1)/sqrt2.
    Matrix a(2, 2);
    a(0, 0) = 2;
    a(0, 1) = 1;
    a(1, 0) = 1;
    a(1, 1) = 2;
    const EigenDecomposition e = jacobi_eigen_symmetric(a);
    ASSERT_EQ(e.values.size(), 2u);
    EXPECT_NEAR(e.values[0], 1.0, 1e-12);
    EXPECT_NEAR(e.values[1], 3.0, 1e-12);
    const double inv = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(std::fabs(e.vectors(0, 0)), inv, 1e-10);
    EXPECT_NEAR(std::fabs(e.vectors(1, 0)), inv, 1e-10);
    // Opposite signs for the first eigenvector, same signs for the second.
    EXPECT_LT(e.vectors(0, 0) * e.vectors(1, 0), 0.0);
    EXPECT_GT(e.vectors(0, 1) * e.vectors(1, 1), 0.0);
}

TEST(Jacobi, RandomSymmetricReconstructs) {
    SplitMix rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 6;
        Matrix a(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform(-1.0, 1.0);
        const EigenDecomposition e = jacobi_eigen_symmetric(a);
        // Ascending order
        for (std::size_t k = 1; k < n; ++k) EXPECT_LE(e.values[k - 1], e.values[k]);
        // A v_k = lambda_k v_k and orthonormal columns
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                double av = 0.0;
                for (std::size_t j = 0; j < n; ++j) av += a(i, j) * e.vectors(j, k);
                EXPECT_NEAR(av, e.values[k] * e.vectors(i, k), 1e-9);
            }
            for (std::size_t l = 0; l < n; ++l) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += e.vectors(i, k) * e.vectors(i, l);
                EXPECT_NEAR(dot, k == l ? 1.0 : 0.0, 1e-10);
            }
        }
    }
}

TEST(CubicSpline, InterpolatesKnotsExactly) {
    const std::vector<double> x{0.0, 1.0, 2.5, 4.0, 5.0};
    const std::vector<double> y{1.0, 3.0, -2.0, 0.5, 4.0};
    const CubicSpline s(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(s(x[i]), y[i], 1e-12);
}

TEST(CubicSpline, NaturalBoundarySecondDerivativeNearZero) {
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0, 4.0};
    const std::vector<double> y{0.0, 1.0, 0.0, -1.0, 0.0};
    const CubicSpline s(x, y);
    const double h = 1e-4;
    const double d2a = (s(x.front() + 2 * h) - 2 * s(x.front() + h) + s(x.front())) / (h * h);
    const double d2b = (s(x.back()) - 2 * s(x.back() - h) + s(x.back() - 2 * h)) / (h * h);
    EXPECT_NEAR(d2a, 0.0, 1e-3);
    EXPECT_NEAR(d2b, 0.0, 1e-3);
}

TEST(CubicSpline, LinearDataStaysLinear) {
    // A natural spline through collinear points is that line, including
    // extrapolation.
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> y{1.0, 3.0, 5.0, 7.0};
    const CubicSpline s(x, y);
    for (double t : {-1.0, 0.5, 1.7, 2.9, 4.5}) EXPECT_NEAR(s(t), 1.0 + 2.0 * t, 1e-10);
}

TEST(CubicSpline, TwoPointsDegradesToLinear) {
    const CubicSpline s(std::vector<double>{0.0, 2.0}, std::vector<double>{1.0, 5.0});
    EXPECT_NEAR(s(1.0), 3.0, 1e-12);
    EXPECT_NEAR(s(3.0), 7.0, 1e-12);  // linear extrapolation
}
