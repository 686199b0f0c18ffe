// ============================================================================
// linalg.hpp - small dense matrix type, Cholesky solve, cyclic Jacobi
// eigensolver for symmetric matrices, natural cubic spline interpolation
// ============================================================================
#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "painpipe/common.hpp"

namespace painpipe {

// Row-major dense matrix. Sized for subject-count scale problems (M <= a few
// hundred), not for BLAS-level workloads.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    double* row(std::size_t i) { return a_.data() + i * cols_; }
    const double* row(std::size_t i) const { return a_.data() + i * cols_; }

    std::vector<double>& data() { return a_; }
    const std::vector<double>& data() const { return a_; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

// ----------------------------------------------------------------------------
// Cholesky factorization / SPD solve (in-place on copies; n is small)
// ----------------------------------------------------------------------------

// Solves G x = b for symmetric positive definite G. Throws on a non-PD matrix.
inline std::vector<double> cholesky_solve(const Matrix& g, std::span<const double> b) {
    const std::size_t n = g.rows();
    if (g.cols() != n || b.size() != n)
        throw Error(ErrorCode::invalid_argument, "cholesky_solve: shape mismatch");
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = g(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0))
            throw Error(ErrorCode::numeric, "cholesky_solve: matrix not positive definite");
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = g(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    std::vector<double> y(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

// ----------------------------------------------------------------------------
// Cyclic Jacobi eigensolver for symmetric matrices
// ----------------------------------------------------------------------------

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column k is the eigenvector of values[k]
    int sweeps = 0;
};

inline double offdiagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

// Diagonalizes a symmetric matrix with cyclic Jacobi rotations. Converges when
// the off-diagonal Frobenius norm falls below tol * max(1, ||A||_F); throws a
// numeric error after max_sweeps.
inline EigenDecomposition jacobi_eigen_symmetric(Matrix a, double tol = 1e-10, int max_sweeps = 100) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw Error(ErrorCode::invalid_argument, "jacobi: matrix not square");
    Matrix v = Matrix::identity(n);

    double frob = 0.0;
    for (double x : a.data()) frob += x * x;
    frob = std::sqrt(frob);
    const double target = tol * std::max(1.0, frob);

    int sweeps = 0;
    while (offdiagonal_norm(a) > target) {
        if (++sweeps > max_sweeps)
            throw Error(ErrorCode::numeric, "jacobi eigensolver did not converge within sweep limit");
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p), aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                // smaller-magnitude root keeps rotations stable
                const double t = (theta >= 0.0)
                                     ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                                     : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (a(i, i) != a(j, j)) return a(i, i) < a(j, j);
        return i < j;
    });

    EigenDecomposition out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    out.sweeps = sweeps;
    return out;
}

// ----------------------------------------------------------------------------
// Natural cubic spline through (x_i, y_i), x strictly increasing.
// Evaluation outside [x_0, x_n] extrapolates linearly from the end segments.
// ----------------------------------------------------------------------------

class CubicSpline {
public:
    CubicSpline(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n != y_.size() || n == 0)
            throw Error(ErrorCode::invalid_argument, "spline: size mismatch or empty");
        for (std::size_t i = 1; i < n; ++i)
            if (!(x_[i] > x_[i - 1]))
                throw Error(ErrorCode::invalid_argument, "spline: x not strictly increasing");
        m_.assign(n, 0.0);
        if (n < 3) return;  // degenerates to linear interpolation

        // Tridiagonal system for second derivatives, natural boundary (m0 = mn = 0).
        std::vector<double> sub(n, 0.0), diag(n, 0.0), sup(n, 0.0), rhs(n, 0.0);
        diag[0] = diag[n - 1] = 1.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1];
            const double h1 = x_[i + 1] - x_[i];
            sub[i] = h0;
            diag[i] = 2.0 * (h0 + h1);
            sup[i] = h1;
            rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
        }
        for (std::size_t i = 1; i < n; ++i) {
            const double w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        m_[n - 1] = rhs[n - 1] / diag[n - 1];
        for (std::size_t ii = n - 1; ii-- > 0;)
            m_[ii] = (rhs[ii] - sup[ii] * m_[ii + 1]) / diag[ii];
    }

    double operator()(double x) const {
        const std::size_t n = x_.size();
        if (n == 1) return y_[0];
        std::size_t i;
        if (x <= x_[0]) {
            i = 0;
        } else if (x >= x_[n - 1]) {
            i = n - 2;
        } else {
            i = static_cast<std::size_t>(
                    std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
        }
        const double h = x_[i + 1] - x_[i];
        if (x < x_[0] || x > x_[n - 1]) {
            // linear extrapolation using the boundary slope
            const double edge = (x < x_[0]) ? x_[0] : x_[n - 1];
            return (*this)(edge) + slope_at(i, edge) * (x - edge);
        }
        const double a = (x_[i + 1] - x) / h;
        const double b = (x - x_[i]) / h;
        return a * y_[i] + b * y_[i + 1] +
               ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
    }

private:
    double slope_at(std::size_t i, double x) const {
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h;
        const double b = (x - x_[i]) / h;
        return (y_[i + 1] - y_[i]) / h +
               ((3.0 * b * b - 1.0) * m_[i + 1] - (3.0 * a * a - 1.0) * m_[i]) * h / 6.0;
    }

    std::vector<double> x_, y_, m_;
};

}  // namespace painpipe
