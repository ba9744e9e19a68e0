#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace thermocrn {

using Vec = std::vector<double>;

/// Dense row-major matrix, sized once at construction.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    Vec col(int j) const {
        Vec v(rows);
        for (int i = 0; i < rows; ++i) v[i] = (*this)(i, j);
        return v;
    }
    Vec row(int i) const {
        Vec v(cols);
        for (int j = 0; j < cols; ++j) v[j] = (*this)(i, j);
        return v;
    }
};

inline Mat transpose(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

inline Vec matvec(const Mat& m, const Vec& x) {
    if (static_cast<int>(x.size()) != m.cols) throw std::invalid_argument("matvec: size mismatch");
    Vec y(m.rows, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Mat matmul(const Mat& A, const Mat& B) {
    if (A.cols != B.rows) throw std::invalid_argument("matmul: size mismatch");
    Mat C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
            const double aik = A(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
        }
    return C;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vec& a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

inline Vec axpy(double alpha, const Vec& x, const Vec& y) {
    Vec r(y);
    for (size_t i = 0; i < x.size(); ++i) r[i] += alpha * x[i];
    return r;
}

inline Vec scaled(const Vec& x, double alpha) {
    Vec r(x);
    for (double& v : r) v *= alpha;
    return r;
}

/// Modified Gram-Schmidt with re-orthogonalization; drops near-dependent inputs.
inline std::vector<Vec> orthonormalize(const std::vector<Vec>& basis, double drop_tol = 1e-12) {
    std::vector<Vec> q;
    for (const Vec& v0 : basis) {
        Vec v = v0;
        for (int pass = 0; pass < 2; ++pass)
            for (const Vec& u : q) {
                const double c = dot(u, v);
                for (size_t i = 0; i < v.size(); ++i) v[i] -= c * u[i];
            }
        const double n = norm2(v);
        if (n > drop_tol * (1.0 + norm2(v0))) q.push_back(scaled(v, 1.0 / n));
    }
    return q;
}

/// Cholesky solve of a symmetric positive definite system; throws if the
/// factorization breaks down.
inline Vec cholesky_solve(Mat A, Vec b) {
    const int n = A.rows;
    if (A.cols != n || static_cast<int>(b.size()) != n) throw std::invalid_argument("cholesky_solve: size mismatch");
    for (int j = 0; j < n; ++j) {
        double d = A(j, j);
        for (int k = 0; k < j; ++k) d -= A(j, k) * A(j, k);
        if (!(d > 0.0)) throw std::runtime_error("cholesky_solve: matrix not positive definite");
        d = std::sqrt(d);
        A(j, j) = d;
        for (int i = j + 1; i < n; ++i) {
            double s = A(i, j);
            for (int k = 0; k < j; ++k) s -= A(i, k) * A(j, k);
            A(i, j) = s / d;
        }
    }
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= A(i, k) * b[k];
        b[i] = s / A(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= A(k, i) * b[k];
        b[i] = s / A(i, i);
    }
    return b;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline Vec symmetric_eigenvalues(Mat A, int max_sweeps = 64) {
    const int n = A.rows;
    if (A.cols != n) throw std::invalid_argument("symmetric_eigenvalues: not square");
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
        if (off < std::numeric_limits<double>::epsilon() * std::numeric_limits<double>::epsilon()) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (A(p, q) == 0.0) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
            }
    }
    Vec ev(n);
    for (int i = 0; i < n; ++i) ev[i] = A(i, i);
    return ev;
}

inline double max_abs(const Mat& m) {
    double v = 0.0;
    for (double x : m.a) v = std::max(v, std::abs(x));
    return v;
}

/// Row echelon reduction in floating point with full pivoting threshold;
/// returns pivot columns. Used only when exact rational arithmetic is not
/// applicable.
inline std::vector<int> rref_double(Mat& m, double tol) {
    std::vector<int> pivots;
    int row = 0;
    for (int col = 0; col < m.cols && row < m.rows; ++col) {
        int best = -1;
        double bestv = tol;
        for (int i = row; i < m.rows; ++i)
            if (std::abs(m(i, col)) > bestv) {
                bestv = std::abs(m(i, col));
                best = i;
            }
        if (best < 0) continue;
        for (int j = 0; j < m.cols; ++j) std::swap(m(row, j), m(best, j));
        const double piv = m(row, col);
        for (int j = 0; j < m.cols; ++j) m(row, j) /= piv;
        for (int i = 0; i < m.rows; ++i) {
            if (i == row) continue;
            const double f = m(i, col);
            if (f == 0.0) continue;
            for (int j = 0; j < m.cols; ++j) m(i, j) -= f * m(row, j);
        }
        pivots.push_back(col);
        ++row;
    }
    return pivots;
}

}  // namespace thermocrn
