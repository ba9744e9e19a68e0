#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "thermocrn/linalg.hpp"

namespace thermocrn {

/// Exact rational number on 64-bit numerator/denominator. Intermediate
/// products run through 128-bit arithmetic; anything that would not fit
/// back into 64 bits throws, and callers fall back to floating point.
struct Rat {
    long long num = 0;
    long long den = 1;

    Rat() = default;
    Rat(long long n) : num(n), den(1) {}
    Rat(long long n, long long d) : num(n), den(d) { normalize(); }

    void normalize() {
        if (den == 0) throw std::domain_error("Rat: zero denominator");
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    bool is_zero() const { return num == 0; }
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
};

namespace detail {
inline long long narrow128(__int128 v) {
    if (v > INT64_MAX || v < INT64_MIN) throw std::overflow_error("Rat: 64-bit overflow");
    return static_cast<long long>(v);
}
inline Rat make_rat128(__int128 n, __int128 d) {
    if (d == 0) throw std::domain_error("Rat: zero denominator");
    if (d < 0) {
        n = -n;
        d = -d;
    }
    __int128 an = n < 0 ? -n : n;
    __int128 g = d;
    while (an != 0) {
        __int128 t = g % an;
        g = an;
        an = t;
    }
    if (g > 1) {
        n /= g;
        d /= g;
    }
    Rat r;
    r.num = narrow128(n);
    r.den = narrow128(d);
    return r;
}
}  // namespace detail

inline Rat operator+(const Rat& a, const Rat& b) {
    return detail::make_rat128(static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den,
                               static_cast<__int128>(a.den) * b.den);
}
inline Rat operator-(const Rat& a, const Rat& b) {
    return detail::make_rat128(static_cast<__int128>(a.num) * b.den - static_cast<__int128>(b.num) * a.den,
                               static_cast<__int128>(a.den) * b.den);
}
inline Rat operator*(const Rat& a, const Rat& b) {
    return detail::make_rat128(static_cast<__int128>(a.num) * b.num, static_cast<__int128>(a.den) * b.den);
}
inline Rat operator/(const Rat& a, const Rat& b) {
    if (b.num == 0) throw std::domain_error("Rat: division by zero");
    return detail::make_rat128(static_cast<__int128>(a.num) * b.den, static_cast<__int128>(a.den) * b.num);
}
inline bool operator==(const Rat& a, const Rat& b) { return a.num == b.num && a.den == b.den; }

/// Recovers the exact small rational a double happens to equal, if any.
/// Continued-fraction search capped at `max_den`; the reconstruction must
/// round-trip bit-exactly or the conversion is rejected.
inline std::optional<Rat> rat_from_double(double x, long long max_den = 1 << 24) {
    if (!std::isfinite(x)) return std::nullopt;
    if (x == 0.0) return Rat(0);
    const double ax = std::abs(x);
    if (ax > 1e15) return std::nullopt;
    long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double v = ax;
    for (int it = 0; it < 64; ++it) {
        const double fl = std::floor(v);
        if (fl > 4e18) return std::nullopt;
        const long long a = static_cast<long long>(fl);
        __int128 p2 = static_cast<__int128>(a) * p1 + p0;
        __int128 q2 = static_cast<__int128>(a) * q1 + q0;
        if (p2 > max_den * 1024 || q2 > max_den) break;
        p0 = p1;
        q0 = q1;
        p1 = static_cast<long long>(p2);
        q1 = static_cast<long long>(q2);
        if (static_cast<double>(p1) / static_cast<double>(q1) == ax) {
            Rat r(x < 0 ? -p1 : p1, q1);
            if (r.to_double() == x) return r;
            return std::nullopt;
        }
        const double rem = v - fl;
        if (rem < 1e-18) break;
        v = 1.0 / rem;
    }
    return std::nullopt;
}

using RatMat = std::vector<std::vector<Rat>>;

inline std::optional<RatMat> rat_matrix_from(const Mat& m) {
    RatMat r(m.rows, std::vector<Rat>(m.cols));
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) {
            auto q = rat_from_double(m(i, j));
            if (!q) return std::nullopt;
            r[i][j] = *q;
        }
    return r;
}

/// Gauss-Jordan reduction over the rationals; returns pivot columns.
inline std::vector<int> rref_rational(RatMat& m) {
    std::vector<int> pivots;
    const int rows = static_cast<int>(m.size());
    const int cols = rows ? static_cast<int>(m[0].size()) : 0;
    int row = 0;
    for (int col = 0; col < cols && row < rows; ++col) {
        int sel = -1;
        for (int i = row; i < rows; ++i)
            if (!m[i][col].is_zero()) {
                sel = i;
                break;
            }
        if (sel < 0) continue;
        std::swap(m[row], m[sel]);
        const Rat piv = m[row][col];
        for (int j = 0; j < cols; ++j) m[row][j] = m[row][j] / piv;
        for (int i = 0; i < rows; ++i) {
            if (i == row || m[i][col].is_zero()) continue;
            const Rat f = m[i][col];
            for (int j = 0; j < cols; ++j) m[i][j] = m[i][j] - f * m[row][j];
        }
        pivots.push_back(col);
        ++row;
    }
    return pivots;
}

inline int rank_rational(RatMat m) { return static_cast<int>(rref_rational(m).size()); }

/// Null space basis of a rational matrix: one vector per free column, with
/// the free coordinate set to 1.
inline std::vector<std::vector<Rat>> kernel_rational(RatMat m) {
    const int cols = m.empty() ? 0 : static_cast<int>(m[0].size());
    const std::vector<int> pivots = rref_rational(m);
    std::vector<bool> is_pivot(cols, false);
    for (int c : pivots) is_pivot[c] = true;
    std::vector<std::vector<Rat>> basis;
    for (int f = 0; f < cols; ++f) {
        if (is_pivot[f]) continue;
        std::vector<Rat> v(cols, Rat(0));
        v[f] = Rat(1);
        for (size_t r = 0; r < pivots.size(); ++r) v[pivots[r]] = Rat(0) - m[r][f];
        basis.push_back(std::move(v));
    }
    return basis;
}

/// Clears denominators and common factors so the vector is primitive
/// integer with a positive leading nonzero entry.
inline std::vector<long long> to_primitive_integer(const std::vector<Rat>& v) {
    long long l = 1;
    for (const Rat& r : v) l = detail::narrow128(static_cast<__int128>(l) / std::gcd(l, r.den) * r.den);
    std::vector<long long> w(v.size());
    long long g = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        w[i] = detail::narrow128(static_cast<__int128>(v[i].num) * (l / v[i].den));
        g = std::gcd(g, w[i] < 0 ? -w[i] : w[i]);
    }
    if (g > 1)
        for (long long& x : w) x /= g;
    for (long long x : w) {
        if (x == 0) continue;
        if (x < 0)
            for (long long& y : w) y = -y;
        break;
    }
    return w;
}

}  // namespace thermocrn
