#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradebias/error.hpp"

namespace gradebias {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Rows are embedding vectors.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) s += a[d] * b[d];
    return s;
}

inline double norm2(std::span<const double> a) {
    const double s = dot(a, a);
    if (s > 0.0 && std::isfinite(s) && s >= std::numeric_limits<double>::min()) return std::sqrt(s);
    // Squares under- or overflowed: rescale by the largest entry.
    double big = 0.0;
    for (double x : a) big = std::max(big, std::abs(x));
    if (big == 0.0 || !std::isfinite(big)) return big;
    double t = 0.0;
    for (double x : a) t += (x / big) * (x / big);
    return big * std::sqrt(t);
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t d = 0; d < x.size(); ++d) y[d] += alpha * x[d];
}

inline Vector to_vector(std::span<const double> a) { return Vector(a.begin(), a.end()); }

/// Cosine similarity; empty when either vector has zero norm.
inline std::optional<double> cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// Unit vector in the direction of `a`, or the zero vector when `a` is zero.
inline Vector normalized(std::span<const double> a) {
    Vector out(a.begin(), a.end());
    const double n = norm2(a);
    if (n > 0.0)
        for (double& x : out) x /= n;
    return out;
}

/// Mean of the selected rows; zero vector for an empty selection.
inline Vector mean_of_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Vector out(m.cols(), 0.0);
    if (rows.empty()) return out;
    for (std::size_t r : rows) axpy(1.0, m.row(r), out);
    for (double& x : out) x /= static_cast<double>(rows.size());
    return out;
}

inline Vector mean_of_all_rows(const Matrix& m) {
    Vector out(m.cols(), 0.0);
    if (m.rows() == 0) return out;
    for (std::size_t r = 0; r < m.rows(); ++r) axpy(1.0, m.row(r), out);
    for (double& x : out) x /= static_cast<double>(m.rows());
    return out;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

/// Fractional ranks (1-based, ties get the average rank).
inline Vector average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    Vector ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) return std::nullopt;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

/// Spearman rank correlation (Pearson on average ranks). Empty when either
/// side is constant.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    const Vector rx = average_ranks(x);
    const Vector ry = average_ranks(y);
    return pearson(rx, ry);
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& x) {
    return x ? format_double(*x) : std::string{};
}

}  // namespace gradebias
