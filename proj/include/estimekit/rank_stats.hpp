#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace estimekit {

/// Result of a rank correlation. `value` is empty when the statistic is
/// undefined for the input (constant sequence, no admissible pairs); callers
/// aggregating many correlations should skip those instead of treating them
/// as zero.
struct CorrelationValue {
    std::optional<double> value;
    std::int64_t n_pairs_used = 0;
    std::int64_t n_concordant = 0;
    std::int64_t n_discordant = 0;
    std::string undefined_reason;

    bool defined() const { return value.has_value(); }
    double operator*() const { return value.value(); }

    static CorrelationValue undefined(std::string reason) {
        CorrelationValue r;
        r.undefined_reason = std::move(reason);
        return r;
    }
};

namespace detail {

inline void check_pair_lengths(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("rank correlation: length mismatch (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()) + ")");
    if (x.size() < 2)
        throw std::invalid_argument("rank correlation: need at least 2 observations");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw std::invalid_argument("rank correlation: non-finite value at index " + std::to_string(i));
}

inline std::size_t count_distinct(std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    return static_cast<std::size_t>(std::unique(s.begin(), s.end()) - s.begin());
}

/// Dense 0-based ranks of `v` (equal values share a rank).
inline std::vector<std::size_t> dense_ranks(std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    std::vector<std::size_t> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        r[i] = static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), v[i]) - s.begin());
    return r;
}

class Fenwick {
  public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i, std::int64_t v) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += v;
    }
    // sum over [0, i)
    std::int64_t prefix(std::size_t i) const {
        std::int64_t s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

  private:
    std::vector<std::int64_t> tree_;
};

} // namespace detail

/// Stuart's tau-c: 2m(n_c - n_d) / (n^2 (m - 1)), with m the smaller number of
/// distinct values of the two sequences. Pairs tied in either sequence count
/// as neither concordant nor discordant. O(n log n).
inline CorrelationValue kendall_tau_c(std::span<const double> x, std::span<const double> y) {
    detail::check_pair_lengths(x, y);
    const std::size_t n = x.size();
    const std::size_t m = std::min(detail::count_distinct(x), detail::count_distinct(y));
    if (m < 2) return CorrelationValue::undefined("tau-c: constant sequence");

    const auto ry = detail::dense_ranks(y);
    const std::size_t ny = *std::max_element(ry.begin(), ry.end()) + 1;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    // Sweep x in ascending order; every element already in the tree has a
    // strictly smaller x because equal-x groups are queried before insertion.
    detail::Fenwick seen(ny);
    std::int64_t inserted = 0, nc = 0, nd = 0;
    for (std::size_t g = 0; g < n;) {
        std::size_t end = g;
        while (end < n && x[order[end]] == x[order[g]]) ++end;
        for (std::size_t k = g; k < end; ++k) {
            const std::size_t r = ry[order[k]];
            nc += seen.prefix(r);
            nd += inserted - seen.prefix(r + 1);
        }
        for (std::size_t k = g; k < end; ++k) {
            seen.add(ry[order[k]], 1);
            ++inserted;
        }
        g = end;
    }

    CorrelationValue out;
    const double md = static_cast<double>(m);
    const double nn = static_cast<double>(n);
    out.value = 2.0 * md * static_cast<double>(nc - nd) / (nn * nn * (md - 1.0));
    out.n_concordant = nc;
    out.n_discordant = nd;
    out.n_pairs_used = nc + nd;
    return out;
}

/// Local Kendall statistic (n_c - n_d) / n_t over the pairs whose x values
/// differ by at most `max_distance`. A pair is concordant only when both
/// sequences strictly agree in direction; every other admissible pair,
/// including ties in either sequence, counts as discordant.
inline CorrelationValue kendall_tau_local(std::span<const double> x, std::span<const double> y,
                                          std::int64_t max_distance) {
    detail::check_pair_lengths(x, y);
    if (max_distance < 1) throw std::invalid_argument("local tau: distance must be >= 1");
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    const double d = static_cast<double>(max_distance);
    std::int64_t nc = 0, nt = 0;
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t i = order[a];
        for (std::size_t b = a + 1; b < n && x[order[b]] - x[i] <= d; ++b) {
            const std::size_t j = order[b];
            ++nt;
            if (x[j] > x[i] && y[j] > y[i]) ++nc;
        }
    }
    if (nt == 0) return CorrelationValue::undefined("local tau: no pair within distance");

    CorrelationValue out;
    out.n_concordant = nc;
    out.n_discordant = nt - nc;
    out.n_pairs_used = nt;
    out.value = static_cast<double>(nc - (nt - nc)) / static_cast<double>(nt);
    return out;
}

/// 1-based mid-ranks (ties get the average of the ranks they span).
inline std::vector<double> mid_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t g = 0; g < n;) {
        std::size_t end = g;
        while (end < n && v[order[end]] == v[order[g]]) ++end;
        const double avg = 0.5 * static_cast<double>(g + 1 + end);
        for (std::size_t k = g; k < end; ++k) r[order[k]] = avg;
        g = end;
    }
    return r;
}

/// Spearman rho as the Pearson correlation of mid-ranks.
inline CorrelationValue spearman_rho(std::span<const double> x, std::span<const double> y) {
    detail::check_pair_lengths(x, y);
    const auto rx = mid_ranks(x);
    const auto ry = mid_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mean = (n + 1.0) / 2.0;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double a = rx[i] - mean, b = ry[i] - mean;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx == 0.0 || syy == 0.0) return CorrelationValue::undefined("spearman: constant sequence");
    CorrelationValue out;
    out.value = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    out.n_pairs_used = static_cast<std::int64_t>(x.size() * (x.size() - 1) / 2);
    return out;
}

enum class CorrelationKind { tau_c, spearman };

inline const char* to_string(CorrelationKind k) { return k == CorrelationKind::tau_c ? "tau_c" : "spearman"; }

inline CorrelationKind parse_correlation_kind(const std::string& s) {
    if (s == "tau_c" || s == "tau" || s == "kendall") return CorrelationKind::tau_c;
    if (s == "spearman" || s == "rho") return CorrelationKind::spearman;
    throw std::invalid_argument("unknown correlation kind: " + s);
}

inline CorrelationValue correlate(CorrelationKind kind, std::span<const double> x, std::span<const double> y) {
    return kind == CorrelationKind::tau_c ? kendall_tau_c(x, y) : spearman_rho(x, y);
}

} // namespace estimekit
