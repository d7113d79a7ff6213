#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "common.hpp"

namespace oltr {

struct MetricConfig {
    std::size_t kappa = 10;
    double gamma = 0.9995;

    void validate() const {
        if (kappa < 1) throw ValidationError("kappa must be >= 1");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
    }
};

/// DCG over the first min(k, len) grades: sum (2^rel - 1) / log2(i + 1).
inline double dcg_at_k(std::span<const int> grades, std::size_t k) {
    const auto n = std::min(k, grades.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (std::exp2(grades[i]) - 1.0) / std::log2(static_cast<double>(i + 2));
    return s;
}

/// DCG of the best possible top-k drawn from `pool`.
inline double ideal_dcg_at_k(std::span<const int> pool, std::size_t k) {
    std::vector<int> best(pool.begin(), pool.end());
    const auto n = std::min(k, best.size());
    std::partial_sort(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(n), best.end(), std::greater<>());
    return dcg_at_k(std::span<const int>(best).first(n), k);
}

/// NDCG@k of a displayed grade list against the query's full grade pool.
/// Returns 0 when the pool has no relevant document.
inline double ndcg_at_k(std::span<const int> ranking, std::span<const int> ideal_pool, std::size_t k) {
    const double ideal = ideal_dcg_at_k(ideal_pool, k);
    if (ideal <= 0.0) return 0.0;
    return dcg_at_k(ranking, k) / ideal;
}

/// sum_t ndcg_t * gamma^(t-1)
inline double online_performance(std::span<const double> ndcg_sequence, double gamma) {
    double total = 0.0;
    double discount = 1.0;
    for (double v : ndcg_sequence) {
        total += v * discount;
        discount *= gamma;
    }
    return total;
}

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double student_t_two_tailed_p(double t, double df) {
    if (!std::isfinite(t)) return 0.0;
    const double x = df / (df + t * t);
    return std::clamp(boost::math::ibeta(df / 2.0, 0.5, x), 0.0, 1.0);
}

struct ComparisonReport {
    double mean_a = 0.0;
    double mean_b = 0.0;
    double std_a = 0.0;
    double std_b = 0.0;
    double t_statistic = 0.0;
    double p_value = 1.0;
    double degrees_of_freedom = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    bool degenerate_variance = false;

    bool significant_05() const noexcept { return p_value < 0.05; }
    bool significant_01() const noexcept { return p_value < 0.01; }
};

namespace detail {

inline ComparisonReport finish_t_test(ComparisonReport r, double mean_diff, double standard_error) {
    if (standard_error == 0.0) {
        r.degenerate_variance = mean_diff != 0.0;
        r.t_statistic = mean_diff == 0.0 ? 0.0 : std::copysign(INFINITY, mean_diff);
        r.p_value = mean_diff == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t_statistic = mean_diff / standard_error;
    r.p_value = student_t_two_tailed_p(r.t_statistic, r.degrees_of_freedom);
    return r;
}

}  // namespace detail

/// Two-sample Student's t-test with pooled variance; t = (mean_a - mean_b) / se.
inline ComparisonReport t_test_two_tailed(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("t-test needs at least two values per sample");
    ComparisonReport r;
    r.n_a = a.size();
    r.n_b = b.size();
    r.mean_a = mean(a);
    r.mean_b = mean(b);
    r.std_a = sample_stddev(a);
    r.std_b = sample_stddev(b);
    const double na = static_cast<double>(r.n_a);
    const double nb = static_cast<double>(r.n_b);
    r.degrees_of_freedom = na + nb - 2.0;
    const double pooled = ((na - 1.0) * r.std_a * r.std_a + (nb - 1.0) * r.std_b * r.std_b) / r.degrees_of_freedom;
    return detail::finish_t_test(r, r.mean_a - r.mean_b, std::sqrt(pooled * (1.0 / na + 1.0 / nb)));
}

/// Paired t-test on a[i] - b[i] (one-sample test of the differences against 0).
inline ComparisonReport t_test_paired(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("paired t-test needs equally sized samples");
    if (a.size() < 2) throw ValidationError("t-test needs at least two values per sample");
    ComparisonReport r;
    r.n_a = r.n_b = a.size();
    r.mean_a = mean(a);
    r.mean_b = mean(b);
    r.std_a = sample_stddev(a);
    r.std_b = sample_stddev(b);
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    const double n = static_cast<double>(diff.size());
    r.degrees_of_freedom = n - 1.0;
    return detail::finish_t_test(r, mean(diff), sample_stddev(diff) / std::sqrt(n));
}

/// One-sided p-value for the alternative "a > b", derived from a two-sided report.
inline double one_sided_p_greater(const ComparisonReport& r) {
    if (r.t_statistic > 0.0) return r.p_value / 2.0;
    return 1.0 - r.p_value / 2.0;
}

/// Table marker for condition vs baseline: improvement ▵ (p<0.05) / ▴ (p<0.01),
/// loss ▿ / ▾; empty when not significant.
inline std::string significance_marker(double p_value, double mean_delta) {
    if (!(p_value < 0.05) || mean_delta == 0.0) return "";
    const bool strong = p_value < 0.01;
    if (mean_delta > 0.0) return strong ? "▴" : "▵";
    return strong ? "▾" : "▿";
}

}  // namespace oltr
