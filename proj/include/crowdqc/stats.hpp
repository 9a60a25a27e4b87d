#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace crowdqc {

struct SummaryStats {
    double mean = 0.0;
    double median = 0.0;
    double std = 0.0;  // population
    double q95 = 0.0;

    bool operator==(const SummaryStats&) const = default;
};

/// Linear-interpolated quantile of sorted data (position q * (n - 1)).
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Mean, median, population standard deviation and 95% quantile.
/// Empty input yields all zeros.
inline SummaryStats summary_stats(std::span<const double> xs) {
    SummaryStats s;
    if (xs.empty()) return s;
    const double n = static_cast<double>(xs.size());
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / n);

    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    s.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    s.q95 = quantile_sorted(sorted, 0.95);
    return s;
}

}  // namespace crowdqc
