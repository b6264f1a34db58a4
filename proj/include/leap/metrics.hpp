#pragma once

#include <optional>
#include <span>
#include <vector>

namespace leap::metrics {

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation; nullopt when either vector is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average ranks; nullopt when either rank vector is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

double mse(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> v);
// Linear-interpolation percentile, q in [0, 100].
double percentile(std::vector<double> v, double q);

}  // namespace leap::metrics
