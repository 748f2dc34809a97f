#pragma once

#include <cstdint>
#include <vector>

namespace pfnet {

// Two-sided 97.5% Student-t quantile (95% CI half-width factor).
double t_quantile_975(int dof);

// Batch-means summary of equally weighted batch averages.
struct BatchSummary {
    double mean = 0.0;
    double ci_half = 0.0;  // t_{0.975, B-1} * s / sqrt(B)
    int batches = 0;
};
BatchSummary batch_means(const std::vector<double>& batch_values);

double median(std::vector<double> values);

// One-sample Kolmogorov-Smirnov statistic against Exponential(rate).
double ks_statistic_exponential(std::vector<double> samples, double rate);
// Two-sample KS statistic.
double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b);
// Asymptotic critical value c(alpha)/sqrt(n); alpha = 0.01 -> 1.628.
double ks_critical_value(double alpha, std::size_t n);

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

// Deterministic uniform/exponential draws on top of a raw 64-bit generator
// (keeps simulations reproducible independent of the standard library).
inline double uniform01(std::uint64_t raw) { return (raw >> 11) * 0x1.0p-53; }

}  // namespace pfnet
