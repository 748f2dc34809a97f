#include "pfnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pfnet {

double t_quantile_975(int dof) {
    static const double table[] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof < 1) return table[0];
    if (dof <= 30) return table[dof - 1];
    // Cornish-Fisher style tail correction toward the normal quantile
    double z = 1.959964;
    return z + (z * z * z + z) / (4.0 * dof);
}

BatchSummary batch_means(const std::vector<double>& batch_values) {
    BatchSummary s;
    s.batches = static_cast<int>(batch_values.size());
    if (s.batches == 0) return s;
    double sum = 0.0;
    for (double v : batch_values) sum += v;
    s.mean = sum / s.batches;
    if (s.batches < 2) return s;
    double ss = 0.0;
    for (double v : batch_values) ss += (v - s.mean) * (v - s.mean);
    double sd = std::sqrt(ss / (s.batches - 1));
    s.ci_half = t_quantile_975(s.batches - 1) * sd / std::sqrt(double(s.batches));
    return s;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double ks_statistic_exponential(std::vector<double> samples, double rate) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double cdf = -std::expm1(-rate * samples[i]);
        ks = std::max(ks, std::abs(cdf - (i + 1) / n));
        ks = std::max(ks, std::abs(cdf - i / n));
    }
    return ks;
}

double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double ks = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        ks = std::max(ks, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return ks;
}

double ks_critical_value(double alpha, std::size_t n) {
    double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    return c / std::sqrt(static_cast<double>(n));
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty())
        throw std::invalid_argument("pearson_correlation: size mismatch");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= n; my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace pfnet
