#pragma once

// Test-support generators: random valid critical networks, random
// sub-stochastic matrices, and small Monte-Carlo oracles.  Test-only code,
// independent of the library internals it is used to check.

#include <random>

#include "pfnet/network.hpp"

namespace pfnet::testing {

inline double runif(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * ((rng() >> 11) * 0x1.0p-53);
}

inline PhaseTypeDist random_dist(std::mt19937_64& rng) {
    switch (rng() % 4) {
        case 0: return PhaseTypeDist::exponential(runif(rng, 0.3, 3.0));
        case 1: return PhaseTypeDist::erlang(2, runif(rng, 0.5, 4.0));
        case 2: return PhaseTypeDist::erlang(3, runif(rng, 0.8, 5.0));
        default: {
            double p = runif(rng, 0.2, 0.8);
            Vec probs(2), rates(2);
            probs << p, 1.0 - p;
            rates << runif(rng, 1.0, 4.0), runif(rng, 0.2, 0.9);
            return PhaseTypeDist::hyperexp(probs, rates);
        }
    }
}

// Random 0-1 full-row-rank incidence with every link serving a route and
// every route using a link.
inline Mat random_incidence(std::mt19937_64& rng, int L, int R) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Mat A = Mat::Zero(L, R);
        for (int r = 0; r < R; ++r) A(rng() % L, r) = 1.0;  // route uses some link
        for (int l = 0; l < L; ++l)
            for (int r = 0; r < R; ++r)
                if ((rng() % 100) < 30) A(l, r) = 1.0;
        bool ok = true;
        for (int l = 0; l < L; ++l)
            if (A.row(l).sum() == 0.0) ok = false;
        if (!ok) continue;
        Eigen::ColPivHouseholderQR<Mat> qr(A.transpose());
        qr.setThreshold(1e-10);
        if (qr.rank() == L) return A;
    }
    throw std::runtime_error("random_incidence: could not build full-rank A");
}

// Random valid critical network: c := A rho makes every link a bottleneck.
inline Network random_critical_network(std::mt19937_64& rng, int max_links = 4,
                                       int max_routes = 8) {
    int L = 1 + static_cast<int>(rng() % max_links);
    int R = L + static_cast<int>(rng() % (max_routes - L + 1));
    Mat A = random_incidence(rng, L, R);
    Vec lambda(R);
    std::vector<PhaseTypeDist> dists;
    for (int r = 0; r < R; ++r) {
        lambda(r) = runif(rng, 0.2, 2.0);
        dists.push_back(random_dist(rng));
    }
    Network tmp = make_network(A, Vec::Ones(L), lambda, dists);
    Vec c = tmp.A * tmp.rho;
    return make_network(A, c, lambda, std::move(dists));
}

// Random strictly sub-stochastic matrix with spectral radius < 1.
inline Mat random_substochastic(std::mt19937_64& rng, int n) {
    Mat P(n, n);
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            P(i, j) = runif(rng, 0.0, 1.0);
            row += P(i, j);
        }
        double target = runif(rng, 0.1, 0.95);  // row sum strictly below 1
        for (int j = 0; j < n; ++j) P(i, j) *= target / row;
    }
    return P;
}

struct MomentEstimate {
    double mean = 0.0;
    double second = 0.0;
    double mean_se = 0.0;
    double second_se = 0.0;
};

inline MomentEstimate mc_moments(const PhaseTypeDist& d, int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    for (int i = 0; i < samples; ++i) {
        double x = d.sample(rng);
        s1 += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    MomentEstimate est;
    est.mean = s1 / samples;
    est.second = s2 / samples;
    est.mean_se = std::sqrt(std::max(0.0, s2 / samples - est.mean * est.mean) / samples);
    est.second_se = std::sqrt(std::max(0.0, s4 / samples - est.second * est.second) / samples);
    return est;
}

}  // namespace pfnet::testing
