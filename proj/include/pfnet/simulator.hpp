#pragma once

#include <cstdint>

#include "pfnet/allocator.hpp"
#include "pfnet/manifold.hpp"

namespace pfnet {

struct SimConfig {
    Network net;
    std::uint64_t seed = 1;
    double horizon = 1e5;
    double warmup_fraction = 0.2;
    int batches = 32;
    // sampling grid for thinned state / workload samples; <= 0 picks
    // horizon / 2048
    double sample_interval = 0.0;
    // optional start state (phase-level counts); empty means start empty
    Eigen::VectorXi n0_phase;
};

struct SimResult {
    // time averages over the post-warmup window
    Vec mean_n_route;
    Vec mean_n_phase;
    Vec var_n_route;
    Vec ci_half_route;          // batch-means 95% half-widths
    Vec batch_mean_route;       // mean of batch means (equals mean_n_route up to edge effects)

    std::vector<double> sample_times;
    Mat samples_route;          // R x S thinned route counts
    Mat samples_phase;          // n x S thinned phase counts
    Mat samples_workload;       // n x S workload at sample times
    Mat samples_unused;         // L x S cumulative Y at sample times

    Vec departures_per_route;   // absorption counts over the whole run
    Vec y_final;
    double time = 0.0;
    std::uint64_t events = 0;
    double max_capacity_violation = 0.0;  // max (A Lambda - c) seen at events
};

// Statistically exact event-driven simulation of the phase-level CTMC under
// proportional fairness.  Reproducible for a fixed seed.
SimResult simulate(const SimConfig& cfg);

// Heavy-traffic pre-limit instance: lambda^k_r = lambda_r (1 - theta_r/(k rho_r)),
// so that rho^k = rho - theta/k componentwise.
Network build_ht_instance(const Network& net, int k, const Vec& theta);

struct ScaledPath {
    std::vector<double> times;  // diffusion time scale
    Mat w_hat;                  // n x S, W(k^2 t)/k
    std::vector<double> dist;   // dist(w_hat(t)) against the base geometry
};

// Diffusion-scaled workload path of a simulation run on a uniform grid.
ScaledPath scaled_paths(const SimConfig& cfg, int k, const ManifoldGeometry& geom,
                        double grid_dt);

}  // namespace pfnet
