#pragma once

#include "pfnet/allocator.hpp"
#include "pfnet/manifold.hpp"

namespace pfnet {

// Critical fluid model with general Markovian routing between routes:
//   ndot_r = lambda_r - mu_r Phi_r(n) + sum_s P(s,r) mu_s Phi_s(n).
struct FluidConfig {
    RoutedSystem sys;
    double h = 0.0;        // step; <= 0 selects 1e-3 * |n0| / min lambda
    double horizon = 50.0;
    double pf_tol = 1e-10;
    int store_every = 1;   // thinning of the stored trajectory

    Vec rho;  // cached loads; filled by make_fluid_config

    int routes() const { return static_cast<int>(sys.lambda.size()); }
};

FluidConfig make_fluid_config(RoutedSystem sys, double horizon, double h = 0.0);
// Phase-level fluid of a network: routes = phases, block routing, arrivals
// lambda_r a_{r,f}.
FluidConfig phase_level_fluid(const Network& net, double horizon, double h = 0.0);

struct FluidTrajectory {
    std::vector<double> times;
    Mat states;     // R x K
    Mat phis;       // R x K, allocation with boundary extension
    Mat workloads;  // R x K, diag(m)(I-P')^{-1} n
    Mat unused;     // L x K, y(t) = A int (rho - Phi)
    Vec lyapunov;   // f(t) = L(n(t))
    double step = 0.0;
    // max |n(T) - n(0) - int(lambda - (I-P')diag(mu) Phi)| over routes;
    // halves with the step size
    double integral_defect = 0.0;
};

FluidTrajectory integrate_fluid(const Vec& n0, const FluidConfig& cfg);

// L(n) = sum_r n_r log(Phi_r(n)/rho_r), 0 log 0 = 0.
double lyapunov(const Vec& n, const FluidConfig& cfg);

// Upper bound on the derivative of the Lyapunov function at a regular state:
// -sum_{n_r>0} lambda_r (Lambda_r/rho_r - 1) log(Lambda_r/rho_r).  Nonpositive.
double lyapunov_derivative_bound(const Vec& n, const FluidConfig& cfg);

struct RearrangementResult {
    Vec h;
    bool ok = false;  // h_r >= u_r (e^{u_r} - 1) - 1e-10 for all r
};

// h_r = sum_k sum_s P^(k)_{r,s} (e^{u_s}-1)[u_s - (P u)_s] via the Neumann
// series, truncated when a term drops below 1e-14 in norm.
RearrangementResult rearrangement_bound(const Vec& u, const Mat& Ptilde);

struct ConvergenceReport {
    std::vector<double> dist_series;   // dist(w(t)) against the given geometry
    double decay_rate = 0.0;           // fitted exponential rate of |n(t)-n(T)|
    double t_eps[3] = {0.0, 0.0, 0.0}; // first time |n(t)-n(T)| stays below 1e-1, 1e-2, 1e-3
    double final_dist = 0.0;
};

ConvergenceReport convergence_metrics(const FluidTrajectory& traj,
                                      const ManifoldGeometry& geom);

}  // namespace pfnet
