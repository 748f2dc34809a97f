#pragma once

#include <cstdint>

#include "pfnet/manifold.hpp"
#include "pfnet/simulator.hpp"

namespace pfnet {

// Heavy-traffic limit parameters of a critical network.
struct DiffusionParams {
    Mat Sigma_X;   // phase-level free-process covariance (block diagonal)
    Mat Sigma_U;   // inner service-fluctuation covariance
    Mat R;         // reflection matrix (A B A')^{-1}, L x L
    Mat Gamma;     // covariance of the reflected coordinate, R (A D A') R
    Vec D_diag;    // lambda_r * beta2_r per route
};

DiffusionParams diffusion_params(const Network& net);

// Sigma_X = diag(m)(I-P')^{-1}(diag(lambda a) + Sigma_U)(I-P)^{-1}diag(m),
// Sigma_U per-route from the compensated service/routing Poisson clocks.
void covariance_free_process(const Network& net, Mat& Sigma_X, Mat& Sigma_U);

struct ReflectionCheck {
    Mat R;            // (A B A')^{-1} from the geometry
    Mat R_closed;     // 2 (A diag(lambda beta2) A')^{-1}
    double rel_residual = 0.0;
};

// Computes both forms and their agreement; throws NumericError when they
// differ beyond 1e-9 relative.
ReflectionCheck reflection_matrix(const Network& net, const ManifoldGeometry& geom);

struct ProductFormResidual {
    double skew_symmetry = 0.0;  // ||2G - R Rd^{-1} Gd - Gd Rd^{-1} R'|| / ||G||
    double gamma_vs_2r = 0.0;    // ||G - 2R|| / ||G||
};

ProductFormResidual check_product_form(const Mat& Gamma, const Mat& R);

// sigma = 2 Gamma_d^{-1} R_d theta; equals theta when Gamma = 2R.
Vec product_form_rates(const Mat& Gamma, const Mat& R, const Vec& theta_link);

struct SteadyStateApprox {
    Mat samples;   // R x S draws of N = diag(rho) A' E, E_l ~ Exp(slack_l)
    Vec mean;      // rho_r sum_l A_{l,r} / s_l
    Vec variance;  // rho_r^2 sum_l A_{l,r}^2 / s_l^2
    Vec slack;     // s = c - A rho of the instance
};

// Product-form steady-state approximation for a subcritical instance.
SteadyStateApprox approx_steady_state(const Network& net_k, int samples,
                                      std::uint64_t seed);

struct SrbmConfig {
    double step = 1e-4;
    double horizon = 1e5;          // per path, split across `paths`
    double warmup_fraction = 0.1;  // per path
    double thin_dt = 5.0;          // spacing of retained samples
    std::uint64_t seed = 1;
    int paths = 1;                 // independent paths, run in parallel
};

struct SrbmResult {
    Mat samples;   // L x S thinned stationary samples of W_G
    Vec mean;      // time-average per component
    Mat corr;      // sample correlation of the thinned samples
};

// Simulates the reflected diffusion W_G = W_G(0) + x(t) + R y(t) with free
// drift -R theta and covariance Gamma via Euler increments pushed through the
// per-step complementarity solve.  Stationary marginals are Exponential(theta_l).
SrbmResult simulate_srbm(const Mat& R, const Mat& Gamma, const Vec& theta_link,
                         const SrbmConfig& cfg);

struct HtRouteStat {
    int route = 0;
    double empirical_mean = 0.0;  // median across seeds of per-seed time averages
    double approx_mean = 0.0;
    double rel_error = 0.0;
    double ks_stat = 0.0;  // two-sample KS, simulated N_r vs approximation draws
};

struct HtKReport {
    int k = 0;
    double horizon = 0.0;
    std::vector<HtRouteStat> routes;
    double median_rel_error = 0.0;  // median over seeds of the route-averaged error
    double median_ssc = 0.0;        // median over seeds of max dist(W^)/max |W^|
};

struct HtValidationReport {
    std::vector<HtKReport> per_k;
};

struct HtOptions {
    double horizon_per_k2 = 500.0;  // horizon = max(min_horizon, horizon_per_k2 * k^2)
    double min_horizon = 5e4;
    double ssc_grid_dt = 0.25;      // diffusion-scale grid for the SSC metric
    std::uint64_t seed = 20240701;
    int threads = 0;                // 0 -> hardware, capped by PF_HT_THREADS
};

// Simulates HT instances for each k, compares per-route means against the
// product-form approximation and reports the SSC metric.
HtValidationReport validate_heavy_traffic(const Network& net, const std::vector<int>& k_list,
                                          const Vec& theta, int seeds,
                                          const HtOptions& opts = {});

}  // namespace pfnet
