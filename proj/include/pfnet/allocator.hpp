#pragma once

#include "pfnet/network.hpp"

namespace pfnet {

// Proportionally fair allocation for state n: the maximizer of
// sum_r n_r log(gamma_r) over {A gamma <= c, gamma >= 0}, with
// gamma_r = 0 whenever n_r = 0, plus the dual link prices eta.
struct Allocation {
    Vec gamma_route;
    Vec eta;               // link prices, >= 0
    double kkt_residual = 0.0;
    int iterations = 0;

    // zeta_r = (A' eta)_r, the per-route aggregate price
    Vec zeta(const Mat& A) const { return A.transpose() * eta; }
};

struct PfOptions {
    double tol = 1e-9;    // KKT residual target
    int max_iter = 300;
    bool polish_eta = true;  // min-norm dual when the optimum is degenerate
};

// Solves the dual  min_{eta >= 0} sum_l eta_l c_l - sum_r n_r log((A' eta)_r)
// by projected Newton with Armijo backtracking (projected-gradient fallback).
// n == 0 returns the zero allocation with eta = 0.
// Throws NumericError if the residual target is not reached.
Allocation solve_pf(const Vec& n, const Mat& A, const Vec& c, const PfOptions& opts = {});
Allocation solve_pf(const Vec& n_route, const Network& net, double tol = 1e-9);

// Per-phase split of a route allocation: (n_phase_{r,f} / n_r) * gamma_r,
// with the 0/0 = 0 convention.
Vec phase_split(const Vec& n_phase, const Network& net, const Allocation& alloc);

struct KktReport {
    double stationarity = 0.0;    // max |n_r/gamma_r - zeta_r| over n_r > 0
    double primal = 0.0;          // max(0, max_l (A gamma - c)_l)
    double dual = 0.0;            // max(0, -min_l eta_l)
    double complementarity = 0.0; // max_l |eta_l (A gamma - c)_l|
    double zero_routes = 0.0;     // max gamma_r over n_r = 0

    double max() const;
};

KktReport verify_kkt(const Vec& n, const Vec& gamma, const Vec& eta,
                     const Mat& A, const Vec& c);

// Route-level system with general Markovian routing between routes;
// completed route-r jobs move to route s with probability P(r,s).
struct RoutedSystem {
    Mat A;
    Vec c;
    Vec lambda;
    Vec mu;
    Mat P;    // R x R, (I - P) invertible

    // Effective loads rho = diag(1/mu) (I - P')^{-1} lambda.
    Vec loads() const;
};

struct PhiResult {
    Vec phi;
    // max_l (A phi - c)_l; positive means the boundary extension is not
    // capacity-feasible at this state (reported, never clipped).
    double capacity_violation = 0.0;
};

// Boundary extension of the allocation: phi_r = Lambda_r on n_r > 0, and on
// the zero set the solution of the affine stationarity system
//   d|0 = lambda|0 + P^{00'} d|0 + P^{+0'} d|+,  d_r = mu_r phi_r.
PhiResult extend_phi(const Vec& n, const RoutedSystem& sys, const PfOptions& opts = {});
PhiResult extend_phi(const Vec& n, const RoutedSystem& sys, const Allocation& alloc);

}  // namespace pfnet
