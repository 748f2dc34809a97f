#pragma once

#include "pfnet/network.hpp"

namespace pfnet {

// Workload-space geometry of the invariant manifold {w = B A' pi, pi >= 0}:
// the diagonal weight B, the phase-level incidence A, the dual frame G with
// G' B A' = I, a B-orthonormal kernel basis H (A B H = 0, H' B H = I) and the
// reflection matrix R = (A B A')^{-1}.
struct ManifoldGeometry {
    Mat A_phase;   // L x n
    Vec B;         // diagonal of the weight matrix, length n
    Mat G;         // n x L
    Mat H;         // n x (n - L); zero columns when n == L
    Mat R;         // L x L, symmetric positive definite
    double basis_condition = 1.0;  // cond(A B^{1/2}); dist thresholds depend on it

    int links() const { return static_cast<int>(A_phase.rows()); }
    int dim() const { return static_cast<int>(A_phase.cols()); }
};

// Geometry from an explicit incidence and weight diagonal.
ManifoldGeometry build_geometry(const Mat& A_phase, const Vec& B_diag);
// Phase-level geometry of a critical network: B = diag(m)diag((I-P')^{-1} rho).
ManifoldGeometry build_geometry(const Network& net);
// Route-level geometry of a routed system (same construction with
// B = diag(1/mu) diag((I-P')^{-1} rho)).
ManifoldGeometry build_geometry_routed(const Mat& A, const Vec& mu, const Mat& P, const Vec& rho);

// dist(w) = sum_l (-g_l' w)^+ + sum_m |h_m' w|; zero exactly on the manifold.
double manifold_dist(const Vec& w, const ManifoldGeometry& geom);

// w = B A' pi for pi >= 0; round trip G'(lift(pi)) = pi.
Vec lift(const Vec& pi, const ManifoldGeometry& geom);

struct WorkloadDecomposition {
    Vec pi;  // G' w
    Vec z;   // H' w
};

// (pi, z) with reconstruction w = B A' pi + B H z.
WorkloadDecomposition decompose(const Vec& w, const ManifoldGeometry& geom);

// w = diag(m) (I - P')^{-1} n at the phase level.
Vec state_to_workload(const Vec& n_phase, const Network& net);

// Manifold state in counts: n = diag(rho_phase) A' pi, nonnegative for pi >= 0.
Vec manifold_counts(const Vec& pi, const Network& net);

// One step of the discrete complementarity problem in w_G coordinates:
// find dy >= 0 with  w_next = q + R dy >= 0  and  w_next . dy = 0.
// Solved by projected Gauss-Seidel (R symmetric positive definite).
// Returns iterations used; throws NumericError at the iteration cap.
int skorokhod_step(const Mat& R, const Vec& q, Vec& w_next, Vec& dy,
                   double tol = 1e-12, int max_iter = 10000);

struct SkorokhodPaths {
    Mat w;   // n x (T+1)
    Mat y;   // L x (T+1), componentwise nondecreasing
    Mat z;   // (n-L) x (T+1)
    double max_complementarity = 0.0;  // max_i |w_G(i+1) . dy(i)|
};

// Solves the discrete Skorokhod problem along a sampled driving path x
// (columns, x(0) arbitrary; increments are what matters) from w0 on the
// manifold.  H' w = 0 is maintained by construction.
SkorokhodPaths skorokhod_solve(const Mat& x_path, const Vec& w0,
                               const ManifoldGeometry& geom);

}  // namespace pfnet
