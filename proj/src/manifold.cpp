#include "pfnet/manifold.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace pfnet {

ManifoldGeometry build_geometry(const Mat& A_phase, const Vec& B_diag) {
    ManifoldGeometry g;
    g.A_phase = A_phase;
    g.B = B_diag;
    const int L = g.links();
    const int n = g.dim();
    if ((B_diag.array() <= 0.0).any())
        throw ValidationError("geometry weight B must be strictly positive");

    Vec sqrtB = B_diag.cwiseSqrt();
    Mat M = A_phase * sqrtB.asDiagonal();  // L x n

    Eigen::JacobiSVD<Mat> svd(M);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-12 * sv(0))
        throw NumericError("A is rank deficient; geometry undefined");
    g.basis_condition = sv(0) / sv(sv.size() - 1);

    Mat ABA = M * M.transpose();  // A B A'
    Eigen::LLT<Mat> llt(ABA);
    if (llt.info() != Eigen::Success)
        throw NumericError("A B A' not positive definite");
    g.R = llt.solve(Mat::Identity(L, L));
    g.G = A_phase.transpose() * g.R;

    // Kernel basis of A via column-pivoted QR of A', then B-orthonormalized
    // by modified Gram-Schmidt so that A B H = 0 and H' B H = I.
    const int k = n - L;
    g.H = Mat::Zero(n, k);
    if (k > 0) {
        Eigen::ColPivHouseholderQR<Mat> qr(A_phase.transpose());
        qr.setThreshold(1e-12);
        if (qr.rank() != L)
            throw NumericError("rank-revealing QR disagrees with full row rank");
        Mat Q = qr.householderQ();           // n x n
        Mat K = Q.rightCols(k);              // orthonormal basis of ker(A)
        Mat H0 = B_diag.cwiseInverse().asDiagonal() * K;  // B H0 spans ker(A)
        for (int j = 0; j < k; ++j) {
            Vec v = H0.col(j);
            for (int i = 0; i < j; ++i) {
                double coeff = g.H.col(i).dot(B_diag.cwiseProduct(v));
                v -= coeff * g.H.col(i);
            }
            double norm = std::sqrt(v.dot(B_diag.cwiseProduct(v)));
            if (norm <= 1e-14)
                throw NumericError("kernel basis degenerated during Gram-Schmidt");
            g.H.col(j) = v / norm;
        }
    }
    return g;
}

ManifoldGeometry build_geometry(const Network& net) {
    Mat P = net.routing_phase();
    const int n = net.total_phases;
    Mat I_Pt = Mat::Identity(n, n) - P.transpose();
    Vec w = I_Pt.fullPivLu().solve(net.rho_phase_stacked());
    Vec B = net.m_phase().cwiseProduct(w);
    return build_geometry(net.link_phase_matrix(), B);
}

ManifoldGeometry build_geometry_routed(const Mat& A, const Vec& mu, const Mat& P, const Vec& rho) {
    const int n = static_cast<int>(mu.size());
    Mat I_Pt = Mat::Identity(n, n) - P.transpose();
    Vec w = I_Pt.fullPivLu().solve(rho);
    Vec B = mu.cwiseInverse().cwiseProduct(w);
    return build_geometry(A, B);
}

double manifold_dist(const Vec& w, const ManifoldGeometry& geom) {
    double d = 0.0;
    Vec pi = geom.G.transpose() * w;
    for (int l = 0; l < pi.size(); ++l) d += std::max(0.0, -pi(l));
    if (geom.H.cols() > 0) d += (geom.H.transpose() * w).lpNorm<1>();
    return d;
}

Vec lift(const Vec& pi, const ManifoldGeometry& geom) {
    if ((pi.array() < 0.0).any())
        throw ValidationError("lift: pi must be nonnegative");
    return geom.B.cwiseProduct(geom.A_phase.transpose() * pi);
}

WorkloadDecomposition decompose(const Vec& w, const ManifoldGeometry& geom) {
    return {geom.G.transpose() * w, geom.H.transpose() * w};
}

Vec state_to_workload(const Vec& n_phase, const Network& net) {
    Mat P = net.routing_phase();
    const int n = net.total_phases;
    Mat I_Pt = Mat::Identity(n, n) - P.transpose();
    return net.m_phase().cwiseProduct(I_Pt.fullPivLu().solve(n_phase));
}

Vec manifold_counts(const Vec& pi, const Network& net) {
    if ((pi.array() < 0.0).any())
        throw ValidationError("manifold_counts: pi must be nonnegative");
    return net.rho_phase_stacked().cwiseProduct(net.link_phase_matrix().transpose() * pi);
}

int skorokhod_step(const Mat& R, const Vec& q, Vec& w_next, Vec& dy,
                   double tol, int max_iter) {
    const int L = static_cast<int>(q.size());
    dy = Vec::Zero(L);
    w_next = q;
    if ((q.array() >= 0.0).all()) return 0;  // interior step, no pushing

    const double scale = std::max(1.0, q.lpNorm<Eigen::Infinity>());
    for (int it = 1; it <= max_iter; ++it) {
        double change = 0.0;
        for (int l = 0; l < L; ++l) {
            double target = std::max(0.0, dy(l) - w_next(l) / R(l, l));
            double delta = target - dy(l);
            if (delta != 0.0) {
                dy(l) = target;
                w_next += delta * R.col(l);
                change = std::max(change, std::abs(delta));
            }
        }
        if (change <= tol * scale) return it;
    }
    throw NumericError("skorokhod_step: projected Gauss-Seidel did not converge");
}

SkorokhodPaths skorokhod_solve(const Mat& x_path, const Vec& w0,
                               const ManifoldGeometry& geom) {
    const int n = geom.dim();
    const int L = geom.links();
    const int k = n - L;
    const int T = static_cast<int>(x_path.cols());
    if (T == 0) throw ValidationError("skorokhod_solve: empty driving path");
    if (x_path.rows() != n || w0.size() != n)
        throw ValidationError("skorokhod_solve: dimension mismatch");

    SkorokhodPaths out;
    out.w.resize(n, T);
    out.y = Mat::Zero(L, T);
    out.z = Mat::Zero(std::max(k, 0), T);

    Mat BA = geom.B.asDiagonal() * geom.A_phase.transpose();  // n x L

    Vec wG = geom.G.transpose() * w0;
    Vec y = Vec::Zero(L);
    Vec z = Vec::Zero(std::max(k, 0));
    out.w.col(0) = w0;

    Vec q(L), w_next(L), dy(L);
    for (int i = 1; i < T; ++i) {
        Vec dx = x_path.col(i) - x_path.col(i - 1);
        q = wG + geom.G.transpose() * dx;
        skorokhod_step(geom.R, q, w_next, dy);
        out.max_complementarity =
            std::max(out.max_complementarity, std::abs(w_next.dot(dy)));
        wG = w_next;
        y += dy;
        if (k > 0) z -= geom.H.transpose() * dx;  // keeps H'w = 0
        out.y.col(i) = y;
        if (k > 0) out.z.col(i) = z;
        // w = B A' (G'w) + B H (H'w) and H'w = 0 by the choice of z, so the
        // full workload is the lift of the orthant iterate
        out.w.col(i) = BA * wG;
    }
    return out;
}

}  // namespace pfnet
