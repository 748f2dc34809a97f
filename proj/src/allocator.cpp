#include "pfnet/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace pfnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Dual objective g(eta) = c'eta - sum_{r in pos} n_r log((A'eta)_r).
// Returns +inf when some priced route has zeta_r <= 0.
double dual_value(const Vec& eta, const Vec& n, const Mat& A, const Vec& c,
                  const std::vector<int>& pos) {
    double val = c.dot(eta);
    for (int r : pos) {
        double zeta = A.col(r).dot(eta);
        if (zeta <= 0.0) return kInf;
        val -= n(r) * std::log(zeta);
    }
    return val;
}

// Projected-gradient optimality residual ||eta - P_+(eta - grad)||_inf.
double projected_residual(const Vec& eta, const Vec& grad) {
    double res = 0.0;
    for (int l = 0; l < eta.size(); ++l) {
        double step = eta(l) - grad(l);
        res = std::max(res, std::abs(eta(l) - std::max(0.0, step)));
    }
    return res;
}

// Minimum-Euclidean-norm dual consistent with the converged zeta on priced
// routes and with complementarity on slack links.  Degenerate optima (A'
// restricted to positive routes rank deficient) otherwise leave eta
// solver-dependent; only zeta is unique.
void polish_eta(Vec& eta, const Vec& n, const Mat& A, const Vec& c,
                const std::vector<int>& pos, double tol) {
    const int L = static_cast<int>(A.rows());
    Vec gamma_link = Vec::Zero(L);
    for (int r : pos) {
        double zeta = A.col(r).dot(eta);
        if (zeta <= 0.0) return;
        gamma_link += A.col(r) * (n(r) / zeta);
    }
    std::vector<int> active;
    for (int l = 0; l < L; ++l)
        if (c(l) - gamma_link(l) <= std::max(tol, 1e-9 * c(l))) active.push_back(l);
    if (active.empty() || active.size() == static_cast<size_t>(L)) return;

    Mat M(static_cast<int>(pos.size()), static_cast<int>(active.size()));
    Vec zeta(pos.size());
    for (size_t i = 0; i < pos.size(); ++i) {
        zeta(static_cast<int>(i)) = A.col(pos[i]).dot(eta);
        for (size_t j = 0; j < active.size(); ++j)
            M(static_cast<int>(i), static_cast<int>(j)) = A(active[j], pos[i]);
    }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(M);
    Vec eta_act = cod.solve(zeta);
    double scale = std::max(1.0, zeta.lpNorm<Eigen::Infinity>());
    if ((M * eta_act - zeta).lpNorm<Eigen::Infinity>() > 1e-9 * scale) return;
    if (eta_act.minCoeff() < -1e-9 * scale) return;
    eta.setZero();
    for (size_t j = 0; j < active.size(); ++j)
        eta(active[j]) = std::max(0.0, eta_act(static_cast<int>(j)));
}

}  // namespace

double KktReport::max() const {
    return std::max({stationarity, primal, dual, complementarity, zero_routes});
}

Allocation solve_pf(const Vec& n, const Mat& A, const Vec& c, const PfOptions& opts) {
    const int L = static_cast<int>(A.rows());
    const int R = static_cast<int>(A.cols());

    Allocation out;
    out.gamma_route = Vec::Zero(R);
    out.eta = Vec::Zero(L);

    if ((n.array() < 0.0).any())
        throw ValidationError("solve_pf: negative state");

    std::vector<int> pos;
    for (int r = 0; r < R; ++r)
        if (n(r) > 0.0) pos.push_back(r);
    if (pos.empty()) return out;

    const double n_total = n.sum();
    Vec eta = Vec::Constant(L, n_total / (L * c.minCoeff()));

    Vec grad(L), zeta(R);
    auto gradient_at = [&](const Vec& e, Vec& g_out) {
        g_out = c;
        for (int r : pos) {
            double z = A.col(r).dot(e);
            if (z <= 0.0) {
                g_out.setConstant(kInf);
                return;
            }
            g_out -= A.col(r) * (n(r) / z);
        }
    };

    double value = dual_value(eta, n, A, c, pos);
    int it = 0;
    double res = kInf;
    for (; it < opts.max_iter; ++it) {
        // gradient: c - A (n ./ zeta) over priced routes
        grad = c;
        for (int r : pos) {
            double z = A.col(r).dot(eta);
            zeta(r) = z;
            grad -= A.col(r) * (n(r) / z);
        }
        res = projected_residual(eta, grad);
        if (res <= opts.tol) break;

        // free set: strictly positive coordinates plus those pushed inward
        std::vector<int> free;
        const double act_eps = 1e-12 * std::max(1.0, eta.lpNorm<Eigen::Infinity>());
        for (int l = 0; l < L; ++l)
            if (eta(l) > act_eps || grad(l) < 0.0) free.push_back(l);
        if (free.empty()) break;  // stationary at the origin face

        Vec dir = Vec::Zero(L);
        bool newton_ok = false;
        {
            const int nf = static_cast<int>(free.size());
            Mat Hf = Mat::Zero(nf, nf);
            Vec gf(nf);
            for (int i = 0; i < nf; ++i) gf(i) = grad(free[i]);
            for (int r : pos) {
                double w = n(r) / (zeta(r) * zeta(r));
                for (int i = 0; i < nf; ++i) {
                    double ai = A(free[i], r);
                    if (ai == 0.0) continue;
                    for (int j = 0; j <= i; ++j)
                        Hf(i, j) += w * ai * A(free[j], r);
                }
            }
            Hf = Hf.selfadjointView<Eigen::Lower>();
            // tiny ridge keeps degenerate (replicated-column) cases solvable
            Hf.diagonal().array() += 1e-14 * (1.0 + Hf.trace());
            Eigen::LDLT<Mat> ldlt(Hf);
            if (ldlt.info() == Eigen::Success) {
                Vec step = ldlt.solve(-gf);
                if (step.allFinite() && gf.dot(step) < 0.0) {
                    for (int i = 0; i < nf; ++i) dir(free[i]) = step(i);
                    newton_ok = true;
                }
            }
        }
        if (!newton_ok)
            for (int l : free) dir(l) = -grad(l);

        // Armijo backtracking on the projected arc.  Near the optimum the
        // objective flattens below double resolution, so the untruncated
        // Newton step is also accepted on projected-residual decrease.
        double t = 1.0;
        bool moved = false;
        Vec cand_grad(L);
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            Vec cand = (eta + t * dir).cwiseMax(0.0);
            double cand_val = dual_value(cand, n, A, c, pos);
            bool accept = cand_val < value + 1e-4 * grad.dot(cand - eta);
            if (!accept && ls == 0 && std::isfinite(cand_val)) {
                gradient_at(cand, cand_grad);
                accept = projected_residual(cand, cand_grad) < 0.5 * res;
            }
            if (accept) {
                eta = cand;
                value = cand_val;
                moved = true;
                break;
            }
        }
        if (!moved) {
            // projected-gradient rescue with independent backtracking
            t = 1.0 / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
            for (int ls = 0; ls < 80; ++ls, t *= 0.5) {
                Vec cand = (eta - t * grad).cwiseMax(0.0);
                double cand_val = dual_value(cand, n, A, c, pos);
                if (cand_val < value) {
                    eta = cand;
                    value = cand_val;
                    moved = true;
                    break;
                }
            }
        }
        if (!moved) break;  // no further progress representable in doubles
    }

    // final gradient/residual at the accepted eta
    grad = c;
    for (int r : pos) {
        zeta(r) = A.col(r).dot(eta);
        grad -= A.col(r) * (n(r) / zeta(r));
    }
    res = projected_residual(eta, grad);
    if (res > opts.tol) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "solve_pf did not reach tolerance: residual %.3e after %d iterations",
                      res, it);
        throw NumericError(buf);
    }

    if (opts.polish_eta) polish_eta(eta, n, A, c, pos, opts.tol);

    out.eta = eta;
    for (int r : pos) out.gamma_route(r) = n(r) / A.col(r).dot(eta);
    out.iterations = it;
    out.kkt_residual = verify_kkt(n, out.gamma_route, out.eta, A, c).max();
    return out;
}

Allocation solve_pf(const Vec& n_route, const Network& net, double tol) {
    PfOptions opts;
    opts.tol = tol;
    return solve_pf(n_route, net.A, net.c, opts);
}

Vec phase_split(const Vec& n_phase, const Network& net, const Allocation& alloc) {
    Vec split = Vec::Zero(net.total_phases);
    for (int r = 0; r < net.routes(); ++r) {
        const int off = net.offsets[r];
        const int F = net.dists[r].phases();
        double n_r = n_phase.segment(off, F).sum();
        if (n_r <= 0.0) continue;  // 0/0 = 0 convention
        split.segment(off, F) = n_phase.segment(off, F) * (alloc.gamma_route(r) / n_r);
    }
    return split;
}

KktReport verify_kkt(const Vec& n, const Vec& gamma, const Vec& eta,
                     const Mat& A, const Vec& c) {
    KktReport rep;
    const int R = static_cast<int>(A.cols());
    Vec zeta = A.transpose() * eta;
    for (int r = 0; r < R; ++r) {
        if (n(r) > 0.0) {
            double ratio = gamma(r) > 0.0 ? n(r) / gamma(r) : kInf;
            rep.stationarity = std::max(rep.stationarity, std::abs(ratio - zeta(r)));
        } else {
            rep.zero_routes = std::max(rep.zero_routes, std::abs(gamma(r)));
        }
    }
    Vec slack = A * gamma - c;
    rep.primal = std::max(0.0, slack.maxCoeff());
    rep.dual = std::max(0.0, -eta.minCoeff());
    rep.complementarity = eta.cwiseProduct(slack).lpNorm<Eigen::Infinity>();
    return rep;
}

Vec RoutedSystem::loads() const {
    const int R = static_cast<int>(lambda.size());
    Mat M = Mat::Identity(R, R) - P.transpose();
    Eigen::FullPivLU<Mat> lu(M);
    if (!lu.isInvertible()) throw NumericError("I - P singular in routed system");
    Vec through = lu.solve(lambda);
    return through.cwiseQuotient(mu);
}

PhiResult extend_phi(const Vec& n, const RoutedSystem& sys, const Allocation& alloc) {
    const int R = static_cast<int>(n.size());
    std::vector<int> zero, plus;
    for (int r = 0; r < R; ++r)
        (n(r) > 0.0 ? plus : zero).push_back(r);

    PhiResult out;
    out.phi = alloc.gamma_route;
    if (!zero.empty()) {
        const int Z = static_cast<int>(zero.size());
        // d|0 = lambda|0 + P^{00'} d|0 + inflow from positive routes
        Mat M = Mat::Identity(Z, Z);
        Vec rhs(Z);
        for (int i = 0; i < Z; ++i) {
            rhs(i) = sys.lambda(zero[i]);
            for (int j = 0; j < Z; ++j) M(i, j) -= sys.P(zero[j], zero[i]);
            for (int s : plus)
                rhs(i) += sys.P(s, zero[i]) * sys.mu(s) * alloc.gamma_route(s);
        }
        Eigen::FullPivLU<Mat> lu(M);
        if (!lu.isInvertible())
            throw NumericError("extend_phi: I - P^{00} singular on the zero set");
        Vec d0 = lu.solve(rhs);
        for (int i = 0; i < Z; ++i) out.phi(zero[i]) = d0(i) / sys.mu(zero[i]);
    }
    out.capacity_violation = (sys.A * out.phi - sys.c).maxCoeff();
    return out;
}

PhiResult extend_phi(const Vec& n, const RoutedSystem& sys, const PfOptions& opts) {
    return extend_phi(n, sys, solve_pf(n, sys.A, sys.c, opts));
}

}  // namespace pfnet
