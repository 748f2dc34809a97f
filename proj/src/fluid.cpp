#include "pfnet/fluid.hpp"

#include <cmath>

#include <Eigen/LU>

namespace pfnet {

FluidConfig make_fluid_config(RoutedSystem sys, double horizon, double h) {
    FluidConfig cfg;
    cfg.sys = std::move(sys);
    cfg.horizon = horizon;
    cfg.h = h;
    cfg.rho = cfg.sys.loads();
    if ((cfg.sys.lambda.array() <= 0.0).any())
        throw ValidationError("fluid model requires lambda_r > 0 on every route");
    return cfg;
}

FluidConfig phase_level_fluid(const Network& net, double horizon, double h) {
    RoutedSystem sys;
    sys.A = net.link_phase_matrix();
    sys.c = net.c;
    sys.lambda = net.lambda_phase();
    sys.mu = net.mu_phase();
    sys.P = net.routing_phase();
    return make_fluid_config(std::move(sys), horizon, h);
}

namespace {

double lyapunov_value(const Vec& n, const Vec& phi, const Vec& rho) {
    double f = 0.0;
    for (int r = 0; r < n.size(); ++r)
        if (n(r) > 0.0) f += n(r) * std::log(phi(r) / rho(r));
    return f;
}

}  // namespace

FluidTrajectory integrate_fluid(const Vec& n0, const FluidConfig& cfg) {
    if ((n0.array() < 0.0).any())
        throw ValidationError("integrate_fluid: negative initial state");
    const int R = cfg.routes();
    const int L = static_cast<int>(cfg.sys.c.size());

    double h = cfg.h;
    if (h <= 0.0) {
        double scale = std::max(1.0, n0.lpNorm<1>());
        h = 1e-3 * scale / cfg.sys.lambda.minCoeff();
    }
    const int steps = std::max(1, static_cast<int>(std::ceil(cfg.horizon / h)));
    const double zero_thresh = h * 1e-6 * std::max(1.0, n0.lpNorm<Eigen::Infinity>());

    // ndot = lambda - (I - P') diag(mu) phi
    Mat flow = (Mat::Identity(R, R) - cfg.sys.P.transpose()) * cfg.sys.mu.asDiagonal();

    PfOptions pf;
    pf.tol = cfg.pf_tol;

    const int stride = std::max(1, cfg.store_every);
    const int stored = steps / stride + 1;
    FluidTrajectory traj;
    traj.step = h;
    traj.times.reserve(stored + 1);
    traj.states.resize(R, stored + 1);
    traj.phis.resize(R, stored + 1);
    traj.workloads.resize(R, stored + 1);
    traj.unused.resize(L, stored + 1);
    traj.lyapunov.resize(stored + 1);

    Mat I_Pt_inv = (Mat::Identity(R, R) - cfg.sys.P.transpose()).fullPivLu().inverse();
    Mat workload_map = cfg.sys.mu.cwiseInverse().asDiagonal() * I_Pt_inv;

    Vec n = n0;
    Vec y = Vec::Zero(L);
    Vec phi_sum = Vec::Zero(R);  // trapezoid accumulation for the defect check
    int col = 0;

    auto allocate = [&](const Vec& state) -> Vec {
        Allocation alloc = solve_pf(state, cfg.sys.A, cfg.sys.c, pf);
        bool has_zero = (state.array() <= 0.0).any();
        if (has_zero) {
            PhiResult ext = extend_phi(state, cfg.sys, alloc);
            if (ext.capacity_violation <= 1e-9 * std::max(1.0, cfg.sys.c.maxCoeff()))
                return ext.phi;
            // extension infeasible: the zero coordinates detach from the
            // boundary; evolve them with Lambda_r = 0 for this step
        }
        return alloc.gamma_route;
    };

    Vec phi_prev;
    for (int step = 0; step <= steps; ++step) {
        for (int r = 0; r < R; ++r)
            if (n(r) < zero_thresh) n(r) = 0.0;

        Vec phi = allocate(n);
        if (step > 0) {
            phi_sum += 0.5 * h * (phi_prev + phi);
            y += 0.5 * h * (cfg.sys.A * (2.0 * cfg.rho - phi_prev - phi));
        }
        phi_prev = phi;

        if (step % stride == 0 || step == steps) {
            traj.times.push_back(step * h);
            traj.states.col(col) = n;
            traj.phis.col(col) = phi;
            traj.workloads.col(col) = workload_map * n;
            traj.unused.col(col) = y;
            traj.lyapunov(col) = lyapunov_value(n, phi, cfg.rho);
            ++col;
        }
        if (step == steps) break;

        n += h * (cfg.sys.lambda - flow * phi);
        if (!n.allFinite())
            throw NumericError("integrate_fluid: non-finite state at t = " +
                               std::to_string(step * h));
        n = n.cwiseMax(0.0);
    }

    traj.states.conservativeResize(R, col);
    traj.phis.conservativeResize(R, col);
    traj.workloads.conservativeResize(R, col);
    traj.unused.conservativeResize(L, col);
    traj.lyapunov.conservativeResize(col);

    Vec integrated = n0 + cfg.sys.lambda * (steps * h) - flow * phi_sum;
    traj.integral_defect = (traj.states.col(col - 1) - integrated).lpNorm<Eigen::Infinity>();
    return traj;
}

double lyapunov(const Vec& n, const FluidConfig& cfg) {
    if ((n.array() <= 0.0).all()) return 0.0;
    PfOptions pf;
    pf.tol = cfg.pf_tol;
    Allocation alloc = solve_pf(n, cfg.sys.A, cfg.sys.c, pf);
    return lyapunov_value(n, alloc.gamma_route, cfg.rho);
}

double lyapunov_derivative_bound(const Vec& n, const FluidConfig& cfg) {
    PfOptions pf;
    pf.tol = cfg.pf_tol;
    Allocation alloc = solve_pf(n, cfg.sys.A, cfg.sys.c, pf);
    double bound = 0.0;
    for (int r = 0; r < n.size(); ++r) {
        if (n(r) <= 0.0) continue;
        double ratio = alloc.gamma_route(r) / cfg.rho(r);
        bound -= cfg.sys.lambda(r) * (ratio - 1.0) * std::log(ratio);
    }
    return bound;
}

RearrangementResult rearrangement_bound(const Vec& u, const Mat& Ptilde) {
    const int R = static_cast<int>(u.size());
    Eigen::VectorXcd eig = Ptilde.eigenvalues();
    double spectral = 0.0;
    for (int i = 0; i < eig.size(); ++i) spectral = std::max(spectral, std::abs(eig(i)));
    if (spectral >= 1.0)
        throw ValidationError("rearrangement_bound: spectral radius of P >= 1");

    Vec v = (u.array().exp() - 1.0).matrix();
    Vec q = v.cwiseProduct(u - Ptilde * u);  // k = 0 term
    RearrangementResult out;
    out.h = Vec::Zero(R);
    Vec term = q;
    for (int k = 0; k < 100000; ++k) {
        out.h += term;
        if (term.lpNorm<Eigen::Infinity>() < 1e-14) break;
        term = Ptilde * term;
    }
    out.ok = true;
    for (int r = 0; r < R; ++r)
        if (out.h(r) < u(r) * (std::exp(u(r)) - 1.0) - 1e-10) out.ok = false;
    return out;
}

ConvergenceReport convergence_metrics(const FluidTrajectory& traj,
                                      const ManifoldGeometry& geom) {
    ConvergenceReport rep;
    const int K = static_cast<int>(traj.times.size());
    rep.dist_series.resize(K);
    for (int i = 0; i < K; ++i)
        rep.dist_series[i] = manifold_dist(traj.workloads.col(i), geom);
    rep.final_dist = rep.dist_series.back();

    Vec n_inf = traj.states.col(K - 1);
    std::vector<double> err(K);
    for (int i = 0; i < K; ++i) err[i] = (traj.states.col(i) - n_inf).norm();

    const double eps_grid[3] = {1e-1, 1e-2, 1e-3};
    for (int j = 0; j < 3; ++j) {
        int idx = K - 1;
        while (idx > 0 && err[idx - 1] < eps_grid[j]) --idx;
        rep.t_eps[j] = traj.times[idx];
    }

    // least-squares slope of log err(t) over the window where the error is
    // between 50% and 1e-6 of its initial size
    double lo = std::max(1e-12, 1e-6 * err[0]);
    double hi = 0.5 * err[0];
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int i = 0; i < K; ++i) {
        if (err[i] <= lo || err[i] > hi) continue;
        double x = traj.times[i], y = std::log(err[i]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++cnt;
    }
    if (cnt >= 2 && sxx * cnt - sx * sx > 0.0)
        rep.decay_rate = -(sxy * cnt - sx * sy) / (sxx * cnt - sx * sx);
    return rep;
}

}  // namespace pfnet
