#include "pfnet/diffusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <Eigen/Cholesky>

#include "pfnet/stats.hpp"

namespace pfnet {

namespace {

int worker_count(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("PF_HT_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0) n = std::min(n, cap);
    }
    return n;
}

// standard normal from raw 64-bit draws (Box-Muller, deterministic)
struct NormalSource {
    std::mt19937_64 rng;
    bool have_spare = false;
    double spare = 0.0;
    explicit NormalSource(std::uint64_t seed) : rng(seed) {}
    double operator()() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        double u1 = uniform01(rng()), u2 = uniform01(rng());
        while (u1 <= 0.0) u1 = uniform01(rng());
        double m = std::sqrt(-2.0 * std::log(u1));
        spare = m * std::sin(2.0 * M_PI * u2);
        have_spare = true;
        return m * std::cos(2.0 * M_PI * u2);
    }
};

}  // namespace

void covariance_free_process(const Network& net, Mat& Sigma_X, Mat& Sigma_U) {
    const int n = net.total_phases;
    Sigma_U = Mat::Zero(n, n);
    Sigma_X = Mat::Zero(n, n);
    for (int r = 0; r < net.routes(); ++r) {
        const auto& d = net.dists[r];
        const int F = d.phases();
        const int off = net.offsets[r];
        Vec rm = net.rho_phase[r].cwiseProduct(d.mu);  // rho_f mu_f
        Mat SU = Mat::Zero(F, F);
        SU.diagonal() = (Mat::Identity(F, F) + d.P.transpose()) * rm;
        SU -= d.P.transpose() * Mat(rm.asDiagonal());
        SU -= Mat(rm.asDiagonal()) * d.P;
        Sigma_U.block(off, off, F, F) = SU;

        Mat inner = SU;
        inner += Mat(Vec(net.lambda(r) * d.a).asDiagonal());
        Mat inv = (Mat::Identity(F, F) - d.P.transpose()).fullPivLu().inverse();
        Mat block = d.m.asDiagonal() * inv * inner * inv.transpose() * d.m.asDiagonal();
        Sigma_X.block(off, off, F, F) = 0.5 * (block + block.transpose());
    }
}

DiffusionParams diffusion_params(const Network& net) {
    DiffusionParams p;
    covariance_free_process(net, p.Sigma_X, p.Sigma_U);
    ManifoldGeometry geom = build_geometry(net);
    p.R = geom.R;
    p.D_diag = net.lambda.cwiseProduct(net.beta2);
    Mat ADA = net.A * p.D_diag.asDiagonal() * net.A.transpose();
    p.Gamma = p.R * ADA * p.R;
    return p;
}

ReflectionCheck reflection_matrix(const Network& net, const ManifoldGeometry& geom) {
    ReflectionCheck chk;
    chk.R = geom.R;
    Vec D = net.lambda.cwiseProduct(net.beta2);
    Mat ADA = net.A * D.asDiagonal() * net.A.transpose();
    Eigen::LLT<Mat> llt(ADA);
    if (llt.info() != Eigen::Success)
        throw NumericError("reflection_matrix: A D A' not positive definite");
    chk.R_closed = 2.0 * llt.solve(Mat::Identity(net.links(), net.links()));
    double scale = chk.R.cwiseAbs().maxCoeff();
    chk.rel_residual = (chk.R - chk.R_closed).cwiseAbs().maxCoeff() / scale;
    if (chk.rel_residual > 1e-9)
        throw NumericError("reflection matrix mismatch: (A B A')^{-1} vs closed form, residual " +
                           std::to_string(chk.rel_residual));
    return chk;
}

ProductFormResidual check_product_form(const Mat& Gamma, const Mat& R) {
    Vec Gd = Gamma.diagonal();
    Vec Rd = R.diagonal();
    Mat lhs = 2.0 * Gamma;
    Mat rhs = R * Rd.cwiseInverse().asDiagonal() * Mat(Gd.asDiagonal()) +
              Mat(Gd.asDiagonal()) * Rd.cwiseInverse().asDiagonal() * R.transpose();
    double scale = Gamma.cwiseAbs().maxCoeff();
    ProductFormResidual res;
    res.skew_symmetry = (lhs - rhs).cwiseAbs().maxCoeff() / scale;
    res.gamma_vs_2r = (Gamma - 2.0 * R).cwiseAbs().maxCoeff() / scale;
    return res;
}

Vec product_form_rates(const Mat& Gamma, const Mat& R, const Vec& theta_link) {
    if ((theta_link.array() <= 0.0).any())
        throw ValidationError("product_form_rates: theta must be strictly positive");
    return 2.0 * Gamma.diagonal().cwiseInverse().cwiseProduct(
                     R.diagonal().cwiseProduct(theta_link));
}

SteadyStateApprox approx_steady_state(const Network& net_k, int samples,
                                      std::uint64_t seed) {
    SteadyStateApprox out;
    out.slack = net_k.c - net_k.A * net_k.rho;
    if ((out.slack.array() <= 0.0).any())
        throw ValidationError("approx_steady_state: instance must have positive slack");
    const int R = net_k.routes();
    const int L = net_k.links();
    out.mean = Vec::Zero(R);
    out.variance = Vec::Zero(R);
    for (int r = 0; r < R; ++r)
        for (int l = 0; l < L; ++l) {
            out.mean(r) += net_k.rho(r) * net_k.A(l, r) / out.slack(l);
            out.variance(r) += net_k.rho(r) * net_k.rho(r) * net_k.A(l, r) * net_k.A(l, r) /
                               (out.slack(l) * out.slack(l));
        }
    out.samples.resize(R, samples);
    std::mt19937_64 rng(seed);
    Vec E(L);
    for (int s = 0; s < samples; ++s) {
        for (int l = 0; l < L; ++l)
            E(l) = -std::log1p(-uniform01(rng())) / out.slack(l);
        out.samples.col(s) = net_k.rho.cwiseProduct(net_k.A.transpose() * E);
    }
    return out;
}

SrbmResult simulate_srbm(const Mat& R, const Mat& Gamma, const Vec& theta_link,
                         const SrbmConfig& cfg) {
    const int L = static_cast<int>(R.rows());
    if ((theta_link.array() <= 0.0).any())
        throw ValidationError("simulate_srbm: theta must be strictly positive");
    if (cfg.step <= 0.0 || cfg.horizon <= 0.0)
        throw ValidationError("simulate_srbm: step and horizon must be positive");

    Eigen::LLT<Mat> llt(Gamma);
    if (llt.info() != Eigen::Success)
        throw NumericError("simulate_srbm: Gamma not positive definite");
    const Mat chol = llt.matrixL();
    const Vec drift = -(R * theta_link);  // free-process drift per unit time

    const int paths = std::max(1, cfg.paths);
    const double per_path = cfg.horizon / paths;
    const int warm_steps = static_cast<int>(cfg.warmup_fraction * per_path / cfg.step);
    const int run_steps = static_cast<int>(per_path / cfg.step);
    const int thin_every = std::max(1, static_cast<int>(cfg.thin_dt / cfg.step));

    std::vector<Mat> path_samples(paths);
    std::vector<Vec> path_mean(paths, Vec::Zero(L));

    auto run_path = [&](int p) {
        NormalSource normal(cfg.seed + 0x9e3779b97f4a7c15ull * (p + 1));
        const double sqrt_h = std::sqrt(cfg.step);
        Vec w = Vec::Zero(L), z(L), q(L), w_next(L), dy(L);
        Vec mean = Vec::Zero(L);
        Mat samples(L, run_steps / thin_every + 1);
        int kept = 0;
        for (int i = -warm_steps; i < run_steps; ++i) {
            for (int l = 0; l < L; ++l) z(l) = normal();
            q = w + drift * cfg.step + sqrt_h * (chol * z);
            if ((q.array() >= 0.0).all()) {
                w = q;
            } else {
                skorokhod_step(R, q, w_next, dy);
                w = w_next;
            }
            if (i >= 0) {
                mean += w;
                if (i % thin_every == 0) samples.col(kept++) = w;
            }
        }
        samples.conservativeResize(L, kept);
        path_samples[p] = std::move(samples);
        path_mean[p] = mean / run_steps;
    };

    if (paths == 1) {
        run_path(0);
    } else {
        int workers = std::min(paths, worker_count(0));
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int wkr = 0; wkr < workers; ++wkr)
            pool.emplace_back([&]() {
                int p;
                while ((p = next.fetch_add(1)) < paths) run_path(p);
            });
        for (auto& th : pool) th.join();
    }

    SrbmResult out;
    int total = 0;
    for (const auto& s : path_samples) total += static_cast<int>(s.cols());
    out.samples.resize(L, total);
    int at = 0;
    out.mean = Vec::Zero(L);
    for (int p = 0; p < paths; ++p) {
        out.samples.middleCols(at, path_samples[p].cols()) = path_samples[p];
        at += static_cast<int>(path_samples[p].cols());
        out.mean += path_mean[p];
    }
    out.mean /= paths;

    out.corr = Mat::Identity(L, L);
    for (int i = 0; i < L; ++i)
        for (int j = i + 1; j < L; ++j) {
            std::vector<double> xi(total), xj(total);
            for (int s = 0; s < total; ++s) {
                xi[s] = out.samples(i, s);
                xj[s] = out.samples(j, s);
            }
            double c = pearson_correlation(xi, xj);
            out.corr(i, j) = out.corr(j, i) = c;
        }
    return out;
}

HtValidationReport validate_heavy_traffic(const Network& net, const std::vector<int>& k_list,
                                          const Vec& theta, int seeds, const HtOptions& opts) {
    if (!net.critical)
        throw ValidationError("validate_heavy_traffic: base network must be critical");
    const int R = net.routes();
    ManifoldGeometry geom = build_geometry(net);

    HtValidationReport report;
    for (int k : k_list) {
        Network net_k = build_ht_instance(net, k, theta);
        SteadyStateApprox approx = approx_steady_state(net_k, 20000, opts.seed ^ 0xabcdefull);

        const double horizon = std::max(opts.min_horizon, opts.horizon_per_k2 * k * k);
        HtKReport krep;
        krep.k = k;
        krep.horizon = horizon;

        struct SeedOut {
            Vec mean;
            double route_avg_err = 0.0;
            double ssc = 0.0;
            std::vector<std::vector<double>> thinned;  // per route
        };
        std::vector<SeedOut> per_seed(seeds);

        auto run_seed = [&](int s) {
            SimConfig cfg;
            cfg.net = net_k;
            cfg.seed = opts.seed + 1000ull * k + s;
            cfg.horizon = horizon;
            cfg.sample_interval = opts.ssc_grid_dt * double(k) * double(k);
            SimResult res = simulate(cfg);

            SeedOut so;
            so.mean = res.mean_n_route;
            double err = 0.0;
            for (int r = 0; r < R; ++r)
                err += std::abs(res.mean_n_route(r) - approx.mean(r)) / approx.mean(r);
            so.route_avg_err = err / R;

            double max_dist = 0.0, max_norm = 0.0;
            const int warm_cols =
                static_cast<int>(res.sample_times.size() * cfg.warmup_fraction);
            for (int i = warm_cols; i < res.samples_workload.cols(); ++i) {
                Vec w_hat = res.samples_workload.col(i) / double(k);
                max_dist = std::max(max_dist, manifold_dist(w_hat, geom));
                max_norm = std::max(max_norm, w_hat.norm());
            }
            so.ssc = max_norm > 0.0 ? max_dist / max_norm : 0.0;

            so.thinned.resize(R);
            for (int r = 0; r < R; ++r)
                for (int i = warm_cols; i < res.samples_route.cols(); ++i)
                    so.thinned[r].push_back(res.samples_route(r, i));
            per_seed[s] = std::move(so);
        };

        int workers = std::min(seeds, worker_count(opts.threads));
        if (workers <= 1) {
            for (int s = 0; s < seeds; ++s) run_seed(s);
        } else {
            std::atomic<int> next{0};
            std::vector<std::thread> pool;
            for (int wkr = 0; wkr < workers; ++wkr)
                pool.emplace_back([&]() {
                    int s;
                    while ((s = next.fetch_add(1)) < seeds) run_seed(s);
                });
            for (auto& th : pool) th.join();
        }

        std::vector<double> errs(seeds), sscs(seeds);
        for (int s = 0; s < seeds; ++s) {
            errs[s] = per_seed[s].route_avg_err;
            sscs[s] = per_seed[s].ssc;
        }
        krep.median_rel_error = median(errs);
        krep.median_ssc = median(sscs);

        for (int r = 0; r < R; ++r) {
            HtRouteStat stat;
            stat.route = r;
            std::vector<double> means(seeds);
            std::vector<double> pooled;
            for (int s = 0; s < seeds; ++s) {
                means[s] = per_seed[s].mean(r);
                pooled.insert(pooled.end(), per_seed[s].thinned[r].begin(),
                              per_seed[s].thinned[r].end());
            }
            stat.empirical_mean = median(means);
            stat.approx_mean = approx.mean(r);
            stat.rel_error = std::abs(stat.empirical_mean - stat.approx_mean) / stat.approx_mean;
            std::vector<double> approx_r(approx.samples.cols());
            for (int s = 0; s < approx.samples.cols(); ++s) approx_r[s] = approx.samples(r, s);
            stat.ks_stat = ks_statistic_two_sample(std::move(pooled), std::move(approx_r));
            krep.routes.push_back(stat);
        }
        report.per_k.push_back(std::move(krep));
    }
    return report;
}

}  // namespace pfnet
