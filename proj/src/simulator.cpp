#include "pfnet/simulator.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

#include <Eigen/LU>

#include "pfnet/stats.hpp"

namespace pfnet {

namespace {

struct AllocEntry {
    std::vector<double> gamma;  // route allocation
    std::vector<double> slack;  // c - A Lambda per link
    double violation = 0.0;     // max (A Lambda - c)
};

struct CountKeyHash {
    std::size_t operator()(const std::vector<std::int64_t>& key) const {
        std::size_t h = 1469598103934665603ull;
        for (auto v : key) {
            h ^= static_cast<std::size_t>(v);
            h *= 1099511628211ull;
        }
        return h;
    }
};

}  // namespace

Network build_ht_instance(const Network& net, int k, const Vec& theta) {
    if (!net.critical)
        throw ValidationError("build_ht_instance: base network must be critical (A rho = c)");
    if (k < 1) throw ValidationError("build_ht_instance: k must be >= 1");
    if (theta.size() != net.routes() || (theta.array() < 0.0).any())
        throw ValidationError("build_ht_instance: theta must be nonnegative, length R");
    Vec lambda_k(net.routes());
    for (int r = 0; r < net.routes(); ++r) {
        double shift = theta(r) / (k * net.rho(r));
        if (shift >= 1.0)
            throw ValidationError("build_ht_instance: theta_r/(k rho_r) >= 1 leaves no arrivals");
        lambda_k(r) = net.lambda(r) * (1.0 - shift);
    }
    return make_network(net.A, net.c, lambda_k, net.dists);
}

SimResult simulate(const SimConfig& cfg) {
    const Network& net = cfg.net;
    {
        ValidationReport rep = validate_network(net);
        if (!rep.valid)
            throw ValidationError("simulate: invalid network: " + rep.violations.front());
    }
    if (cfg.horizon <= 0.0) throw ValidationError("simulate: horizon must be positive");
    if (cfg.warmup_fraction < 0.0 || cfg.warmup_fraction >= 1.0)
        throw ValidationError("simulate: warmup fraction must be in [0, 1)");

    const int R = net.routes();
    const int L = net.links();
    const int n_ph = net.total_phases;

    // flattened per-phase data
    std::vector<double> mu(n_ph), arr_rate(n_ph);
    std::vector<int> route_of(n_ph);
    for (int r = 0; r < R; ++r)
        for (int f = 0; f < net.dists[r].phases(); ++f) {
            int j = net.offsets[r] + f;
            mu[j] = net.dists[r].mu(f);
            arr_rate[j] = net.lambda(r) * net.dists[r].a(f);
            route_of[j] = r;
        }
    const double lambda_total = net.lambda.sum();

    // workload map diag(m)(I - P')^{-1}
    Mat P = net.routing_phase();
    Mat workload_map =
        net.m_phase().asDiagonal() *
        (Mat::Identity(n_ph, n_ph) - P.transpose()).fullPivLu().inverse();

    // state
    std::vector<std::int64_t> nph(n_ph, 0);
    std::vector<std::int64_t> nrt(R, 0);
    std::vector<double> srv_mass(R, 0.0);  // S_r = sum_f mu_f nph_f
    if (cfg.n0_phase.size() > 0) {
        if (cfg.n0_phase.size() != n_ph || (cfg.n0_phase.array() < 0).any())
            throw ValidationError("simulate: bad initial phase counts");
        for (int j = 0; j < n_ph; ++j) {
            nph[j] = cfg.n0_phase(j);
            nrt[route_of[j]] += nph[j];
            srv_mass[route_of[j]] += mu[j] * nph[j];
        }
    }

    // allocation cache keyed by the route-count vector
    std::unordered_map<std::vector<std::int64_t>, AllocEntry, CountKeyHash> cache;
    SimResult out;
    out.max_capacity_violation = 0.0;
    auto lookup_alloc = [&]() -> const AllocEntry* {
        auto it = cache.find(nrt);
        if (it != cache.end()) return &it->second;
        Vec n_vec(R);
        for (int r = 0; r < R; ++r) n_vec(r) = static_cast<double>(nrt[r]);
        Allocation alloc = solve_pf(n_vec, net, 1e-10);
        AllocEntry e;
        e.gamma.assign(alloc.gamma_route.data(), alloc.gamma_route.data() + R);
        Vec slack = net.c - net.A * alloc.gamma_route;
        e.slack.assign(slack.data(), slack.data() + L);
        e.violation = -slack.minCoeff();
        out.max_capacity_violation = std::max(out.max_capacity_violation, e.violation);
        if (cache.size() > 2'000'000) cache.clear();  // hard cap on memory
        return &cache.emplace(nrt, std::move(e)).first->second;
    };
    const AllocEntry* alloc = lookup_alloc();

    // accumulators
    const double t_warm = cfg.warmup_fraction * cfg.horizon;
    const int B = std::max(1, cfg.batches);
    const double batch_len = (cfg.horizon - t_warm) / B;
    std::vector<double> int_nph(n_ph, 0.0), int_nrt(R, 0.0), int_nrt2(R, 0.0);
    std::vector<double> batch_int(static_cast<std::size_t>(B) * R, 0.0);
    std::vector<double> y_acc(L, 0.0);
    out.departures_per_route = Vec::Zero(R);

    double sample_dt = cfg.sample_interval > 0.0 ? cfg.sample_interval : cfg.horizon / 2048.0;
    const int n_samples = static_cast<int>(std::floor(cfg.horizon / sample_dt)) + 1;
    out.sample_times.reserve(n_samples);
    out.samples_route.resize(R, n_samples);
    out.samples_phase.resize(n_ph, n_samples);
    out.samples_workload.resize(n_ph, n_samples);
    out.samples_unused.resize(L, n_samples);
    int sample_idx = 0;
    double next_sample = 0.0;

    std::mt19937_64 rng(cfg.seed);
    auto unif = [&rng]() { return uniform01(rng()); };

    double t = 0.0;
    Vec nph_vec(n_ph);
    auto record_sample = [&](double ts) {
        out.sample_times.push_back(ts);
        for (int r = 0; r < R; ++r) out.samples_route(r, sample_idx) = double(nrt[r]);
        for (int j = 0; j < n_ph; ++j) nph_vec(j) = double(nph[j]);
        out.samples_phase.col(sample_idx) = nph_vec;
        out.samples_workload.col(sample_idx) = workload_map * nph_vec;
        for (int l = 0; l < L; ++l)
            out.samples_unused(l, sample_idx) = y_acc[l] + alloc->slack[l] * (ts - t);
        ++sample_idx;
    };

    // accumulate the piecewise-constant state over [t, t_next)
    auto advance_to = [&](double t_next) {
        while (sample_idx < n_samples && next_sample <= t_next) {
            record_sample(next_sample);
            next_sample += sample_dt;
        }
        double lo = std::max(t, t_warm);
        if (t_next > lo) {
            double seg0 = lo, remaining = t_next - lo;
            // split across batch boundaries
            while (remaining > 0.0) {
                int b = std::min(B - 1, static_cast<int>((seg0 - t_warm) / batch_len));
                double seg_end = std::min(t_next, t_warm + (b + 1) * batch_len);
                double d = seg_end - seg0;
                for (int r = 0; r < R; ++r) batch_int[std::size_t(b) * R + r] += nrt[r] * d;
                seg0 = seg_end;
                remaining = t_next - seg0;
                if (d <= 0.0) break;
            }
            double d = t_next - lo;
            for (int j = 0; j < n_ph; ++j) int_nph[j] += nph[j] * d;
            for (int r = 0; r < R; ++r) {
                int_nrt[r] += double(nrt[r]) * d;
                int_nrt2[r] += double(nrt[r]) * double(nrt[r]) * d;
            }
        }
        double d_all = t_next - t;
        for (int l = 0; l < L; ++l) y_acc[l] += alloc->slack[l] * d_all;
        t = t_next;
    };

    std::vector<double> srv_rate(R, 0.0);
    while (true) {
        double total_srv = 0.0;
        for (int r = 0; r < R; ++r) {
            srv_rate[r] = nrt[r] > 0 ? alloc->gamma[r] * srv_mass[r] / double(nrt[r]) : 0.0;
            total_srv += srv_rate[r];
        }
        const double total = lambda_total + total_srv;
        if (total <= 0.0)
            throw NumericError("simulate: zero total rate (internal error)");

        double dt = -std::log1p(-unif()) / total;
        if (t + dt >= cfg.horizon) {
            advance_to(cfg.horizon);
            break;
        }
        advance_to(t + dt);
        ++out.events;

        double u = unif() * total;
        if (u < lambda_total) {
            // external arrival: route by lambda, phase by a
            int r = 0;
            double acc = net.lambda(0);
            while (u >= acc && r + 1 < R) acc += net.lambda(++r);
            double v = unif();
            const auto& d = net.dists[r];
            int f = 0;
            double ap = d.a(0);
            while (v >= ap && f + 1 < d.phases()) ap += d.a(++f);
            int j = net.offsets[r] + f;
            ++nph[j];
            ++nrt[r];
            srv_mass[r] += mu[j];
            alloc = lookup_alloc();
        } else {
            // phase completion
            double v = u - lambda_total;
            int r = 0;
            double acc = srv_rate[0];
            while (v >= acc && r + 1 < R) acc += srv_rate[++r];
            const auto& d = net.dists[r];
            // phase within the route, weighted by mu_f nph_f
            double w = unif() * srv_mass[r];
            int f = 0;
            int off = net.offsets[r];
            double ap = mu[off] * double(nph[off]);
            while (w >= ap && f + 1 < d.phases()) {
                ++f;
                ap += mu[off + f] * double(nph[off + f]);
            }
            int j = off + f;
            // routing: stay within the phase chain or depart
            double rr = unif();
            double cum = 0.0;
            int next = -1;
            for (int g = 0; g < d.phases(); ++g) {
                cum += d.P(f, g);
                if (rr < cum) { next = g; break; }
            }
            if (next >= 0) {
                --nph[j];
                ++nph[off + next];
                srv_mass[r] += mu[off + next] - mu[j];
                // route counts unchanged; allocation stays valid
            } else {
                --nph[j];
                --nrt[r];
                srv_mass[r] -= mu[j];
                if (nrt[r] == 0) srv_mass[r] = 0.0;  // clear accumulated rounding
                if (nph[j] < 0) throw NumericError("simulate: negative count (internal error)");
                out.departures_per_route(r) += 1.0;
                alloc = lookup_alloc();
            }
        }
    }
    out.time = t;

    const double span = cfg.horizon - t_warm;
    out.mean_n_phase = Vec::Zero(n_ph);
    out.mean_n_route = Vec::Zero(R);
    out.var_n_route = Vec::Zero(R);
    for (int j = 0; j < n_ph; ++j) out.mean_n_phase(j) = int_nph[j] / span;
    for (int r = 0; r < R; ++r) {
        out.mean_n_route(r) = int_nrt[r] / span;
        out.var_n_route(r) = int_nrt2[r] / span - out.mean_n_route(r) * out.mean_n_route(r);
    }

    out.ci_half_route = Vec::Zero(R);
    out.batch_mean_route = Vec::Zero(R);
    for (int r = 0; r < R; ++r) {
        std::vector<double> bm(B);
        for (int b = 0; b < B; ++b) bm[b] = batch_int[std::size_t(b) * R + r] / batch_len;
        BatchSummary s = batch_means(bm);
        out.ci_half_route(r) = s.ci_half;
        out.batch_mean_route(r) = s.mean;
    }

    out.y_final = Vec::Zero(L);
    for (int l = 0; l < L; ++l) out.y_final(l) = y_acc[l];

    out.samples_route.conservativeResize(R, sample_idx);
    out.samples_phase.conservativeResize(n_ph, sample_idx);
    out.samples_workload.conservativeResize(n_ph, sample_idx);
    out.samples_unused.conservativeResize(L, sample_idx);
    return out;
}

ScaledPath scaled_paths(const SimConfig& cfg, int k, const ManifoldGeometry& geom,
                        double grid_dt) {
    SimConfig run = cfg;
    run.sample_interval = grid_dt * double(k) * double(k);
    SimResult res = simulate(run);
    ScaledPath path;
    const int S = static_cast<int>(res.sample_times.size());
    path.times.resize(S);
    path.w_hat = res.samples_workload / double(k);
    path.dist.resize(S);
    for (int i = 0; i < S; ++i) {
        path.times[i] = res.sample_times[i] / (double(k) * double(k));
        path.dist[i] = manifold_dist(path.w_hat.col(i), geom);
    }
    return path;
}

}  // namespace pfnet
