#include "pfnet/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>

#include <nlohmann/json.hpp>

namespace pfnet {

namespace {

constexpr double kRankTol = 1e-10;        // relative to ||A||
constexpr double kCriticalTol = 1e-9;     // |A rho - c|
constexpr double kConditionWarn = 1e12;

// (I - P^T)^{-1} x with an invertibility check.
Mat inv_I_minus_Pt(const Mat& P) {
    const int F = static_cast<int>(P.rows());
    Mat M = Mat::Identity(F, F) - P.transpose();
    Eigen::FullPivLU<Mat> lu(M);
    if (!lu.isInvertible())
        throw NumericError("I - P is singular; not a valid phase-type transition matrix");
    return lu.inverse();
}

double condition_number(const Mat& M) {
    Eigen::JacobiSVD<Mat> svd(M);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(s.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / s(s.size() - 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// PhaseTypeDist
// ---------------------------------------------------------------------------

PhaseTypeDist PhaseTypeDist::exponential(double rate) {
    PhaseTypeDist d;
    d.a = Vec::Ones(1);
    d.P = Mat::Zero(1, 1);
    d.mu = Vec::Constant(1, rate);
    d.m = Vec::Constant(1, 1.0 / rate);
    return d;
}

PhaseTypeDist PhaseTypeDist::erlang(int k, double rate) {
    PhaseTypeDist d;
    d.a = Vec::Zero(k);
    d.a(0) = 1.0;
    d.P = Mat::Zero(k, k);
    for (int i = 0; i + 1 < k; ++i) d.P(i, i + 1) = 1.0;
    d.mu = Vec::Constant(k, rate);
    d.m = Vec::Constant(k, 1.0 / rate);
    return d;
}

PhaseTypeDist PhaseTypeDist::hyperexp(const Vec& p, const Vec& rates) {
    PhaseTypeDist d;
    d.a = p;
    d.P = Mat::Zero(p.size(), p.size());
    d.mu = rates;
    d.m = rates.cwiseInverse();
    return d;
}

double PhaseTypeDist::mean() const {
    return m.dot(inv_I_minus_Pt(P) * a);
}

double PhaseTypeDist::second_moment() const {
    Mat inv = inv_I_minus_Pt(P);
    Vec v = inv * a;           // (I-P')^{-1} a
    Vec w = inv * (m.cwiseProduct(v));
    return 2.0 * m.dot(w);
}

Vec PhaseTypeDist::phase_loads(double lambda) const {
    return lambda * m.cwiseProduct(inv_I_minus_Pt(P) * a);
}

double PhaseTypeDist::sample(std::mt19937_64& rng) const {
    auto uniform = [&rng]() { return (rng() >> 11) * 0x1.0p-53; };
    const int F = phases();
    // pick initial phase
    double u = uniform();
    int f = 0;
    double acc = 0.0;
    for (; f < F - 1; ++f) {
        acc += a(f);
        if (u < acc) break;
    }
    double t = 0.0;
    while (true) {
        t += -std::log1p(-uniform()) / mu(f);
        double v = uniform();
        double cum = 0.0;
        int next = -1;
        for (int g = 0; g < F; ++g) {
            cum += P(f, g);
            if (v < cum) { next = g; break; }
        }
        if (next < 0) return t;  // absorbed
        f = next;
    }
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Network make_network(Mat A, Vec c, Vec lambda, std::vector<PhaseTypeDist> dists) {
    Network net;
    net.A = std::move(A);
    net.c = std::move(c);
    net.lambda = std::move(lambda);
    net.dists = std::move(dists);

    const int R = net.routes();
    if (static_cast<int>(net.dists.size()) != R || net.lambda.size() != R)
        throw ValidationError("route count mismatch between A, lambda and dists");
    if (net.c.size() != net.links())
        throw ValidationError("capacity vector length does not match link count");

    net.beta.resize(R);
    net.beta2.resize(R);
    net.rho.resize(R);
    net.offsets.resize(R);
    net.rho_phase.resize(R);
    int off = 0;
    for (int r = 0; r < R; ++r) {
        const auto& d = net.dists[r];
        if (d.a.size() != d.phases() || d.P.rows() != d.phases() || d.P.cols() != d.phases())
            throw ValidationError("inconsistent phase-type dimensions on route " + std::to_string(r));
        net.offsets[r] = off;
        off += d.phases();
        net.beta(r) = d.mean();
        net.beta2(r) = d.second_moment();
        net.rho(r) = net.lambda(r) * net.beta(r);
        net.rho_phase[r] = d.phase_loads(net.lambda(r));
    }
    net.total_phases = off;
    net.critical = net.links() > 0 &&
                   (net.A * net.rho - net.c).lpNorm<Eigen::Infinity>() <= kCriticalTol;
    return net;
}

Mat Network::link_phase_matrix() const {
    Mat At(links(), total_phases);
    for (int r = 0; r < routes(); ++r)
        for (int f = 0; f < dists[r].phases(); ++f)
            At.col(offsets[r] + f) = A.col(r);
    return At;
}

Vec Network::lambda_phase() const {
    Vec v(total_phases);
    for (int r = 0; r < routes(); ++r)
        v.segment(offsets[r], dists[r].phases()) = lambda(r) * dists[r].a;
    return v;
}

Vec Network::mu_phase() const {
    Vec v(total_phases);
    for (int r = 0; r < routes(); ++r)
        v.segment(offsets[r], dists[r].phases()) = dists[r].mu;
    return v;
}

Vec Network::m_phase() const {
    Vec v(total_phases);
    for (int r = 0; r < routes(); ++r)
        v.segment(offsets[r], dists[r].phases()) = dists[r].m;
    return v;
}

Mat Network::routing_phase() const {
    Mat P = Mat::Zero(total_phases, total_phases);
    for (int r = 0; r < routes(); ++r) {
        int F = dists[r].phases();
        P.block(offsets[r], offsets[r], F, F) = dists[r].P;
    }
    return P;
}

Vec Network::rho_phase_stacked() const {
    Vec v(total_phases);
    for (int r = 0; r < routes(); ++r)
        v.segment(offsets[r], dists[r].phases()) = rho_phase[r];
    return v;
}

Vec Network::aggregate(const Vec& n_phase) const {
    Vec n(routes());
    for (int r = 0; r < routes(); ++r)
        n(r) = n_phase.segment(offsets[r], dists[r].phases()).sum();
    return n;
}

ValidationReport validate_network(const Network& net) {
    ValidationReport rep;
    auto fail = [&rep](const std::string& msg) {
        rep.valid = false;
        rep.violations.push_back(msg);
    };

    const int L = net.links(), R = net.routes();
    if (L == 0 || R == 0) fail("empty link or route set");

    if ((net.A.array() < 0.0).any()) fail("A has negative entries");
    for (int l = 0; l < L; ++l)
        if (net.c(l) <= 0.0) fail("capacity c_" + std::to_string(l) + " is not positive");
    for (int r = 0; r < R; ++r)
        if (net.lambda(r) <= 0.0) fail("arrival rate lambda_" + std::to_string(r) + " is not positive");

    // full row rank via rank-revealing QR with relative tolerance
    if (L > 0 && R > 0) {
        Eigen::ColPivHouseholderQR<Mat> qr(net.A.transpose());
        qr.setThreshold(kRankTol);
        if (qr.rank() < L)
            fail("A does not have full row rank (rank " + std::to_string(qr.rank()) +
                 " < L = " + std::to_string(L) + ")");
    }

    for (int r = 0; r < R; ++r) {
        const auto& d = net.dists[r];
        const std::string rn = "route " + std::to_string(r);
        if (std::abs(d.a.sum() - 1.0) > 1e-12) fail(rn + ": initial phase probabilities do not sum to 1");
        if ((d.a.array() < 0.0).any()) fail(rn + ": negative initial phase probability");
        // Strict positivity of a is an assumption of the phase-level fluid
        // analysis only; Erlang-style chains (a_f = 0 on later phases) are
        // fine everywhere else, so flag it as a warning here.  The fluid
        // construction itself rejects zero phase arrival rates.
        if ((d.a.array() == 0.0).any())
            rep.warnings.push_back(rn + ": some phases have no external arrivals");
        if ((d.mu.array() <= 0.0).any()) fail(rn + ": nonpositive phase rate");
        if ((d.P.array() < 0.0).any()) fail(rn + ": negative routing probability");
        for (int f = 0; f < d.phases(); ++f)
            if (d.P.row(f).sum() > 1.0 + 1e-12) fail(rn + ": routing row sum exceeds 1");
        Mat M = Mat::Identity(d.phases(), d.phases()) - d.P.transpose();
        Eigen::FullPivLU<Mat> lu(M);
        if (!lu.isInvertible()) {
            fail(rn + ": I - P singular");
        } else if (condition_number(M) > kConditionWarn) {
            rep.warnings.push_back(rn + ": I - P condition number above 1e12");
        }
    }

    if (rep.valid) {
        double defect = (net.A * net.rho - net.c).lpNorm<Eigen::Infinity>();
        rep.critical = defect <= kCriticalTol;
        if (!rep.critical && ((net.A * net.rho - net.c).array() > kCriticalTol).any())
            rep.warnings.push_back("instance is overloaded on at least one link (A rho > c)");
    }
    return rep;
}

// ---------------------------------------------------------------------------
// JSON I/O
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok)
            throw ValidationError("unknown field \"" + it.key() + "\" in " + where);
    }
}

Vec vec_from_json(const json& j) {
    Vec v(j.size());
    int i = 0;
    for (const auto& x : j) v(i++) = x.get<double>();
    return v;
}

Mat mat_from_json(const json& j) {
    const int rows = static_cast<int>(j.size());
    if (rows == 0) return Mat(0, 0);
    const int cols = static_cast<int>(j.at(0).size());
    Mat M(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(j.at(i).size()) != cols)
            throw ValidationError("ragged matrix rows in JSON");
        for (int k = 0; k < cols; ++k) M(i, k) = j.at(i).at(k).get<double>();
    }
    return M;
}

PhaseTypeDist dist_from_json(const json& jd) {
    if (jd.contains("type")) {
        const std::string type = jd.at("type").get<std::string>();
        if (type == "exp") {
            reject_unknown(jd, {"type", "rate"}, "dist");
            return PhaseTypeDist::exponential(jd.at("rate").get<double>());
        }
        if (type == "erlang-k") {
            reject_unknown(jd, {"type", "k", "rate"}, "dist");
            return PhaseTypeDist::erlang(jd.at("k").get<int>(), jd.at("rate").get<double>());
        }
        if (type == "hyperexp-2") {
            reject_unknown(jd, {"type", "p", "rates"}, "dist");
            return PhaseTypeDist::hyperexp(vec_from_json(jd.at("p")), vec_from_json(jd.at("rates")));
        }
        throw ValidationError("unknown dist type \"" + type + "\"");
    }
    reject_unknown(jd, {"a", "P", "mu"}, "dist");
    PhaseTypeDist d;
    d.a = vec_from_json(jd.at("a"));
    d.P = mat_from_json(jd.at("P"));
    d.mu = vec_from_json(jd.at("mu"));
    d.m = d.mu.cwiseInverse();
    return d;
}

}  // namespace

Network network_from_json_string(const std::string& text) {
    json j = json::parse(text);  // parse_error carries byte position; CLI maps to line/column
    reject_unknown(j, {"A", "c", "routes", "schema_version"}, "network");
    Mat A = mat_from_json(j.at("A"));
    Vec c = vec_from_json(j.at("c"));
    std::vector<PhaseTypeDist> dists;
    Vec lambda(j.at("routes").size());
    int r = 0;
    for (const auto& jr : j.at("routes")) {
        reject_unknown(jr, {"lambda", "dist"}, "route");
        lambda(r++) = jr.at("lambda").get<double>();
        dists.push_back(dist_from_json(jr.at("dist")));
    }
    return make_network(std::move(A), std::move(c), std::move(lambda), std::move(dists));
}

Network network_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open network file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return network_from_json_string(ss.str());
}

std::string network_to_json_string(const Network& net) {
    json j;
    j["schema_version"] = 1;
    j["A"] = json::array();
    for (int l = 0; l < net.links(); ++l) {
        json row = json::array();
        for (int r = 0; r < net.routes(); ++r) row.push_back(net.A(l, r));
        j["A"].push_back(row);
    }
    j["c"] = std::vector<double>(net.c.data(), net.c.data() + net.c.size());
    j["routes"] = json::array();
    for (int r = 0; r < net.routes(); ++r) {
        const auto& d = net.dists[r];
        json jd;
        jd["a"] = std::vector<double>(d.a.data(), d.a.data() + d.a.size());
        jd["mu"] = std::vector<double>(d.mu.data(), d.mu.data() + d.mu.size());
        jd["P"] = json::array();
        for (int f = 0; f < d.phases(); ++f) {
            json row = json::array();
            for (int g = 0; g < d.phases(); ++g) row.push_back(d.P(f, g));
            jd["P"].push_back(row);
        }
        j["routes"].push_back({{"lambda", net.lambda(r)}, {"dist", jd}});
    }
    return j.dump(2);
}

Network linear2_network() {
    Mat A(2, 3);
    A << 1, 1, 0,
         1, 0, 1;
    Vec c(2);
    c << 1, 1;
    Vec lambda(3);
    lambda << 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0;
    std::vector<PhaseTypeDist> dists(3, PhaseTypeDist::exponential(1.0));
    return make_network(A, c, lambda, dists);
}

}  // namespace pfnet
