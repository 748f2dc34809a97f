#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pfnet/errors.hpp"

namespace pfnet {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Job-size law of one route: absorption time of a Markov chain with initial
// distribution a, sub-stochastic transition matrix P and per-phase rates mu.
struct PhaseTypeDist {
    Vec a;   // initial phase probabilities, strictly positive, sums to 1
    Mat P;   // phase transitions; row sums <= 1, I - P invertible
    Vec mu;  // completion rate per phase
    Vec m;   // per-phase mean, m_f = 1/mu_f

    int phases() const { return static_cast<int>(mu.size()); }

    static PhaseTypeDist exponential(double rate);
    static PhaseTypeDist erlang(int k, double rate);
    static PhaseTypeDist hyperexp(const Vec& p, const Vec& rates);

    // beta = m'(I-P')^{-1} a
    double mean() const;
    // beta2 = 2 m'(I-P')^{-1} diag(m) (I-P')^{-1} a.  Arrival-rate free.
    double second_moment() const;
    // lambda * diag(m)(I-P')^{-1} a; sums to lambda * mean()
    Vec phase_loads(double lambda) const;

    // Draws one absorption time (used as a Monte-Carlo oracle and for
    // sanity experiments; the event simulator works phase-by-phase instead).
    double sample(std::mt19937_64& rng) const;
};

// Static description of a bandwidth sharing network: link-route incidence A,
// capacities c, Poisson arrival rates lambda and one PhaseTypeDist per route.
// Derived traffic quantities are filled in by make_network.
struct Network {
    Mat A;       // L x R, nonnegative, full row rank
    Vec c;       // L, positive
    Vec lambda;  // R, positive
    std::vector<PhaseTypeDist> dists;

    // derived
    Vec beta;                    // mean job size per route
    Vec beta2;                   // second moment per route
    Vec rho;                     // rho_r = lambda_r * beta_r
    std::vector<Vec> rho_phase;  // per-route phase-level loads
    std::vector<int> offsets;    // start of each route's phase block
    int total_phases = 0;
    bool critical = false;  // A * rho == c within tolerance

    int links() const { return static_cast<int>(A.rows()); }
    int routes() const { return static_cast<int>(A.cols()); }

    // Phase-level views (column replication / block stacking).
    Mat link_phase_matrix() const;  // L x total_phases
    Vec lambda_phase() const;       // lambda_r * a_{r,f}
    Vec mu_phase() const;
    Vec m_phase() const;
    Mat routing_phase() const;      // block-diagonal of the P^r
    Vec rho_phase_stacked() const;

    // Route aggregation of a phase-level vector.
    Vec aggregate(const Vec& n_phase) const;
};

// Builds the derived quantities; throws ValidationError / NumericError on
// malformed input (sizes, singular I-P).
Network make_network(Mat A, Vec c, Vec lambda, std::vector<PhaseTypeDist> dists);

struct ValidationReport {
    bool valid = true;
    bool critical = false;
    std::vector<std::string> violations;
    std::vector<std::string> warnings;  // e.g. ill-conditioned I-P
};

// Checks every standing assumption (positivity, full row rank, invertibility,
// criticality) and reports all violations rather than stopping at the first.
ValidationReport validate_network(const Network& net);

// JSON interface.  Schema:
//   {"A": [[...]], "c": [...],
//    "routes": [{"lambda": x, "dist": {"a": [...], "P": [[...]], "mu": [...]}}]}
// dist also accepts shortcuts {"type": "exp"|"erlang-k"|"hyperexp-2", ...}.
// Unknown fields are rejected.
Network network_from_json_string(const std::string& text);
Network network_from_json_file(const std::string& path);
std::string network_to_json_string(const Network& net);

// Canonical two-link, three-route test network ("linear" topology) with
// exponential unit-mean sizes and loads (1/3, 2/3, 2/3).
Network linear2_network();

}  // namespace pfnet
