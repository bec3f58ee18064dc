#pragma once
#include "reserve/building_model.hpp"
#include "reserve/constraint_set.hpp"
#include "reserve/qp.hpp"

#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace reserve {

enum class StoppingRule { fixed_iterations, residual };

struct AdmmConfig {
    double rho = 1.0;  // augmented-Lagrangian penalty; scale with the magnitude of p
    int max_iters = 25;
    StoppingRule stopping = StoppingRule::fixed_iterations;
    double residual_eps = 1e-6;  // threshold on max_b ||ybar_b - y_b||_2 in residual mode
    PolicyStructure structure = PolicyStructure::lower_triangular;
    double qp_tol = 1e-9;
    int qp_max_iter = 100;
    int threads = 0;   // 0: honor RESERVE_ADMM_THREADS, else 1
    int jf_every = 1;  // record the feasible-extraction objective every k iterations (0: never)
};

// Negotiation state owned by one member.
struct BuildingLocalState {
    ConstraintSetC C;          // carries its own copy of the model
    AffinePolicy policy;       // cached from the last accepted QP solve
    Eigen::VectorXd y;         // last building-step reserve profile
    Eigen::VectorXd z;         // full flat solution behind the cached policy
    bool has_policy = false;
};

struct NegotiationError : std::runtime_error {
    SolveStatus status;
    int building_id;
    NegotiationError(const std::string& what, SolveStatus s, int id)
        : std::runtime_error(what), status(s), building_id(id) {}
};

// One full iterate of the consensus loop (all columns are per-member, N x M).
struct AdmmIterate {
    int iter = 0;  // 1-based
    Eigen::MatrixXd y, ybar, lambda;
    Eigen::VectorXd Y;      // aggregate bid profile (time-constant by construction)
    Eigen::VectorXd Omega;  // the aggregate: mean of (rho y_b - lambda_b)
    Eigen::VectorXd member_residual;  // ||ybar_b - y_b||_2 per member
    double primal_residual = 0.0;     // max over members
    double J = std::numeric_limits<double>::quiet_NaN();   // sum_b c'kappa_b - p'Y
    double JF = std::numeric_limits<double>::quiet_NaN();  // feasible-extraction objective
    int messages = 0;  // ring deliveries used to compute Omega (0 for the centralized path)
};

struct AdmmRun {
    std::vector<AdmmIterate> history;
    std::vector<BuildingLocalState> states;  // final member states
    Eigen::VectorXd p;
    AdmmConfig config;
    int iterations = 0;
};

// Observer invoked after each recorded iterate; return false to stop the negotiation early.
using IterationCallback = std::function<bool(const AdmmIterate&)>;

BuildingLocalState make_local_state(const BuildingModel& model, PolicyStructure structure);

struct IndividualBid {
    AffinePolicy policy;
    Eigen::VectorXd y;  // time-constant profile
    double objective = 0.0;  // c'kappa - p'y
};

// Stand-alone bid of one member: reserve profile forced constant over the horizon.
IndividualBid solve_individual(const BuildingModel& model, PolicyStructure structure,
                               const Eigen::VectorXd& p, double qp_tol = 1e-9,
                               int qp_max_iter = 100);

// Proximal member problem: min c'kappa - lambda'y + (rho/2)||ybar - y||^2 over the member's
// feasible set (y free over hours here). Updates the cached policy/y/z in place.
void building_step(BuildingLocalState& state, const Eigen::VectorXd& ybar_b,
                   const Eigen::VectorXd& lambda_b, double rho, double qp_tol = 1e-9,
                   int qp_max_iter = 100);

struct AggregationOut {
    Eigen::VectorXd Y;      // N, time-constant
    Eigen::MatrixXd ybar;   // N x M
    Eigen::VectorXd Omega;  // N
};

// Closed-form consensus projection. Postconditions (checked): sum_b ybar_b = Y to 1e-10 and
// Y identical across hours to 1e-10.
AggregationOut aggregation_step(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda,
                                double rho, const Eigen::VectorXd& p);

// One member's increment of the aggregate: (rho y_b - lambda_b) / M. Summing these in
// member order is the shared code path of the coordinator and the ring (keeps the two
// bit-identical).
Eigen::VectorXd omega_contribution(const Eigen::VectorXd& y_b, const Eigen::VectorXd& lambda_b,
                                   double rho, int M);

// Per-member level of the aggregate bid implied by Omega: (sum_k Omega_k + p_k) / (rho N).
// The aggregate profile is M times this, constant across hours.
double consensus_level(const Eigen::VectorXd& Omega, const Eigen::VectorXd& p, double rho);

// One member's smoothed profile given the aggregate; shared by both loops as well.
Eigen::VectorXd consensus_profile(const Eigen::VectorXd& y_b, const Eigen::VectorXd& lambda_b,
                                  const Eigen::VectorXd& Omega, const Eigen::VectorXd& p,
                                  double rho);

Eigen::VectorXd lagrangian_update(const Eigen::VectorXd& lambda_b, const Eigen::VectorXd& ybar_b,
                                  const Eigen::VectorXd& y_b, double rho);

// Full negotiation, coordinator form: per iteration, member problems (possibly concurrent),
// closed-form aggregation, multiplier mediation. Initialization all zeros.
AdmmRun run_centralized(const std::vector<BuildingModel>& fleet, const AdmmConfig& config,
                        const Eigen::VectorXd& p, const IterationCallback& callback = {});

double objective_value(const std::vector<BuildingModel>& fleet,
                       const std::vector<Eigen::VectorXd>& kappas, const Eigen::VectorXd& Y,
                       const Eigen::VectorXd& p);

struct AggregationOracleOut {
    Eigen::VectorXd Y;
    Eigen::MatrixXd ybar;
    Eigen::VectorXd eta_dual;  // multiplier of the sum-coupling rows
};

// Brute-force reference for aggregation_step: assembles the equality-constrained QP over
// (ybar, scalar bid level) and factors its KKT system numerically; no closed form involved.
AggregationOracleOut aggregation_kkt_oracle(const Eigen::MatrixXd& y,
                                            const Eigen::MatrixXd& lambda, double rho,
                                            const Eigen::VectorXd& p);

} // namespace reserve
