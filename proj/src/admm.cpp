#include "reserve/admm.hpp"
#include "reserve/outcomes.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace reserve {
namespace {

// Measured solve quality for error messages; the status name alone says nothing about
// how far off the returned iterate actually was.
std::string solver_note(const RangedSolution& sol) {
    char buf[96];
    std::snprintf(buf, sizeof buf, " (primal %.2e, dual %.2e, gap %.2e)", sol.primal_res,
                  sol.dual_res, sol.gap);
    return buf;
}

int thread_count(const AdmmConfig& config, int M) {
    int t = config.threads;
    if (t <= 0) {
        if (const char* env = std::getenv("RESERVE_ADMM_THREADS")) t = std::atoi(env);
    }
    if (t <= 0) t = 1;
    return std::min(t, std::max(M, 1));
}

// Runs fn(b) for every member; fn must not care about scheduling (results are stored by
// index and reduced in index order afterwards).
void for_each_member(int M, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || M <= 1) {
        for (int b = 0; b < M; ++b) fn(b);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
        while (true) {
            const int b = next.fetch_add(1);
            if (b >= M) return;
            try {
                fn(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

BuildingLocalState make_local_state(const BuildingModel& model, PolicyStructure structure) {
    BuildingLocalState state;
    StackedSystem stacked = stack_dynamics(model);
    state.C = build_constraint_set(model, stacked, structure, /*time_constant_y=*/false);
    state.y = Eigen::VectorXd::Zero(model.N);
    return state;
}

void building_step(BuildingLocalState& state, const Eigen::VectorXd& ybar_b,
                   const Eigen::VectorXd& lambda_b, double rho, double qp_tol, int qp_max_iter) {
    const BuildingModel& model = state.C.model;
    const int N = model.N;
    if (ybar_b.size() != N || lambda_b.size() != N)
        throw std::invalid_argument("building_step: ybar_b and lambda_b must have length N");
    if (rho <= 0.0) throw std::invalid_argument("building_step: rho must be positive");
    const VariableLayout& L = state.C.layout;

    // min c'kappa - lambda'y + (rho/2)||ybar - y||^2 over the member's feasible set.
    RangedQp qp;
    qp.P.resize(L.nv, L.nv);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(N));
    for (int k = 0; k < N; ++k) trips.emplace_back(L.y + k, L.y + k, rho);
    qp.P.setFromTriplets(trips.begin(), trips.end());
    qp.q = Eigen::VectorXd::Zero(L.nv);
    qp.q.segment(L.kappa, static_cast<Eigen::Index>(N) * model.m) = model.c;
    qp.q.segment(L.y, N) = -(lambda_b + rho * ybar_b);
    qp.A = state.C.A;
    qp.lo = state.C.lo;
    qp.up = state.C.up;

    // Zero-width capacity hours leave the set with no strict interior, which pins the
    // certifiable duality gap orders of magnitude above the residuals; the negotiation is
    // a fixed-point loop and absorbs that slack, so accept on measured residual quality.
    RangedSolution sol = solve_ranged(qp, qp_tol, qp_max_iter);
    if (!near_optimal(sol, 1e-8, 1e-2))
        throw NegotiationError("building " + std::to_string(model.id) + " step ended " +
                                   to_string(sol.status) + solver_note(sol),
                               sol.status, model.id);

    RecoveredPolicy rec = recover_policy(state.C, sol.x);
    state.policy = std::move(rec.policy);
    state.y = std::move(rec.y);
    state.z = std::move(sol.x);
    state.has_policy = true;
}

IndividualBid solve_individual(const BuildingModel& model, PolicyStructure structure,
                               const Eigen::VectorXd& p, double qp_tol, int qp_max_iter) {
    if (p.size() != model.N)
        throw std::invalid_argument("solve_individual: p must have length N");
    StackedSystem stacked = stack_dynamics(model);
    // A lone bidder has to hold its offer constant over the horizon itself.
    ConstraintSetC C = build_constraint_set(model, stacked, structure, /*time_constant_y=*/true);

    RangedQp lp;
    lp.P.resize(C.layout.nv, C.layout.nv);
    lp.q = Eigen::VectorXd::Zero(C.layout.nv);
    lp.q.segment(C.layout.kappa, static_cast<Eigen::Index>(model.N) * model.m) = model.c;
    lp.q.segment(C.layout.y, model.N) = -p;
    lp.A = C.A;
    lp.lo = C.lo;
    lp.up = C.up;

    RangedSolution sol = solve_ranged(lp, qp_tol, qp_max_iter);
    if (!near_optimal(sol, 1e-8, 1e-2))
        throw NegotiationError("individual bid for building " + std::to_string(model.id) +
                                   " ended " + to_string(sol.status) + solver_note(sol),
                               sol.status, model.id);
    RecoveredPolicy rec = recover_policy(C, sol.x);
    IndividualBid bid;
    bid.policy = std::move(rec.policy);
    bid.y = std::move(rec.y);
    bid.objective = model.c.dot(bid.policy.kappa) - p.dot(bid.y);
    return bid;
}

Eigen::VectorXd omega_contribution(const Eigen::VectorXd& y_b, const Eigen::VectorXd& lambda_b,
                                   double rho, int M) {
    if (y_b.size() != lambda_b.size())
        throw std::invalid_argument("omega_contribution: length mismatch");
    if (M < 1) throw std::invalid_argument("omega_contribution: M must be positive");
    return (rho * y_b - lambda_b) / static_cast<double>(M);
}

double consensus_level(const Eigen::VectorXd& Omega, const Eigen::VectorXd& p, double rho) {
    if (Omega.size() != p.size()) throw std::invalid_argument("consensus_level: length mismatch");
    if (rho <= 0.0) throw std::invalid_argument("consensus_level: rho must be positive");
    return (Omega + p).sum() / (rho * static_cast<double>(Omega.size()));
}

Eigen::VectorXd consensus_profile(const Eigen::VectorXd& y_b, const Eigen::VectorXd& lambda_b,
                                  const Eigen::VectorXd& Omega, const Eigen::VectorXd& p,
                                  double rho) {
    const Eigen::Index N = y_b.size();
    if (lambda_b.size() != N || Omega.size() != N || p.size() != N)
        throw std::invalid_argument("consensus_profile: length mismatch");
    if (rho <= 0.0) throw std::invalid_argument("consensus_profile: rho must be positive");
    return (rho * y_b - lambda_b - Omega) / rho +
           Eigen::VectorXd::Constant(N, consensus_level(Omega, p, rho));
}

Eigen::VectorXd lagrangian_update(const Eigen::VectorXd& lambda_b, const Eigen::VectorXd& ybar_b,
                                  const Eigen::VectorXd& y_b, double rho) {
    if (lambda_b.size() != ybar_b.size() || lambda_b.size() != y_b.size())
        throw std::invalid_argument("lagrangian_update: length mismatch");
    return lambda_b + rho * (ybar_b - y_b);
}

AggregationOut aggregation_step(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda,
                                double rho, const Eigen::VectorXd& p) {
    const Eigen::Index N = y.rows();
    const int M = static_cast<int>(y.cols());
    if (M < 1 || N < 1) throw std::invalid_argument("aggregation_step: empty profile matrix");
    if (lambda.rows() != N || lambda.cols() != M)
        throw std::invalid_argument("aggregation_step: y and lambda must agree in shape");
    if (p.size() != N) throw std::invalid_argument("aggregation_step: p must have length N");
    if (rho <= 0.0) throw std::invalid_argument("aggregation_step: rho must be positive");

    AggregationOut out;
    out.Omega = Eigen::VectorXd::Zero(N);
    for (int b = 0; b < M; ++b) out.Omega += omega_contribution(y.col(b), lambda.col(b), rho, M);

    out.Y = Eigen::VectorXd::Constant(
        N, static_cast<double>(M) * consensus_level(out.Omega, p, rho));
    out.ybar.resize(N, M);
    for (int b = 0; b < M; ++b)
        out.ybar.col(b) = consensus_profile(y.col(b), lambda.col(b), out.Omega, p, rho);

    const double tol = 1e-10 * std::max(1.0, out.Y.cwiseAbs().maxCoeff());
    if (((out.ybar.rowwise().sum() - out.Y).cwiseAbs().maxCoeff()) > tol)
        throw std::logic_error("aggregation_step: smoothed profiles do not sum to the aggregate");
    if (out.Y.maxCoeff() - out.Y.minCoeff() > tol)
        throw std::logic_error("aggregation_step: aggregate profile drifted across hours");
    return out;
}

double objective_value(const std::vector<BuildingModel>& fleet,
                       const std::vector<Eigen::VectorXd>& kappas, const Eigen::VectorXd& Y,
                       const Eigen::VectorXd& p) {
    if (kappas.size() != fleet.size())
        throw std::invalid_argument("objective_value: one kappa per building required");
    if (Y.size() != p.size()) throw std::invalid_argument("objective_value: Y/p length mismatch");
    double cost = 0.0;
    for (size_t b = 0; b < fleet.size(); ++b) {
        if (kappas[b].size() != fleet[b].c.size())
            throw std::invalid_argument("objective_value: kappa length mismatch for building " +
                                        std::to_string(fleet[b].id));
        cost += fleet[b].c.dot(kappas[b]);
    }
    return cost - p.dot(Y);
}

AdmmRun run_centralized(const std::vector<BuildingModel>& fleet, const AdmmConfig& config,
                        const Eigen::VectorXd& p, const IterationCallback& callback) {
    const int M = static_cast<int>(fleet.size());
    if (M == 0) throw std::invalid_argument("run_centralized: empty fleet");
    const int N = fleet.front().N;
    for (const auto& model : fleet)
        if (model.N != N)
            throw std::invalid_argument("run_centralized: fleet members disagree on horizon");
    if (p.size() != N) throw std::invalid_argument("run_centralized: p must have length N");
    if (config.rho <= 0.0) throw std::invalid_argument("run_centralized: rho must be positive");
    if (config.max_iters < 1)
        throw std::invalid_argument("run_centralized: max_iters must be positive");

    AdmmRun run;
    run.p = p;
    run.config = config;
    run.states.reserve(static_cast<size_t>(M));
    for (int b = 0; b < M; ++b) run.states.push_back(make_local_state(fleet[b], config.structure));

    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(N, M);
    Eigen::MatrixXd ybar = Eigen::MatrixXd::Zero(N, M);
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(N, M);
    const int threads = thread_count(config, M);
    std::vector<Eigen::VectorXd> kappas(static_cast<size_t>(M));

    for (int t = 1; t <= config.max_iters; ++t) {
        for_each_member(M, threads, [&](int b) {
            building_step(run.states[static_cast<size_t>(b)], ybar.col(b), lambda.col(b),
                          config.rho, config.qp_tol, config.qp_max_iter);
        });
        for (int b = 0; b < M; ++b) {
            y.col(b) = run.states[static_cast<size_t>(b)].y;
            kappas[static_cast<size_t>(b)] = run.states[static_cast<size_t>(b)].policy.kappa;
        }

        AggregationOut agg = aggregation_step(y, lambda, config.rho, p);
        for (int b = 0; b < M; ++b)
            lambda.col(b) = lagrangian_update(lambda.col(b), agg.ybar.col(b), y.col(b), config.rho);
        ybar = agg.ybar;

        AdmmIterate it;
        it.iter = t;
        it.y = y;
        it.ybar = ybar;
        it.lambda = lambda;
        it.Y = agg.Y;
        it.Omega = agg.Omega;
        it.member_residual.resize(M);
        for (int b = 0; b < M; ++b) it.member_residual(b) = (ybar.col(b) - y.col(b)).norm();
        it.primal_residual = it.member_residual.maxCoeff();
        it.J = objective_value(fleet, kappas, agg.Y, p);
        const bool last_planned =
            t == config.max_iters || (config.stopping == StoppingRule::residual &&
                                      it.primal_residual <= config.residual_eps);
        if (config.jf_every > 0 && (last_planned || t % config.jf_every == 0))
            it.JF = feasible_extract(fleet, y, p, config.structure, config.qp_tol,
                                     config.qp_max_iter)
                        .J_F;
        run.history.push_back(std::move(it));

        if (callback && !callback(run.history.back())) break;
        if (config.stopping == StoppingRule::residual &&
            run.history.back().primal_residual <= config.residual_eps)
            break;
    }
    run.iterations = static_cast<int>(run.history.size());
    return run;
}

AggregationOracleOut aggregation_kkt_oracle(const Eigen::MatrixXd& y,
                                            const Eigen::MatrixXd& lambda, double rho,
                                            const Eigen::VectorXd& p) {
    const int N = static_cast<int>(y.rows());
    const int M = static_cast<int>(y.cols());
    if (N < 1 || M < 1) throw std::invalid_argument("aggregation_kkt_oracle: empty profiles");
    if (lambda.rows() != N || lambda.cols() != M)
        throw std::invalid_argument("aggregation_kkt_oracle: y and lambda must agree in shape");
    if (p.size() != N) throw std::invalid_argument("aggregation_kkt_oracle: p must have length N");
    if (rho <= 0.0) throw std::invalid_argument("aggregation_kkt_oracle: rho must be positive");

    // Stationarity for each smoothed profile and for the scalar bid level, plus the
    // sum-coupling rows, assembled literally and factored with dense LU.
    const int dim = N * M + 1 + N;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    const int level_col = N * M;
    const int eta0 = N * M + 1;
    for (int b = 0; b < M; ++b) {
        for (int k = 0; k < N; ++k) {
            const int row = b * N + k;
            K(row, row) = rho;
            K(row, eta0 + k) = 1.0;
            K(eta0 + k, row) = 1.0;
            rhs(row) = rho * y(k, b) - lambda(k, b);
        }
    }
    for (int k = 0; k < N; ++k) {
        K(level_col, eta0 + k) = -1.0;
        K(eta0 + k, level_col) = -1.0;
    }
    rhs(level_col) = p.sum();

    Eigen::VectorXd sol = K.partialPivLu().solve(rhs);
    AggregationOracleOut out;
    out.Y = Eigen::VectorXd::Constant(N, sol(level_col));
    out.ybar.resize(N, M);
    for (int b = 0; b < M; ++b) out.ybar.col(b) = sol.segment(b * N, N);
    out.eta_dual = sol.tail(N);
    return out;
}

} // namespace reserve
