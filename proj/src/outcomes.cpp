#include "reserve/outcomes.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace reserve {
namespace {

std::string solver_note(const RangedSolution& sol) {
    char buf[96];
    std::snprintf(buf, sizeof buf, " (primal %.2e, dual %.2e, gap %.2e)", sol.primal_res,
                  sol.dual_res, sol.gap);
    return buf;
}

} // namespace

BidOutcome feasible_extract(const std::vector<BuildingModel>& fleet, const Eigen::MatrixXd& y,
                            const Eigen::VectorXd& p, PolicyStructure structure, double qp_tol,
                            int qp_max_iter) {
    const int M = static_cast<int>(fleet.size());
    if (M == 0) throw std::invalid_argument("feasible_extract: empty fleet");
    const int N = fleet.front().N;
    if (y.rows() != N || y.cols() != M)
        throw std::invalid_argument("feasible_extract: y must be N x M");
    if (p.size() != N) throw std::invalid_argument("feasible_extract: p must have length N");

    BidOutcome out;
    // Weakest hour sets the flat level the pool can actually hold for the whole horizon.
    Eigen::VectorXd level = y.rowwise().sum();
    const double yF = std::max(0.0, level.minCoeff());
    out.Y_F = Eigen::VectorXd::Constant(N, yF);

    out.y_F.resize(N, M);
    for (int k = 0; k < N; ++k) {
        const double scale = level(k) > 0.0 ? yF / level(k) : 0.0;
        out.y_F.row(k) = scale * y.row(k);
    }

    out.kappas_F.resize(M);
    out.policies_F.resize(M);
    out.z_F.resize(M);
    double cost = 0.0;
    for (int b = 0; b < M; ++b) {
        const BuildingModel& model = fleet[b];
        if (model.N != N)
            throw std::invalid_argument("feasible_extract: mismatched horizons in fleet");
        StackedSystem stacked = stack_dynamics(model);
        ConstraintSetC C = build_constraint_set_fixed_y(model, stacked, structure, out.y_F.col(b));

        RangedQp lp;
        lp.P.resize(C.layout.nv, C.layout.nv);
        lp.q = Eigen::VectorXd::Zero(C.layout.nv);
        lp.q.segment(C.layout.kappa, static_cast<Eigen::Index>(N) * model.m) = model.c;
        lp.A = C.A;
        lp.lo = C.lo;
        lp.up = C.up;
        // Frozen shares can sit within roundoff of the member's own capability boundary
        // (or exactly on it for zero-capacity hours), leaving no strict interior; accept
        // iteration-limited results whose measured residuals are still excellent.
        RangedSolution sol = solve_ranged(lp, qp_tol, qp_max_iter);
        if (!near_optimal(sol, 1e-8, 1e-2))
            throw NegotiationError("feasible extraction re-optimization for building " +
                                       std::to_string(model.id) + " ended " +
                                       to_string(sol.status) + solver_note(sol),
                                   sol.status, model.id);

        RecoveredPolicy rec = recover_policy(C, sol.x);
        out.kappas_F[b] = rec.policy.kappa;
        out.policies_F[b] = std::move(rec.policy);
        out.z_F[b] = std::move(sol.x);
        cost += model.c.dot(out.kappas_F[b]);
    }
    out.J_F = cost - p.dot(out.Y_F);
    return out;
}

Eigen::VectorXd proportional_reward(const Eigen::VectorXd& p, const Eigen::MatrixXd& y) {
    if (p.size() != y.rows())
        throw std::invalid_argument("proportional_reward: p and y disagree on horizon");
    return y.transpose() * p;
}

Eigen::VectorXd lagrangian_reward(const Eigen::VectorXd& Lambda, const Eigen::MatrixXd& y) {
    if (Lambda.size() != y.rows())
        throw std::invalid_argument("lagrangian_reward: Lambda and y disagree on horizon");
    return y.transpose() * Lambda;
}

Eigen::VectorXd feasible_lagrangian_price(const Eigen::VectorXd& Y_F,
                                          const Eigen::VectorXd& Lambda_last, double rho, int M,
                                          const Eigen::VectorXd& p) {
    const Eigen::Index N = Y_F.size();
    if (Lambda_last.size() != N || p.size() != N)
        throw std::invalid_argument("feasible_lagrangian_price: length mismatch");
    if (M < 1) throw std::invalid_argument("feasible_lagrangian_price: M must be positive");
    if (rho <= 0.0) throw std::invalid_argument("feasible_lagrangian_price: rho must be positive");
    // Invert the price/aggregate relation at the flattened level, then recenter so the
    // internal prices redistribute exactly the market revenue.
    Eigen::VectorXd omega_F = (rho / M) * Y_F - Lambda_last;
    const double mean = (omega_F + p).sum() / static_cast<double>(N);
    return Eigen::VectorXd::Constant(N, mean) - omega_F;
}

Eigen::VectorXd mixed_reward(double alpha, const Eigen::VectorXd& r,
                             const Eigen::VectorXd& r_lambda) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("mixed_reward: alpha must lie in [0, 1]");
    if (r.size() != r_lambda.size())
        throw std::invalid_argument("mixed_reward: reward vectors disagree on fleet size");
    return alpha * r + (1.0 - alpha) * r_lambda;
}

} // namespace reserve
