#pragma once
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>

namespace reserve {

enum class SolveStatus { optimal, infeasible, iteration_limit };

const char* to_string(SolveStatus s);

// Residuals of the first-order optimality system, evaluated on the returned iterate.
struct KktResiduals {
    double stationarity = 0.0;
    double primal_eq = 0.0;
    double primal_ineq = 0.0;
    double complementarity = 0.0;
    double worst() const;
};

// Dense convex QP in standard form: min 0.5 z'Pz + q'z  s.t.  Aeq z = beq,  Aineq z <= hineq.
// P may have zero size (pure LP). P must be symmetric positive semidefinite.
struct QpProblem {
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::MatrixXd Aeq;
    Eigen::VectorXd beq;
    Eigen::MatrixXd Aineq;
    Eigen::VectorXd hineq;
};

struct QpSolution {
    Eigen::VectorXd z;
    Eigen::VectorXd dual_eq;    // multipliers of Aeq z = beq (free sign)
    Eigen::VectorXd dual_ineq;  // multipliers of Aineq z <= hineq (nonnegative)
    SolveStatus status = SolveStatus::iteration_limit;
    int iterations = 0;
    double objective = 0.0;
    KktResiduals kkt;
};

QpSolution solve_qp(const QpProblem& prob, double tol = 1e-9, int max_iter = 100);

// Recomputes the optimality residuals of a candidate solution from scratch; independent of
// whatever the solver reported on the way out.
KktResiduals kkt_residuals(const QpProblem& prob, const QpSolution& sol);

// Writes a problem to a structured-text file (JSON) for offline inspection of a failing
// solve; load-bearing nowhere, but kept stable so dumps can be diffed.
void dump_problem(const QpProblem& prob, const std::string& path);

// Sparse ranged form used by the negotiation engine: min 0.5 x'Px + q'x s.t. lo <= Ax <= up.
// Bound entries may be +-infinity; rows with lo == up are equalities.
struct RangedQp {
    Eigen::SparseMatrix<double> P;  // full symmetric; zero size means LP
    Eigen::VectorXd q;
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd lo;
    Eigen::VectorXd up;
};

struct RangedSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd nu;  // row multipliers with sign convention  Px + q + A'nu = 0
    SolveStatus status = SolveStatus::iteration_limit;
    int iterations = 0;
    double mu = 0.0;
    double primal_res = 0.0;
    double dual_res = 0.0;
    double gap = 0.0;
    double objective = 0.0;
};

RangedSolution solve_ranged(const RangedQp& qp, double tol = 1e-9, int max_iter = 100);

// True when a result is trustworthy even if the solver could not certify its target
// tolerance: measured primal/dual residuals at feas_tol scale and a duality gap no worse
// than gap_tol. Constraint sets whose frozen data leaves slack widths near roundoff pin the
// certifiable gap above tight tolerances while the iterate itself is excellent; callers that
// need feasibility plus a reasonable objective (not a 1e-9 certificate) accept on this.
bool near_optimal(const RangedSolution& sol, double feas_tol = 1e-8, double gap_tol = 1e-6);

} // namespace reserve
