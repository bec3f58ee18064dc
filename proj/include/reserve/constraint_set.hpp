#pragma once
#include "reserve/building_model.hpp"
#include "reserve/qp.hpp"

namespace reserve {

// Structure imposed on the nominal-recourse gain K. The reserve-response gain F is always
// lower block-triangular with nonzero diagonal blocks; richer K enlarges the feasible
// reserve set (it allows power rebound in later hours while restoring comfort).
enum class PolicyStructure { zero, block_diagonal, lower_triangular };

// Affine decision rule of one member. Under a normalized activation signal zeta in [-1,1]^N
// the scheduled inputs are u(zeta) = K zeta + kappa and the reserve response is
// du(zeta) = F zeta; the applied inputs are their sum. Gains are (N*m) x N, stage-major rows,
// one column per signal hour, zero above the block diagonal (causality).
struct AffinePolicy {
    Eigen::MatrixXd K;      // (N*m) x N
    Eigen::VectorXd kappa;  // N*m
    Eigen::MatrixXd F;      // (N*m) x N
};

// Variable layout of the stagewise encoding. The solver works on the combined gain
// W := K + F (the split is recovered canonically afterwards). Column order:
//   xbar  (N*n)               nominal states for stages 2..N+1 (x1 folded into the rhs)
//   kappa (N*m)               nominal inputs
//   W_j   (m*(N-j) each)      combined gain column for signal hour j, stages j..N-1
//   chi_j (n*(N-j) each)      state response to zeta_j at box stages j..N-1
//   y     (N)                 reserve profile (absent in the fixed-y variant)
//   ts    (n per (stage s, j<=s))  |chi| majorants entering the state boxes
//   ti    (m per (stage k, j<=k))  |W| majorants entering the input boxes
struct VariableLayout {
    int n = 0, m = 0, N = 0;
    bool has_y = true;
    Eigen::Index xbar = 0, kappa = 0, y = 0, ts = 0, ti = 0, nv = 0;
    std::vector<Eigen::Index> W;    // per signal hour j
    std::vector<Eigen::Index> chi;  // per signal hour j

    static Eigen::Index tri(int s) { return Eigen::Index(s) * (s + 1) / 2; }
    Eigen::Index w_col(int k, int j) const { return W[j] + Eigen::Index(k - j) * m; }
    Eigen::Index chi_col(int s, int j) const { return chi[j] + Eigen::Index(s - j) * n; }
    Eigen::Index ts_col(int s, int j) const { return ts + (tri(s) + j) * n; }
    Eigen::Index ti_col(int k, int j) const { return ti + (tri(k) + j) * m; }
};

// The robust reserve feasibility set: a policy (W, kappa) and profile y are feasible for
// every zeta in [-1,1]^N iff the flat vector z satisfies lo <= A z <= up. Rows with
// lo == up are the equality system (dynamics, power tracking), the rest are inequalities
// (absolute-value majorant bounds and worst-case state/input boxes). Worst-case terms are
// encoded with per-term auxiliaries, keeping A sparse and stagewise instead of densifying
// through the horizon-stacked dynamics.
struct ConstraintSetC {
    BuildingModel model;
    StackedSystem stacked;
    PolicyStructure structure = PolicyStructure::lower_triangular;
    bool time_constant_y = false;
    Eigen::VectorXd fixed_y;  // nonempty for the fixed-y variant
    VariableLayout layout;
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd lo, up;
};

ConstraintSetC build_constraint_set(const BuildingModel& model, const StackedSystem& stacked,
                                    PolicyStructure structure = PolicyStructure::lower_triangular,
                                    bool time_constant_y = false);

// Same feasible set with the reserve profile frozen: y drops out of the variables and the
// power-tracking rows pin eta'W(j,j) to y_fixed(j). Used when re-optimizing the schedule
// after bids are scaled down to the fleet-wide feasible level.
ConstraintSetC build_constraint_set_fixed_y(const BuildingModel& model,
                                            const StackedSystem& stacked,
                                            PolicyStructure structure,
                                            const Eigen::VectorXd& y_fixed);

struct RecoveredPolicy {
    AffinePolicy policy;
    Eigen::VectorXd y;
};

// Split a solution of the encoded system into the canonical (K, F) pair for the set's
// structure kind: F absorbs exactly the sold per-hour power, K the power-neutral remainder
// (plus free rebound for the lower_triangular kind). Forbidden entries come out exactly zero.
RecoveredPolicy recover_policy(const ConstraintSetC& set, const Eigen::VectorXd& z);

struct PolicyTrajectory {
    Eigen::VectorXd u;   // N*m scheduled inputs K zeta + kappa
    Eigen::VectorXd du;  // N*m reserve response F zeta
    Eigen::VectorXd s;   // N delivered reserve diag(y) zeta
    Eigen::VectorXd x;   // N*n states under u + du (stacked dynamics)
    double coupling_err = 0.0;  // max_k |s_k - eta'du_k|
};

PolicyTrajectory evaluate_policy(const AffinePolicy& policy, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& zeta, const BuildingModel& model,
                                 const StackedSystem& stacked);

enum class FeasibilityMode { vertices, samples };

struct FeasibilityReport {
    double worst_margin = 0.0;        // min slack over all boxes; negative means violation
    double worst_coupling_err = 0.0;  // max |s_k - eta'du_k| seen
    int evaluations = 0;
};

// Worst-case box margin of the policy encoded in z over activation signals: all 2^N vertices
// (refused for N > 12) or `samples` uniform draws from [-1,1]^N (seeded, deterministic).
FeasibilityReport check_robust_feasibility(const ConstraintSetC& set, const Eigen::VectorXd& z,
                                           FeasibilityMode mode, int samples = 1000,
                                           std::uint64_t seed = 1);

const char* to_string(PolicyStructure s);

} // namespace reserve
