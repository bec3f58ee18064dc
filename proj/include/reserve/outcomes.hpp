#pragma once
#include "reserve/admm.hpp"
#include "reserve/building_model.hpp"
#include "reserve/constraint_set.hpp"

#include <limits>
#include <vector>

namespace reserve {

// Everything the market sees plus the internal settlement of one inspected iterate.
struct BidOutcome {
    Eigen::VectorXd Y_F;                    // feasible aggregate bid, identical across hours
    Eigen::MatrixXd y_F;                    // N x M feasible member shares
    std::vector<Eigen::VectorXd> kappas_F;  // nominal inputs re-optimized under frozen shares
    std::vector<AffinePolicy> policies_F;
    std::vector<Eigen::VectorXd> z_F;       // flat solutions behind policies_F
    double J_F = std::numeric_limits<double>::quiet_NaN();
    // Settlement context; feasible_extract leaves these empty, callers fill them in.
    Eigen::VectorXd Lambda;    // internal price of the inspected iterate
    Eigen::VectorXd Lambda_F;  // redistribution price consistent with Y_F
    Eigen::VectorXd reward_proportional;
    Eigen::VectorXd reward_lagrangian;
    Eigen::VectorXd reward_mixed;
};

// Turn any intermediate iterate into a jointly feasible bid: flatten the aggregate to its
// weakest hour, scale member shares hour-wise (an hour with zero offered reserve keeps zero
// shares), and re-optimize each member's nominal inputs with its share profile frozen.
BidOutcome feasible_extract(const std::vector<BuildingModel>& fleet, const Eigen::MatrixXd& y,
                            const Eigen::VectorXd& p, PolicyStructure structure,
                            double qp_tol = 1e-9, int qp_max_iter = 100);

// r_b = p'y_b: paid in proportion to the member's own offered profile.
Eigen::VectorXd proportional_reward(const Eigen::VectorXd& p, const Eigen::MatrixXd& y);

// r_b = Lambda'y_b: paid at the negotiated internal price.
Eigen::VectorXd lagrangian_reward(const Eigen::VectorXd& Lambda, const Eigen::MatrixXd& y);

// Internal price consistent with the flattened bid: inverts the aggregate/price relation at
// Y_F and recenters so the per-hour prices sum to the market prices exactly.
Eigen::VectorXd feasible_lagrangian_price(const Eigen::VectorXd& Y_F,
                                          const Eigen::VectorXd& Lambda_last, double rho, int M,
                                          const Eigen::VectorXd& p);

// alpha * r + (1 - alpha) * r_lambda with alpha validated to [0, 1].
Eigen::VectorXd mixed_reward(double alpha, const Eigen::VectorXd& r,
                             const Eigen::VectorXd& r_lambda);

} // namespace reserve
