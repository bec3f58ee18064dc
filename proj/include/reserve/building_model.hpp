#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace reserve {

// Discrete-time thermal model of one aggregation member over a bidding horizon of N hours.
// Dynamics: x^{k+1} = A x^k + B u^k + E v^k. States are room temperatures (deg C), inputs are
// normalized actuation levels, eta converts input units to electrical power (kW per input unit).
struct BuildingModel {
    int id = 0;
    int n = 0;  // state dimension
    int m = 0;  // input dimension
    int q = 0;  // disturbance dimension
    int N = 0;  // horizon length (hours)
    Eigen::MatrixXd A;     // n x n
    Eigen::MatrixXd B;     // n x m
    Eigen::MatrixXd E;     // n x q
    Eigen::VectorXd x1;    // n, initial state
    Eigen::VectorXd v;     // q*N, disturbance trajectory (stage-major)
    Eigen::VectorXd x_lo;  // N*n, state bounds for stages 2..N+1 (occupancy dependent)
    Eigen::VectorXd x_hi;  // N*n
    Eigen::VectorXd u_lo;  // N*m
    Eigen::VectorXd u_hi;  // N*m
    Eigen::VectorXd eta;   // m, kW per input unit
    Eigen::VectorXd c;     // N*m, nominal electricity cost per input unit
};

// Horizon-stacked form: x_bold = A_bold x1 + B_bold u_bold + E_bold v, where x_bold stacks
// x^2..x^{N+1}. Block (k, j) of B_bold is A^{k-j} B for j <= k and zero above the diagonal.
struct StackedSystem {
    Eigen::MatrixXd A_bold;         // (N*n) x n
    Eigen::MatrixXd B_bold;         // (N*n) x (N*m)
    Eigen::MatrixXd E_bold;         // (N*n) x (N*q)
    Eigen::VectorXd affine_offset;  // A_bold x1 + E_bold v
};

enum class PrototypeClass { small, medium, large };

// Recipe for a reproducible synthetic fleet. Counts are per prototype class; the residential
// fraction of each class gets night-time comfort occupancy, the rest day-time (commercial).
struct FleetSpec {
    std::uint64_t seed = 1;
    int count_small = 0;
    int count_medium = 0;
    int count_large = 0;
    double residential_fraction = 0.5;
    int N = 24;
    Eigen::VectorXd p;        // N, reserve price (currency/kW); empty -> flat default
    Eigen::VectorXd c_tilde;  // N, energy price (currency/kWh); empty -> flat default
};

// Fallback flat prices when a scenario supplies none; reports label them as fabricated.
inline constexpr double kDefaultReservePrice = 0.35;  // currency per kW of symmetric reserve
inline constexpr double kDefaultEnergyPrice = 0.12;   // currency per kWh

StackedSystem stack_dynamics(const BuildingModel& model);

std::vector<std::string> validate_model(const BuildingModel& model);

std::vector<BuildingModel> generate_fleet(const FleetSpec& spec);

// Single synthetic member; exposed for tests and scenario tooling.
BuildingModel prototype_building(PrototypeClass cls, bool residential, int N, std::uint64_t seed,
                                 int id, const Eigen::VectorXd& c_tilde);

// Dynamic-free member whose only limit is a per-hour power-shift capacity. Its maximal
// symmetric reserve at hour k is exactly cap[k].
BuildingModel capacity_only_building(const Eigen::VectorXd& cap, int price_horizon);

} // namespace reserve
