#pragma once
#include "reserve/admm.hpp"
#include "reserve/building_model.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace reserve {

enum class BidMode { individual, central, decentral };
const char* to_string(BidMode m);

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything one bidding run needs; JSON layout documented in docs/scenario-file.md.
// A scenario names exactly one fleet source: a generator recipe or a list of model files.
struct Scenario {
    int schema_version = 1;
    std::string name;
    int N = 24;
    std::optional<FleetSpec> generator;
    std::vector<std::string> model_files;  // resolved against the scenario file's directory
    Eigen::VectorXd p;                     // reserve prices, length N
    Eigen::VectorXd c_tilde;               // energy prices, length N (used by the generator)
    bool fabricated_reserve_price = false; // true when p fell back to the flat default
    bool fabricated_energy_price = false;
    AdmmConfig admm;
    BidMode mode = BidMode::central;
    double alpha = 0.5;   // mixing weight of the reward split
    double y_min = 0.0;   // reporting threshold on the feasible aggregate level
    std::string out_dir = "out";
    std::vector<double> sweep_scales;  // price multipliers for the sweep verb
};

Scenario load_scenario(const std::string& path);
Scenario scenario_from_json(const std::string& text, const std::string& base_dir);
std::string scenario_to_json(const Scenario& s);

// Produce the fleet a scenario describes (runs the generator or loads the model files).
std::vector<BuildingModel> realize_fleet(const Scenario& s);

// CSV with a fixed "%.17g" number format so outputs are reproducible byte for byte and
// round-trip doubles exactly.
void write_numeric_csv(const std::string& path, const std::vector<std::string>& header,
                       const Eigen::MatrixXd& rows);
Eigen::MatrixXd read_numeric_csv(const std::string& path,
                                 std::vector<std::string>* header = nullptr);
std::string format_double(double x);  // the same %.17g used by the CSV writer

} // namespace reserve
