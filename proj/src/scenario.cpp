#include "reserve/scenario.hpp"
#include "reserve/model_io.hpp"

#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace reserve {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

Eigen::VectorXd price_vector(const json& node, int N, const char* what) {
    if (node.is_number()) return Eigen::VectorXd::Constant(N, node.get<double>());
    if (node.is_array()) {
        if (node.size() != static_cast<std::size_t>(N))
            throw ScenarioError(std::string("scenario: '") + what + "' must hold " +
                                std::to_string(N) + " entries, got " +
                                std::to_string(node.size()));
        Eigen::VectorXd v(N);
        for (int i = 0; i < N; ++i) {
            const json& e = node[static_cast<std::size_t>(i)];
            if (!e.is_number())
                throw ScenarioError(std::string("scenario: '") + what +
                                    "' entries must be numbers");
            v(i) = e.get<double>();
        }
        return v;
    }
    throw ScenarioError(std::string("scenario: '") + what +
                        "' must be a number or an array of numbers");
}

PolicyStructure structure_from_string(const std::string& s) {
    if (s == "zero") return PolicyStructure::zero;
    if (s == "block_diagonal") return PolicyStructure::block_diagonal;
    if (s == "lower_triangular") return PolicyStructure::lower_triangular;
    throw ScenarioError("scenario: unknown recourse structure '" + s +
                        "' (use zero, block_diagonal or lower_triangular)");
}

BidMode mode_from_string(const std::string& s) {
    if (s == "individual") return BidMode::individual;
    if (s == "central") return BidMode::central;
    if (s == "decentral") return BidMode::decentral;
    throw ScenarioError("scenario: unknown mode '" + s +
                        "' (use individual, central or decentral)");
}

} // namespace

const char* to_string(BidMode m) {
    switch (m) {
        case BidMode::individual: return "individual";
        case BidMode::central: return "central";
        case BidMode::decentral: return "decentral";
    }
    return "unknown";
}

Scenario scenario_from_json(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ScenarioError("scenario: top level must be a JSON object");

    Scenario s;
    s.schema_version = j.value("schema_version", 0);
    if (s.schema_version != 1)
        throw ScenarioError("scenario: unsupported schema_version " +
                            std::to_string(s.schema_version) + " (this build reads version 1)");
    s.name = j.value("name", std::string("scenario"));
    s.N = j.value("horizon", 24);
    if (s.N < 1) throw ScenarioError("scenario: horizon must be positive");

    if (!j.contains("fleet") || !j["fleet"].is_object())
        throw ScenarioError("scenario: missing 'fleet' object");
    const json& fleet = j["fleet"];
    const bool has_gen = fleet.contains("generator");
    const bool has_files = fleet.contains("model_files");
    if (has_gen == has_files)
        throw ScenarioError(
            "scenario: 'fleet' must name exactly one source: 'generator' or 'model_files'");
    if (has_gen) {
        const json& g = fleet["generator"];
        if (!g.is_object()) throw ScenarioError("scenario: 'generator' must be an object");
        FleetSpec spec;
        spec.seed = g.value("seed", std::uint64_t{1});
        spec.count_small = g.value("count_small", 0);
        spec.count_medium = g.value("count_medium", 0);
        spec.count_large = g.value("count_large", 0);
        spec.residential_fraction = g.value("residential_fraction", 0.5);
        spec.N = s.N;
        s.generator = spec;
    } else {
        const json& files = fleet["model_files"];
        if (!files.is_array() || files.empty())
            throw ScenarioError("scenario: 'model_files' must be a non-empty array");
        for (const auto& f : files) {
            if (!f.is_string())
                throw ScenarioError("scenario: 'model_files' entries must be strings");
            fs::path rel = f.get<std::string>();
            s.model_files.push_back(
                rel.is_absolute() ? rel.string() : (fs::path(base_dir) / rel).string());
        }
    }

    const json prices = j.value("prices", json::object());
    if (prices.contains("reserve")) {
        s.p = price_vector(prices["reserve"], s.N, "prices.reserve");
    } else {
        s.p = Eigen::VectorXd::Constant(s.N, kDefaultReservePrice);
        s.fabricated_reserve_price = true;
    }
    if (prices.contains("energy")) {
        s.c_tilde = price_vector(prices["energy"], s.N, "prices.energy");
    } else {
        s.c_tilde = Eigen::VectorXd::Constant(s.N, kDefaultEnergyPrice);
        s.fabricated_energy_price = true;
    }
    if (s.generator) {
        s.generator->p = s.p;
        s.generator->c_tilde = s.c_tilde;
    }

    const json admm = j.value("admm", json::object());
    s.admm.rho = admm.value("rho", 1.0);
    s.admm.max_iters = admm.value("max_iters", 25);
    s.admm.qp_tol = admm.value("qp_tol", 1e-9);
    s.admm.qp_max_iter = admm.value("qp_max_iter", 100);
    s.admm.jf_every = admm.value("jf_every", 1);
    s.admm.threads = admm.value("threads", 0);
    if (admm.contains("structure"))
        s.admm.structure = structure_from_string(admm["structure"].get<std::string>());
    if (admm.contains("stopping")) {
        const json& stop = admm["stopping"];
        if (stop.is_string() && stop.get<std::string>() == "fixed_iterations") {
            s.admm.stopping = StoppingRule::fixed_iterations;
        } else if (stop.is_object() && stop.contains("residual")) {
            s.admm.stopping = StoppingRule::residual;
            s.admm.residual_eps = stop["residual"].get<double>();
        } else {
            throw ScenarioError(
                "scenario: 'admm.stopping' must be \"fixed_iterations\" or {\"residual\": eps}");
        }
    }
    if (s.admm.rho <= 0.0) throw ScenarioError("scenario: admm.rho must be positive");
    if (s.admm.max_iters < 1) throw ScenarioError("scenario: admm.max_iters must be positive");

    if (j.contains("mode")) s.mode = mode_from_string(j["mode"].get<std::string>());
    s.alpha = j.value("alpha", 0.5);
    if (!(s.alpha >= 0.0 && s.alpha <= 1.0))
        throw ScenarioError("scenario: alpha must lie in [0, 1]");
    s.y_min = j.value("y_min", 0.0);
    s.out_dir = j.value("out_dir", std::string("out"));

    if (j.contains("sweep")) {
        const json& sweep = j["sweep"];
        if (!sweep.is_object() || !sweep.contains("price_scales") ||
            !sweep["price_scales"].is_array())
            throw ScenarioError("scenario: 'sweep' must be {\"price_scales\": [..]}");
        for (const auto& e : sweep["price_scales"]) {
            if (!e.is_number()) throw ScenarioError("scenario: sweep scales must be numbers");
            s.sweep_scales.push_back(e.get<double>());
        }
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return scenario_from_json(buf.str(), fs::path(path).parent_path().string());
    } catch (const ScenarioError& e) {
        throw ScenarioError(path + ": " + e.what());
    }
}

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["schema_version"] = 1;
    j["name"] = s.name;
    j["horizon"] = s.N;
    json fleet;
    if (s.generator) {
        json g;
        g["seed"] = s.generator->seed;
        g["count_small"] = s.generator->count_small;
        g["count_medium"] = s.generator->count_medium;
        g["count_large"] = s.generator->count_large;
        g["residential_fraction"] = s.generator->residential_fraction;
        fleet["generator"] = g;
    } else {
        fleet["model_files"] = s.model_files;
    }
    j["fleet"] = fleet;
    json prices;
    if (!s.fabricated_reserve_price) {
        json arr = json::array();
        for (int i = 0; i < s.p.size(); ++i) arr.push_back(s.p(i));
        prices["reserve"] = arr;
    }
    if (!s.fabricated_energy_price) {
        json arr = json::array();
        for (int i = 0; i < s.c_tilde.size(); ++i) arr.push_back(s.c_tilde(i));
        prices["energy"] = arr;
    }
    j["prices"] = prices;
    json admm;
    admm["rho"] = s.admm.rho;
    admm["max_iters"] = s.admm.max_iters;
    admm["qp_tol"] = s.admm.qp_tol;
    admm["qp_max_iter"] = s.admm.qp_max_iter;
    admm["jf_every"] = s.admm.jf_every;
    admm["threads"] = s.admm.threads;
    admm["structure"] = to_string(s.admm.structure);
    if (s.admm.stopping == StoppingRule::fixed_iterations)
        admm["stopping"] = "fixed_iterations";
    else
        admm["stopping"] = json{{"residual", s.admm.residual_eps}};
    j["admm"] = admm;
    j["mode"] = to_string(s.mode);
    j["alpha"] = s.alpha;
    j["y_min"] = s.y_min;
    j["out_dir"] = s.out_dir;
    if (!s.sweep_scales.empty()) j["sweep"] = json{{"price_scales", s.sweep_scales}};
    return j.dump(2) + "\n";
}

std::vector<BuildingModel> realize_fleet(const Scenario& s) {
    if (s.generator) return generate_fleet(*s.generator);
    std::vector<BuildingModel> fleet;
    fleet.reserve(s.model_files.size());
    for (const std::string& path : s.model_files) fleet.push_back(load_model(path));
    for (const auto& model : fleet)
        if (model.N != s.N)
            throw ScenarioError("scenario: building " + std::to_string(model.id) +
                                " has horizon " + std::to_string(model.N) +
                                ", scenario expects " + std::to_string(s.N));
    return fleet;
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_numeric_csv(const std::string& path, const std::vector<std::string>& header,
                       const Eigen::MatrixXd& rows) {
    if (header.size() != static_cast<std::size_t>(rows.cols()))
        throw std::invalid_argument("write_numeric_csv: one header per column required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (std::size_t c = 0; c < header.size(); ++c)
        out << (c ? "," : "") << header[c];
    out << "\n";
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        for (Eigen::Index c = 0; c < rows.cols(); ++c)
            out << (c ? "," : "") << format_double(rows(r, c));
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

Eigen::MatrixXd read_numeric_csv(const std::string& path, std::vector<std::string>* header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::vector<std::string> head;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) head.push_back(cell);
    }
    if (header) *header = head;
    std::vector<std::vector<double>> data;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            // std::stod throws out_of_range on subnormals (underflow sets ERANGE), which
            // would break the exact round trip; strtod returns the correctly rounded value.
            char* end = nullptr;
            const double x = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str())
                throw std::runtime_error(path + ": unparseable cell '" + cell + "'");
            row.push_back(x);
        }
        if (row.size() != head.size())
            throw std::runtime_error(path + ": ragged row with " + std::to_string(row.size()) +
                                     " cells");
        data.push_back(std::move(row));
    }
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(data.size()),
                         static_cast<Eigen::Index>(head.size()));
    for (std::size_t r = 0; r < data.size(); ++r)
        for (std::size_t c = 0; c < head.size(); ++c)
            rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data[r][c];
    return rows;
}

} // namespace reserve
