#include "reserve/model_io.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace reserve {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kInf = std::numeric_limits<double>::infinity();

json vector_to_json(const Eigen::VectorXd& v, bool bound) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (bound && !std::isfinite(v(i)))
            arr.push_back(nullptr);
        else
            arr.push_back(v(i));
    }
    return arr;
}

json matrix_to_json(const Eigen::MatrixXd& X) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < X.cols(); ++c) row.push_back(X(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

double bound_entry(const json& e, double unbounded, const std::string& field) {
    if (e.is_null()) return unbounded;
    if (e.is_string()) {
        const std::string s = e.get<std::string>();
        if (s == "inf" || s == "+inf") return kInf;
        if (s == "-inf") return -kInf;
        throw ModelIoError("model field '" + field + "': unrecognized bound string '" + s + "'");
    }
    if (!e.is_number()) throw ModelIoError("model field '" + field + "': expected a number or null");
    return e.get<double>();
}

Eigen::VectorXd json_to_vector(const json& arr, Eigen::Index expect, const std::string& field,
                               bool bound = false, double unbounded = 0.0) {
    if (!arr.is_array())
        throw ModelIoError("model field '" + field + "': expected an array");
    if (arr.size() != static_cast<std::size_t>(expect))
        throw ModelIoError("model field '" + field + "': expected " + std::to_string(expect) +
                           " entries, got " + std::to_string(arr.size()));
    Eigen::VectorXd v(expect);
    for (Eigen::Index i = 0; i < expect; ++i) {
        const json& e = arr[static_cast<std::size_t>(i)];
        if (bound) {
            v(i) = bound_entry(e, unbounded, field);
        } else {
            if (!e.is_number())
                throw ModelIoError("model field '" + field + "': expected numeric entries");
            v(i) = e.get<double>();
        }
    }
    return v;
}

Eigen::MatrixXd json_to_matrix(const json& rows, Eigen::Index nr, Eigen::Index nc,
                               const std::string& field) {
    if (!rows.is_array() || rows.size() != static_cast<std::size_t>(nr))
        throw ModelIoError("model field '" + field + "': expected " + std::to_string(nr) +
                           " rows");
    Eigen::MatrixXd X(nr, nc);
    for (Eigen::Index r = 0; r < nr; ++r) {
        const json& row = rows[static_cast<std::size_t>(r)];
        if (!row.is_array() || row.size() != static_cast<std::size_t>(nc))
            throw ModelIoError("model field '" + field + "': row " + std::to_string(r) +
                               " must hold " + std::to_string(nc) + " entries");
        for (Eigen::Index c = 0; c < nc; ++c) {
            const json& e = row[static_cast<std::size_t>(c)];
            if (!e.is_number())
                throw ModelIoError("model field '" + field + "': expected numeric entries");
            X(r, c) = e.get<double>();
        }
    }
    return X;
}

int required_int(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer())
        throw ModelIoError(std::string("model file: missing integer field '") + key + "'");
    return j[key].get<int>();
}

} // namespace

std::string model_to_json(const BuildingModel& model) {
    json j;
    j["schema_version"] = 1;
    j["id"] = model.id;
    j["n"] = model.n;
    j["m"] = model.m;
    j["q"] = model.q;
    j["horizon"] = model.N;
    j["A"] = matrix_to_json(model.A);
    j["B"] = matrix_to_json(model.B);
    j["E"] = matrix_to_json(model.E);
    j["x1"] = vector_to_json(model.x1, false);
    j["v"] = vector_to_json(model.v, false);
    j["x_lo"] = vector_to_json(model.x_lo, true);
    j["x_hi"] = vector_to_json(model.x_hi, true);
    j["u_lo"] = vector_to_json(model.u_lo, true);
    j["u_hi"] = vector_to_json(model.u_hi, true);
    j["eta"] = vector_to_json(model.eta, false);
    j["c"] = vector_to_json(model.c, false);
    return j.dump(2) + "\n";
}

BuildingModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ModelIoError(std::string("model file is not valid JSON: ") + e.what());
    }
    const int version = required_int(j, "schema_version");
    if (version != 1)
        throw ModelIoError("model file: unsupported schema_version " + std::to_string(version));

    BuildingModel model;
    model.id = required_int(j, "id");
    model.n = required_int(j, "n");
    model.m = required_int(j, "m");
    model.q = required_int(j, "q");
    model.N = required_int(j, "horizon");
    if (model.n < 1 || model.m < 1 || model.q < 1 || model.N < 1)
        throw ModelIoError("model file: dimensions must be positive");

    const Eigen::Index n = model.n, m = model.m, q = model.q, N = model.N;
    model.A = json_to_matrix(j.value("A", json()), n, n, "A");
    model.B = json_to_matrix(j.value("B", json()), n, m, "B");
    model.E = json_to_matrix(j.value("E", json()), n, q, "E");
    model.x1 = json_to_vector(j.value("x1", json()), n, "x1");
    model.v = json_to_vector(j.value("v", json()), q * N, "v");
    model.x_lo = json_to_vector(j.value("x_lo", json()), n * N, "x_lo", true, -kInf);
    model.x_hi = json_to_vector(j.value("x_hi", json()), n * N, "x_hi", true, kInf);
    model.u_lo = json_to_vector(j.value("u_lo", json()), m * N, "u_lo", true, -kInf);
    model.u_hi = json_to_vector(j.value("u_hi", json()), m * N, "u_hi", true, kInf);
    model.eta = json_to_vector(j.value("eta", json()), m, "eta");
    model.c = json_to_vector(j.value("c", json()), m * N, "c");

    auto issues = validate_model(model);
    if (!issues.empty()) throw ModelIoError("model file: " + issues.front());
    return model;
}

void save_model(const BuildingModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelIoError("cannot open '" + path + "' for writing");
    out << model_to_json(model);
    if (!out) throw ModelIoError("failed while writing '" + path + "'");
}

BuildingModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelIoError("cannot open model file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return model_from_json(buf.str());
    } catch (const ModelIoError& e) {
        throw ModelIoError(path + ": " + e.what());
    }
}

void save_manifest(const FleetManifest& manifest, const std::string& path) {
    json j;
    j["schema_version"] = manifest.schema_version;
    j["seed"] = manifest.seed;
    j["horizon"] = manifest.N;
    j["files"] = manifest.files;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelIoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw ModelIoError("failed while writing '" + path + "'");
}

FleetManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelIoError("cannot open manifest '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ModelIoError(path + ": not valid JSON: " + e.what());
    }
    FleetManifest manifest;
    manifest.schema_version = j.value("schema_version", 0);
    if (manifest.schema_version != 1)
        throw ModelIoError(path + ": unsupported schema_version " +
                           std::to_string(manifest.schema_version));
    if (!j.contains("seed") || !j["seed"].is_number_unsigned())
        throw ModelIoError(path + ": missing unsigned field 'seed'");
    manifest.seed = j["seed"].get<std::uint64_t>();
    manifest.N = j.value("horizon", 0);
    if (j.contains("files")) {
        if (!j["files"].is_array()) throw ModelIoError(path + ": 'files' must be an array");
        for (const auto& f : j["files"]) {
            if (!f.is_string()) throw ModelIoError(path + ": 'files' entries must be strings");
            manifest.files.push_back(f.get<std::string>());
        }
    }
    return manifest;
}

std::vector<BuildingModel> load_fleet(const std::string& manifest_path) {
    const FleetManifest manifest = load_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<BuildingModel> fleet;
    fleet.reserve(manifest.files.size());
    for (const std::string& rel : manifest.files)
        fleet.push_back(load_model((base / rel).string()));
    for (const auto& model : fleet)
        if (model.N != manifest.N)
            throw ModelIoError(manifest_path + ": building " + std::to_string(model.id) +
                               " horizon disagrees with the manifest");
    return fleet;
}

} // namespace reserve
