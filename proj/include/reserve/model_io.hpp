#pragma once
#include "reserve/building_model.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace reserve {

struct ModelIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JSON model files; layout documented in docs/model-file.md. Unbounded box entries are
// written as null and read back as the matching infinity.
std::string model_to_json(const BuildingModel& model);
BuildingModel model_from_json(const std::string& text);
void save_model(const BuildingModel& model, const std::string& path);
BuildingModel load_model(const std::string& path);

struct FleetManifest {
    int schema_version = 1;
    std::uint64_t seed = 0;
    int N = 0;
    std::vector<std::string> files;  // model files, relative to the manifest's directory
};

void save_manifest(const FleetManifest& manifest, const std::string& path);
FleetManifest load_manifest(const std::string& path);

// Loads every model referenced by a manifest, in manifest order.
std::vector<BuildingModel> load_fleet(const std::string& manifest_path);

} // namespace reserve
