#include "doctest.h"

#include "reserve/building_model.hpp"
#include "reserve/model_io.hpp"
#include "reserve/scenario.hpp"

#include "json.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

using namespace reserve;
namespace fs = std::filesystem;

namespace {

// Scratch directory, removed on scope exit, so file-facing tests never touch the tree.
struct TempDir {
    fs::path dir;
    TempDir() {
        static std::atomic<int> counter{0};
        const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        dir = fs::temp_directory_path() /
              ("reserve_io_" + std::to_string(tick) + "_" + std::to_string(counter++));
        fs::create_directories(dir);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string file(const std::string& name) const { return (dir / name).string(); }
};

bool bits_equal(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

// Bit-level vector comparison; tolerances would hide serialization drift, and the
// plain difference is useless once infinities are involved (inf - inf is NaN).
bool bits_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (!bits_equal(a(i), b(i))) return false;
    return true;
}

bool bits_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index c = 0; c < a.cols(); ++c)
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            if (!bits_equal(a(r, c), b(r, c))) return false;
    return true;
}

void check_same_model(const BuildingModel& a, const BuildingModel& b) {
    CHECK(a.id == b.id);
    CHECK(a.n == b.n);
    CHECK(a.m == b.m);
    CHECK(a.q == b.q);
    CHECK(a.N == b.N);
    CHECK(bits_equal(a.A, b.A));
    CHECK(bits_equal(a.B, b.B));
    CHECK(bits_equal(a.E, b.E));
    CHECK(bits_equal(a.x1, b.x1));
    CHECK(bits_equal(a.v, b.v));
    CHECK(bits_equal(a.x_lo, b.x_lo));
    CHECK(bits_equal(a.x_hi, b.x_hi));
    CHECK(bits_equal(a.u_lo, b.u_lo));
    CHECK(bits_equal(a.u_hi, b.u_hi));
    CHECK(bits_equal(a.eta, b.eta));
    CHECK(bits_equal(a.c, b.c));
}

BuildingModel sample_prototype(int N) {
    Eigen::VectorXd c_tilde(N);
    for (int k = 0; k < N; ++k) c_tilde(k) = 0.10 + 0.03 * std::sin(0.7 * k);
    return prototype_building(PrototypeClass::medium, true, N, 4242, 3, c_tilde);
}

std::string minimal_generator_scenario() {
    return R"({"schema_version": 1,
               "fleet": {"generator": {"seed": 5, "count_small": 2}}})";
}

} // namespace

TEST_CASE("format_double uses %.17g and round-trips doubles exactly") {
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-0.5) == "-0.5");
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(1e22) == "1e+22");
    CHECK(format_double(1e300) == "1.0000000000000001e+300");  // 1e300 itself is not a double
    CHECK(format_double(-0.0) == "-0");

    std::mt19937_64 rng(99);
    int tested = 0;
    for (int trial = 0; trial < 2000 && tested < 500; ++trial) {
        const double x = std::bit_cast<double>(rng());
        if (std::isnan(x)) continue;  // NaN never compares equal; nothing to round-trip
        ++tested;
        // strtod rather than std::stod: the latter throws on subnormal inputs.
        CHECK(bits_equal(std::strtod(format_double(x).c_str(), nullptr), x));
    }
    CHECK(tested == 500);
}

TEST_CASE("model JSON round trip preserves every field bit for bit") {
    const BuildingModel mdl = sample_prototype(16);
    const BuildingModel back = model_from_json(model_to_json(mdl));
    check_same_model(mdl, back);
}

TEST_CASE("unbounded box entries serialize as null and read back as infinities") {
    Eigen::VectorXd cap(6);
    cap << 1.0, 2.0, 0.5, 3.0, 0.25, 1.5;
    const BuildingModel mdl = capacity_only_building(cap, 6);
    REQUIRE(std::isinf(mdl.x_lo(0)));
    REQUIRE(std::isinf(mdl.x_hi(0)));

    const std::string text = model_to_json(mdl);
    CHECK(text.find("null") != std::string::npos);
    auto j = nlohmann::json::parse(text);
    CHECK(j["x_lo"][0].is_null());
    CHECK(j["x_hi"][0].is_null());

    const BuildingModel back = model_from_json(text);
    check_same_model(mdl, back);
    CHECK(back.x_lo(0) == -std::numeric_limits<double>::infinity());
    CHECK(back.x_hi(0) == std::numeric_limits<double>::infinity());
}

TEST_CASE("bound entries also accept inf strings, and reject anything else") {
    auto j = nlohmann::json::parse(model_to_json(sample_prototype(8)));

    SUBCASE("string spellings of infinity") {
        j["x_hi"][0] = "inf";
        j["x_hi"][1] = "+inf";
        j["x_lo"][0] = "-inf";
        const BuildingModel back = model_from_json(j.dump());
        CHECK(back.x_hi(0) == std::numeric_limits<double>::infinity());
        CHECK(back.x_hi(1) == std::numeric_limits<double>::infinity());
        CHECK(back.x_lo(0) == -std::numeric_limits<double>::infinity());
    }
    SUBCASE("unknown bound string") {
        j["u_hi"][0] = "lots";
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()),
                             doctest::Contains("unrecognized bound string"), ModelIoError);
    }
    SUBCASE("null is only meaningful for bounds") {
        j["x1"][0] = nullptr;
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()),
                             doctest::Contains("expected numeric entries"), ModelIoError);
    }
}

TEST_CASE("model_from_json rejects malformed documents with pointed messages") {
    const BuildingModel mdl = sample_prototype(8);
    auto fresh = [&] { return nlohmann::json::parse(model_to_json(mdl)); };

    SUBCASE("not JSON at all") {
        CHECK_THROWS_WITH_AS(model_from_json("{nope"), doctest::Contains("not valid JSON"),
                             ModelIoError);
    }
    SUBCASE("unsupported schema version") {
        auto j = fresh();
        j["schema_version"] = 2;
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()),
                             doctest::Contains("unsupported schema_version 2"), ModelIoError);
    }
    SUBCASE("missing schema version") {
        auto j = fresh();
        j.erase("schema_version");
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()),
                             doctest::Contains("missing integer field 'schema_version'"),
                             ModelIoError);
    }
    SUBCASE("nonpositive dimensions") {
        auto j = fresh();
        j["n"] = 0;
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()),
                             doctest::Contains("dimensions must be positive"), ModelIoError);
    }
    SUBCASE("vector length mismatch") {
        auto j = fresh();
        j["x1"].push_back(1.0);
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()), doctest::Contains("'x1'"),
                             ModelIoError);
    }
    SUBCASE("missing matrix") {
        auto j = fresh();
        j.erase("B");
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()), doctest::Contains("'B'"), ModelIoError);
    }
    SUBCASE("ragged matrix row") {
        auto j = fresh();
        j["A"][0].push_back(0.0);
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()), doctest::Contains("row 0"),
                             ModelIoError);
    }
    SUBCASE("model-level validation runs after parsing") {
        auto j = fresh();
        const int n = j["n"].get<int>();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) j["A"][r][c] = (r == c ? 1.5 : 0.0);
        CHECK_THROWS_WITH_AS(model_from_json(j.dump()), doctest::Contains("spectral radius"),
                             ModelIoError);

        auto j2 = fresh();
        j2["x_lo"][0] = 1e9;
        CHECK_THROWS_WITH_AS(model_from_json(j2.dump()), doctest::Contains("hour 1"),
                             ModelIoError);
    }
}

TEST_CASE("save_model / load_model round trip through the filesystem") {
    TempDir tmp;
    const BuildingModel mdl = sample_prototype(12);
    const std::string path = tmp.file("building.json");
    save_model(mdl, path);
    check_same_model(mdl, load_model(path));

    CHECK_THROWS_WITH_AS(load_model(tmp.file("absent.json")),
                         doctest::Contains("cannot open model file"), ModelIoError);

    // Errors raised while parsing a file lead with the path so batch loads are debuggable.
    const std::string bad = tmp.file("broken.json");
    std::ofstream(bad) << "{\"schema_version\": 1}";
    CHECK_THROWS_WITH_AS(load_model(bad), doctest::Contains("broken.json"), ModelIoError);
}

TEST_CASE("fleet manifests round trip and validate their fields") {
    TempDir tmp;
    FleetManifest manifest;
    manifest.seed = 987654321;
    manifest.N = 24;
    manifest.files = {"a.json", "sub/b.json", "c.json"};
    const std::string path = tmp.file("fleet.json");
    save_manifest(manifest, path);

    const FleetManifest back = load_manifest(path);
    CHECK(back.schema_version == 1);
    CHECK(back.seed == manifest.seed);
    CHECK(back.N == manifest.N);
    CHECK(back.files == manifest.files);

    SUBCASE("wrong schema version") {
        std::ofstream(path) << R"({"schema_version": 2, "seed": 1, "horizon": 4})";
        CHECK_THROWS_WITH_AS(load_manifest(path),
                             doctest::Contains("unsupported schema_version 2"), ModelIoError);
    }
    SUBCASE("missing seed") {
        std::ofstream(path) << R"({"schema_version": 1, "horizon": 4})";
        CHECK_THROWS_WITH_AS(load_manifest(path),
                             doctest::Contains("missing unsigned field 'seed'"), ModelIoError);
    }
    SUBCASE("files must be string entries") {
        std::ofstream(path) << R"({"schema_version": 1, "seed": 1, "files": "a.json"})";
        CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("'files' must be an array"),
                             ModelIoError);
        std::ofstream(path) << R"({"schema_version": 1, "seed": 1, "files": [3]})";
        CHECK_THROWS_WITH_AS(load_manifest(path),
                             doctest::Contains("'files' entries must be strings"), ModelIoError);
    }
    SUBCASE("not valid JSON") {
        std::ofstream(path) << "][";
        CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("not valid JSON"),
                             ModelIoError);
    }
}

TEST_CASE("load_fleet resolves files relative to the manifest and checks horizons") {
    TempDir tmp;
    fs::create_directories(tmp.dir / "models");
    Eigen::VectorXd cap0 = Eigen::VectorXd::Constant(6, 1.0);
    Eigen::VectorXd cap1 = Eigen::VectorXd::Constant(6, 2.0);
    BuildingModel m0 = capacity_only_building(cap0, 6);
    BuildingModel m1 = capacity_only_building(cap1, 6);
    m0.id = 10;
    m1.id = 11;
    save_model(m0, tmp.file("models/first.json"));
    save_model(m1, tmp.file("models/second.json"));

    FleetManifest manifest;
    manifest.seed = 1;
    manifest.N = 6;
    manifest.files = {"models/first.json", "models/second.json"};
    const std::string path = tmp.file("fleet.json");
    save_manifest(manifest, path);

    const std::vector<BuildingModel> fleet = load_fleet(path);
    REQUIRE(fleet.size() == 2);
    CHECK(fleet[0].id == 10);
    CHECK(fleet[1].id == 11);
    check_same_model(fleet[1], m1);

    manifest.N = 7;  // disagrees with every stored model
    save_manifest(manifest, path);
    CHECK_THROWS_WITH_AS(load_fleet(path), doctest::Contains("horizon disagrees"),
                         ModelIoError);
}

TEST_CASE("a minimal scenario fills every default") {
    const Scenario s = scenario_from_json(minimal_generator_scenario(), "base");
    CHECK(s.schema_version == 1);
    CHECK(s.name == "scenario");
    CHECK(s.N == 24);
    REQUIRE(s.generator.has_value());
    CHECK(s.generator->seed == 5);
    CHECK(s.generator->count_small == 2);
    CHECK(s.generator->count_medium == 0);
    CHECK(s.generator->count_large == 0);
    CHECK(s.generator->residential_fraction == 0.5);
    CHECK(s.generator->N == 24);
    CHECK(s.model_files.empty());

    CHECK(s.fabricated_reserve_price);
    CHECK(s.fabricated_energy_price);
    REQUIRE(s.p.size() == 24);
    REQUIRE(s.c_tilde.size() == 24);
    CHECK(s.p.minCoeff() == kDefaultReservePrice);
    CHECK(s.p.maxCoeff() == kDefaultReservePrice);
    CHECK(s.c_tilde.minCoeff() == kDefaultEnergyPrice);
    CHECK(s.c_tilde.maxCoeff() == kDefaultEnergyPrice);
    CHECK(bits_equal(s.generator->p, s.p));
    CHECK(bits_equal(s.generator->c_tilde, s.c_tilde));

    CHECK(s.admm.rho == 1.0);
    CHECK(s.admm.max_iters == 25);
    CHECK(s.admm.stopping == StoppingRule::fixed_iterations);
    CHECK(s.admm.structure == PolicyStructure::lower_triangular);
    CHECK(s.admm.qp_tol == 1e-9);
    CHECK(s.admm.qp_max_iter == 100);
    CHECK(s.admm.threads == 0);
    CHECK(s.admm.jf_every == 1);

    CHECK(s.mode == BidMode::central);
    CHECK(s.alpha == 0.5);
    CHECK(s.y_min == 0.0);
    CHECK(s.out_dir == "out");
    CHECK(s.sweep_scales.empty());
}

TEST_CASE("a fully specified scenario parses every field") {
    const std::string text = R"({
        "schema_version": 1,
        "name": "six-hour bench",
        "horizon": 6,
        "fleet": {"generator": {"seed": 42, "count_small": 1, "count_medium": 2,
                                 "count_large": 3, "residential_fraction": 0.25}},
        "prices": {"reserve": [0.5, 0.4, 0.3, 0.2, 0.1, 0.6],
                   "energy": 0.11},
        "admm": {"rho": 0.3, "max_iters": 80, "qp_tol": 1e-8, "qp_max_iter": 250,
                 "jf_every": 4, "threads": 2, "structure": "block_diagonal",
                 "stopping": {"residual": 1e-5}},
        "mode": "decentral",
        "alpha": 0.25,
        "y_min": 2.5,
        "out_dir": "runs",
        "sweep": {"price_scales": [0.5, 1.0, 2.0]}
    })";
    const Scenario s = scenario_from_json(text, "");
    CHECK(s.name == "six-hour bench");
    CHECK(s.N == 6);
    REQUIRE(s.generator.has_value());
    CHECK(s.generator->count_large == 3);
    CHECK(s.generator->residential_fraction == 0.25);

    CHECK_FALSE(s.fabricated_reserve_price);
    CHECK_FALSE(s.fabricated_energy_price);
    REQUIRE(s.p.size() == 6);
    CHECK(s.p(0) == 0.5);
    CHECK(s.p(5) == 0.6);
    CHECK(s.c_tilde.minCoeff() == 0.11);  // scalar price broadcasts to the horizon
    CHECK(s.c_tilde.maxCoeff() == 0.11);

    CHECK(s.admm.rho == 0.3);
    CHECK(s.admm.max_iters == 80);
    CHECK(s.admm.qp_tol == 1e-8);
    CHECK(s.admm.qp_max_iter == 250);
    CHECK(s.admm.jf_every == 4);
    CHECK(s.admm.threads == 2);
    CHECK(s.admm.structure == PolicyStructure::block_diagonal);
    CHECK(s.admm.stopping == StoppingRule::residual);
    CHECK(s.admm.residual_eps == 1e-5);

    CHECK(s.mode == BidMode::decentral);
    CHECK(s.alpha == 0.25);
    CHECK(s.y_min == 2.5);
    CHECK(s.out_dir == "runs");
    CHECK(s.sweep_scales == std::vector<double>{0.5, 1.0, 2.0});
}

TEST_CASE("scenario model_files resolve against the scenario directory") {
    const std::string text = R"({
        "schema_version": 1,
        "fleet": {"model_files": ["models/a.json", "/abs/b.json"]}
    })";
    const Scenario s = scenario_from_json(text, "cfgdir");
    REQUIRE(s.model_files.size() == 2);
    CHECK(s.model_files[0] == (fs::path("cfgdir") / "models/a.json").string());
    CHECK(s.model_files[1] == "/abs/b.json");
    CHECK_FALSE(s.generator.has_value());
}

TEST_CASE("scenario parsing rejects malformed input with pointed messages") {
    auto reject = [](const std::string& text, const char* needle) {
        CHECK_THROWS_WITH_AS(scenario_from_json(text, ""), doctest::Contains(needle),
                             ScenarioError);
    };
    reject("[1, 2]", "top level must be a JSON object");
    reject("not json", "not valid JSON");
    reject(R"({"fleet": {"generator": {}}})", "unsupported schema_version 0");
    reject(R"({"schema_version": 2, "fleet": {"generator": {}}})",
           "unsupported schema_version 2");
    reject(R"({"schema_version": 1})", "missing 'fleet' object");
    reject(R"({"schema_version": 1, "horizon": 0, "fleet": {"generator": {}}})",
           "horizon must be positive");
    reject(R"({"schema_version": 1, "fleet": {}})", "exactly one source");
    reject(R"({"schema_version": 1,
               "fleet": {"generator": {}, "model_files": ["a.json"]}})",
           "exactly one source");
    reject(R"({"schema_version": 1, "fleet": {"generator": 3}})",
           "'generator' must be an object");
    reject(R"({"schema_version": 1, "fleet": {"model_files": []}})", "non-empty array");
    reject(R"({"schema_version": 1, "fleet": {"model_files": [7]}})",
           "entries must be strings");

    const std::string gen = R"("fleet": {"generator": {"seed": 1, "count_small": 1}})";
    reject(R"({"schema_version": 1, )" + gen + R"(, "prices": {"reserve": [0.5]}})",
           "must hold 24 entries");
    reject(R"({"schema_version": 1, )" + gen + R"(, "prices": {"reserve": "high"}})",
           "must be a number or an array");
    reject(R"({"schema_version": 1, "horizon": 2, )" + gen +
               R"(, "prices": {"energy": [0.1, "x"]}})",
           "entries must be numbers");

    reject(R"({"schema_version": 1, )" + gen + R"(, "admm": {"rho": 0}})",
           "admm.rho must be positive");
    reject(R"({"schema_version": 1, )" + gen + R"(, "admm": {"max_iters": 0}})",
           "admm.max_iters must be positive");
    reject(R"({"schema_version": 1, )" + gen + R"(, "admm": {"structure": "diagonal"}})",
           "unknown recourse structure 'diagonal'");
    reject(R"({"schema_version": 1, )" + gen + R"(, "admm": {"stopping": "until tired"}})",
           "'admm.stopping' must be");
    reject(R"({"schema_version": 1, )" + gen + R"(, "mode": "solo"})", "unknown mode 'solo'");
    reject(R"({"schema_version": 1, )" + gen + R"(, "alpha": 1.5})",
           "alpha must lie in [0, 1]");
    reject(R"({"schema_version": 1, )" + gen + R"(, "alpha": -0.1})",
           "alpha must lie in [0, 1]");
    reject(R"({"schema_version": 1, )" + gen + R"(, "sweep": [1, 2]})", "'sweep' must be");
    reject(R"({"schema_version": 1, )" + gen + R"(, "sweep": {"price_scales": ["x"]}})",
           "sweep scales must be numbers");
}

TEST_CASE("scenario_to_json round trips through scenario_from_json") {
    SUBCASE("generator fleet with explicit prices") {
        Scenario s;
        s.name = "round trip";
        s.N = 4;
        FleetSpec spec;
        spec.seed = 17;
        spec.count_small = 1;
        spec.count_medium = 1;
        spec.residential_fraction = 0.75;
        spec.N = 4;
        s.generator = spec;
        s.p = (Eigen::VectorXd(4) << 0.31, 0.29, 0.33, 0.27).finished();
        s.c_tilde = (Eigen::VectorXd(4) << 0.12, 0.13, 0.11, 0.10).finished();
        s.admm.rho = 0.7;
        s.admm.max_iters = 40;
        s.admm.structure = PolicyStructure::zero;
        s.admm.stopping = StoppingRule::residual;
        s.admm.residual_eps = 3e-7;
        s.admm.qp_tol = 1e-10;
        s.admm.qp_max_iter = 321;
        s.admm.threads = 3;
        s.admm.jf_every = 0;
        s.mode = BidMode::decentral;
        s.alpha = 0.125;
        s.y_min = 1.5;
        s.out_dir = "elsewhere";
        s.sweep_scales = {0.9, 1.1};

        const Scenario back = scenario_from_json(scenario_to_json(s), "");
        CHECK(back.name == s.name);
        CHECK(back.N == s.N);
        REQUIRE(back.generator.has_value());
        CHECK(back.generator->seed == 17);
        CHECK(back.generator->count_small == 1);
        CHECK(back.generator->count_medium == 1);
        CHECK(back.generator->residential_fraction == 0.75);
        CHECK(bits_equal(back.p, s.p));
        CHECK(bits_equal(back.c_tilde, s.c_tilde));
        CHECK_FALSE(back.fabricated_reserve_price);
        CHECK_FALSE(back.fabricated_energy_price);
        CHECK(back.admm.rho == s.admm.rho);
        CHECK(back.admm.max_iters == s.admm.max_iters);
        CHECK(back.admm.structure == s.admm.structure);
        CHECK(back.admm.stopping == StoppingRule::residual);
        CHECK(back.admm.residual_eps == s.admm.residual_eps);
        CHECK(back.admm.qp_tol == s.admm.qp_tol);
        CHECK(back.admm.qp_max_iter == s.admm.qp_max_iter);
        CHECK(back.admm.threads == s.admm.threads);
        CHECK(back.admm.jf_every == s.admm.jf_every);
        CHECK(back.mode == s.mode);
        CHECK(back.alpha == s.alpha);
        CHECK(back.y_min == s.y_min);
        CHECK(back.out_dir == s.out_dir);
        CHECK(back.sweep_scales == s.sweep_scales);
    }
    SUBCASE("fabricated prices stay fabricated") {
        // A scenario that fell back to the default prices must not dump them as if
        // the user had chosen them.
        const Scenario s = scenario_from_json(minimal_generator_scenario(), "");
        const std::string text = scenario_to_json(s);
        CHECK(text.find("reserve") == std::string::npos);
        const Scenario back = scenario_from_json(text, "");
        CHECK(back.fabricated_reserve_price);
        CHECK(back.fabricated_energy_price);
        CHECK(bits_equal(back.p, s.p));
    }
    SUBCASE("model file lists survive") {
        Scenario s;
        s.N = 6;
        s.model_files = {"models/a.json", "/abs/b.json"};
        s.p = Eigen::VectorXd::Constant(6, 0.4);
        s.c_tilde = Eigen::VectorXd::Constant(6, 0.1);
        const Scenario back = scenario_from_json(scenario_to_json(s), "");
        CHECK(back.model_files == s.model_files);
        CHECK_FALSE(back.generator.has_value());
    }
}

TEST_CASE("load_scenario reads a file and resolves model paths against it") {
    TempDir tmp;
    const std::string path = tmp.file("bench.json");
    std::ofstream(path) << R"({
        "schema_version": 1,
        "horizon": 6,
        "fleet": {"model_files": ["m.json"]}
    })";
    const Scenario s = load_scenario(path);
    REQUIRE(s.model_files.size() == 1);
    CHECK(s.model_files[0] == tmp.file("m.json"));

    CHECK_THROWS_WITH_AS(load_scenario(tmp.file("absent.json")),
                         doctest::Contains("cannot open scenario file"), ScenarioError);

    std::ofstream(path) << R"({"schema_version": 1})";
    CHECK_THROWS_WITH_AS(load_scenario(path), doctest::Contains("bench.json"), ScenarioError);
}

TEST_CASE("realize_fleet runs the generator or loads the referenced models") {
    SUBCASE("generator scenarios are deterministic") {
        const Scenario s = scenario_from_json(minimal_generator_scenario(), "");
        const std::vector<BuildingModel> a = realize_fleet(s);
        const std::vector<BuildingModel> b = realize_fleet(s);
        REQUIRE(a.size() == 2);
        REQUIRE(b.size() == 2);
        check_same_model(a[0], b[0]);
        check_same_model(a[1], b[1]);
        CHECK(a[0].N == 24);
    }
    SUBCASE("model files must match the scenario horizon") {
        TempDir tmp;
        const Eigen::VectorXd cap = Eigen::VectorXd::Constant(6, 1.0);
        save_model(capacity_only_building(cap, 6), tmp.file("m.json"));

        Scenario s;
        s.N = 6;
        s.model_files = {tmp.file("m.json")};
        const std::vector<BuildingModel> fleet = realize_fleet(s);
        REQUIRE(fleet.size() == 1);
        CHECK(fleet[0].N == 6);

        s.N = 8;
        CHECK_THROWS_WITH_AS(realize_fleet(s), doctest::Contains("scenario expects 8"),
                             ScenarioError);
    }
}

TEST_CASE("numeric CSV files round trip bit for bit") {
    TempDir tmp;
    const std::string path = tmp.file("table.csv");

    Eigen::MatrixXd rows(3, 4);
    rows << M_PI, 1.0 / 3.0, 0.1, 5e-324,
            -0.0, 1e308, 1.0, -2.5e-7,
            123456789.123456789, std::exp(1.0), 4097.03125,
            -std::numeric_limits<double>::infinity();
    const std::vector<std::string> header = {"hour", "level", "price", "margin"};
    write_numeric_csv(path, header, rows);

    std::vector<std::string> head_back;
    const Eigen::MatrixXd back = read_numeric_csv(path, &head_back);
    CHECK(head_back == header);
    CHECK(bits_equal(Eigen::MatrixXd(back), rows));

    // The on-disk text is the deterministic %.17g rendering, nothing fancier.
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "hour,level,price,margin");
    std::getline(in, line);
    CHECK(line == format_double(rows(0, 0)) + "," + format_double(rows(0, 1)) + "," +
                      format_double(rows(0, 2)) + "," + format_double(rows(0, 3)));

    SUBCASE("header is optional on read") {
        const Eigen::MatrixXd again = read_numeric_csv(path);
        CHECK(bits_equal(Eigen::MatrixXd(again), rows));
    }
    SUBCASE("a table with no rows keeps its column count") {
        write_numeric_csv(path, {"a", "b"}, Eigen::MatrixXd(0, 2));
        const Eigen::MatrixXd empty = read_numeric_csv(path, &head_back);
        CHECK(empty.rows() == 0);
        CHECK(empty.cols() == 2);
        CHECK(head_back == std::vector<std::string>{"a", "b"});
    }
    SUBCASE("blank trailing lines are ignored") {
        std::ofstream(path) << "a,b\n1,2\n\n\n";
        const Eigen::MatrixXd two = read_numeric_csv(path);
        REQUIRE(two.rows() == 1);
        CHECK(two(0, 1) == 2.0);
    }
    SUBCASE("write-side validation") {
        CHECK_THROWS_WITH_AS(write_numeric_csv(path, {"only"}, rows),
                             doctest::Contains("one header per column"), std::invalid_argument);
    }
    SUBCASE("read-side validation") {
        CHECK_THROWS_WITH(read_numeric_csv(tmp.file("absent.csv")),
                          doctest::Contains("cannot open"));
        std::ofstream(path) << "";
        CHECK_THROWS_WITH(read_numeric_csv(path), doctest::Contains("empty file"));
        std::ofstream(path) << "a,b\n1,2,3\n";
        CHECK_THROWS_WITH(read_numeric_csv(path), doctest::Contains("ragged row"));
        std::ofstream(path) << "a,b\n1,zero\n";
        CHECK_THROWS_WITH(read_numeric_csv(path), doctest::Contains("unparseable cell"));
    }
}

TEST_CASE("bid mode names") {
    CHECK(std::string(to_string(BidMode::individual)) == "individual");
    CHECK(std::string(to_string(BidMode::central)) == "central");
    CHECK(std::string(to_string(BidMode::decentral)) == "decentral");
}
