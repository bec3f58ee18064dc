#include "reserve/admm.hpp"
#include "reserve/building_model.hpp"
#include "reserve/decentral.hpp"
#include "reserve/model_io.hpp"
#include "reserve/outcomes.hpp"
#include "reserve/scenario.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace reserve;

namespace {

struct Overrides {
    std::string out;
    std::string mode;
    int iters = -1;
    double rho = -1.0;
    double alpha = -1.0;
    std::int64_t seed = -1;
};

Scenario load_with_overrides(const std::string& path, const Overrides& ov) {
    Scenario s = load_scenario(path);
    if (!ov.out.empty()) s.out_dir = ov.out;
    if (!ov.mode.empty()) {
        if (ov.mode == "individual")
            s.mode = BidMode::individual;
        else if (ov.mode == "central")
            s.mode = BidMode::central;
        else if (ov.mode == "decentral")
            s.mode = BidMode::decentral;
        else
            throw ScenarioError("unknown --mode '" + ov.mode +
                                "' (use individual, central or decentral)");
    }
    if (ov.iters > 0) s.admm.max_iters = ov.iters;
    if (ov.rho > 0.0) s.admm.rho = ov.rho;
    if (ov.alpha >= 0.0) {
        if (ov.alpha > 1.0) throw ScenarioError("--alpha must lie in [0, 1]");
        s.alpha = ov.alpha;
    }
    if (ov.seed >= 0) {
        if (s.generator)
            s.generator->seed = static_cast<std::uint64_t>(ov.seed);
        else
            std::cerr << "warning: --seed has no effect on a model-file fleet\n";
    }
    return s;
}

std::string member_column(const BuildingModel& model) {
    return "y_" + std::to_string(model.id);
}

json ratio_json(double numerator, double denominator) {
    if (denominator == 0.0) return numerator == 0.0 ? json("undefined") : json("inf");
    return json(numerator / denominator);
}

void write_summary(const fs::path& path, const json& summary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << summary.dump(2) << "\n";
}

int cmd_generate(const Scenario& s) {
    if (!s.generator)
        throw ScenarioError("generate needs a scenario with a 'generator' fleet source");
    std::vector<BuildingModel> fleet = generate_fleet(*s.generator);
    fs::create_directories(s.out_dir);

    FleetManifest manifest;
    manifest.seed = s.generator->seed;
    manifest.N = s.N;
    for (const BuildingModel& model : fleet) {
        char name[32];
        std::snprintf(name, sizeof name, "b%03d.json", model.id);
        save_model(model, (fs::path(s.out_dir) / name).string());
        manifest.files.push_back(name);
    }
    save_manifest(manifest, (fs::path(s.out_dir) / "manifest.json").string());
    if (fleet.empty())
        std::cerr << "warning: generator counts are all zero; wrote an empty manifest\n";
    std::cout << "wrote " << fleet.size() << " model file(s) and manifest.json to " << s.out_dir
              << "\n";
    return 0;
}

struct BidArtifacts {
    Eigen::MatrixXd y;        // offered member profiles at the inspected iterate
    Eigen::VectorXd Lambda;   // internal price (empty for individual mode)
    double J = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    double primal_residual = 0.0;
    bool converged = false;
    const AdmmRun* run = nullptr;
};

void write_trace(const fs::path& path, const std::vector<BuildingModel>& fleet,
                 const AdmmRun* run) {
    std::vector<std::string> header = {"iter", "primal_residual", "J", "J_F"};
    for (const BuildingModel& model : fleet)
        header.push_back("residual_" + std::to_string(model.id));
    const Eigen::Index rows = run ? static_cast<Eigen::Index>(run->history.size()) : 0;
    Eigen::MatrixXd table(rows, static_cast<Eigen::Index>(header.size()));
    for (Eigen::Index r = 0; r < rows; ++r) {
        const AdmmIterate& it = run->history[static_cast<std::size_t>(r)];
        table(r, 0) = it.iter;
        table(r, 1) = it.primal_residual;
        table(r, 2) = it.J;
        table(r, 3) = it.JF;
        for (int b = 0; b < it.member_residual.size(); ++b)
            table(r, 4 + b) = it.member_residual(b);
    }
    write_numeric_csv(path.string(), header, table);
}

int cmd_bid(const Scenario& s) {
    std::vector<BuildingModel> fleet = realize_fleet(s);
    if (fleet.empty()) throw ScenarioError("bid needs a non-empty fleet");
    const int M = static_cast<int>(fleet.size());
    const int N = s.N;
    fs::create_directories(s.out_dir);
    if (s.fabricated_reserve_price)
        std::cerr << "note: scenario supplies no reserve prices; using the flat default "
                  << kDefaultReservePrice << "\n";

    BidArtifacts art;
    AdmmRun run;
    std::vector<IndividualBid> individuals;

    if (s.mode == BidMode::individual) {
        art.y.resize(N, M);
        art.J = 0.0;
        for (int b = 0; b < M; ++b) {
            IndividualBid bid = solve_individual(fleet[static_cast<std::size_t>(b)],
                                                 s.admm.structure, s.p, s.admm.qp_tol,
                                                 s.admm.qp_max_iter);
            art.y.col(b) = bid.y;
            art.J += bid.objective;
            individuals.push_back(std::move(bid));
        }
        art.converged = true;
    } else {
        run = s.mode == BidMode::central ? run_centralized(fleet, s.admm, s.p)
                                         : run_decentralized(fleet, s.admm, s.p);
        const AdmmIterate& last = run.history.back();
        art.y = last.y;
        art.Lambda = last.lambda.col(0);
        art.J = last.J;
        art.iterations = run.iterations;
        art.primal_residual = last.primal_residual;
        art.converged =
            last.primal_residual <= 1e-6 * std::max(1.0, last.Y.norm());
        art.run = &run;
    }

    // Every mode settles on the jointly feasible extraction of the inspected profiles.
    BidOutcome outcome = feasible_extract(fleet, art.y, s.p, s.admm.structure, s.admm.qp_tol,
                                          s.admm.qp_max_iter);
    if (art.Lambda.size() > 0) {
        outcome.Lambda = art.Lambda;
        outcome.Lambda_F =
            feasible_lagrangian_price(outcome.Y_F, art.Lambda, s.admm.rho, M, s.p);
    } else {
        // A lone bidder is paid the market price directly; there is no internal price.
        outcome.Lambda = s.p;
        outcome.Lambda_F = s.p;
    }
    outcome.reward_proportional = proportional_reward(s.p, outcome.y_F);
    outcome.reward_lagrangian = lagrangian_reward(outcome.Lambda_F, outcome.y_F);
    outcome.reward_mixed =
        mixed_reward(s.alpha, outcome.reward_proportional, outcome.reward_lagrangian);

    // bids.csv: hour, feasible aggregate, one share column per member.
    {
        std::vector<std::string> header = {"hour", "Y_F"};
        for (const BuildingModel& model : fleet) header.push_back(member_column(model));
        Eigen::MatrixXd table(N, 2 + M);
        for (int k = 0; k < N; ++k) {
            table(k, 0) = k + 1;
            table(k, 1) = outcome.Y_F(k);
            for (int b = 0; b < M; ++b) table(k, 2 + b) = outcome.y_F(k, b);
        }
        write_numeric_csv((fs::path(s.out_dir) / "bids.csv").string(), header, table);
    }

    write_trace(fs::path(s.out_dir) / "trace.csv", fleet, art.run);

    // rewards.csv: per-member settlement of the feasible bid.
    {
        std::vector<std::string> header = {"id", "r", "r_lambda", "r_mix"};
        Eigen::MatrixXd table(M, 4);
        for (int b = 0; b < M; ++b) {
            table(b, 0) = fleet[static_cast<std::size_t>(b)].id;
            table(b, 1) = outcome.reward_proportional(b);
            table(b, 2) = outcome.reward_lagrangian(b);
            table(b, 3) = outcome.reward_mixed(b);
        }
        write_numeric_csv((fs::path(s.out_dir) / "rewards.csv").string(), header, table);
    }

    // The stand-alone alternative, for the advantage ratio.
    double pooled_individual_revenue = 0.0;
    if (s.mode == BidMode::individual) {
        for (int b = 0; b < M; ++b) pooled_individual_revenue += s.p.dot(art.y.col(b));
    } else {
        for (const BuildingModel& model : fleet)
            pooled_individual_revenue +=
                s.p.dot(solve_individual(model, s.admm.structure, s.p, s.admm.qp_tol,
                                         s.admm.qp_max_iter)
                            .y);
    }
    const double revenue_F = s.p.dot(outcome.Y_F);
    const double level_F = outcome.Y_F(0);
    const bool y_min_met = level_F + 1e-12 >= s.y_min;
    if (!y_min_met)
        std::cerr << "warning: feasible aggregate level " << level_F
                  << " is below the scenario's y_min " << s.y_min << "\n";

    json summary;
    summary["schema_version"] = 1;
    summary["name"] = s.name;
    summary["mode"] = to_string(s.mode);
    summary["buildings"] = M;
    summary["horizon"] = N;
    summary["iterations"] = art.iterations;
    summary["converged"] = art.converged;
    summary["primal_residual"] = art.primal_residual;
    summary["J"] = art.J;
    summary["J_F"] = outcome.J_F;
    summary["pY_F"] = revenue_F;
    summary["Y_F_level"] = level_F;
    summary["advantage_ratio"] = ratio_json(revenue_F, pooled_individual_revenue);
    summary["pooled_individual_revenue"] = pooled_individual_revenue;
    summary["alpha"] = s.alpha;
    summary["rho"] = s.admm.rho;
    summary["y_min"] = s.y_min;
    summary["y_min_met"] = y_min_met;
    summary["reserve_price_fabricated"] = s.fabricated_reserve_price;
    summary["energy_price_fabricated"] = s.fabricated_energy_price;
    write_summary(fs::path(s.out_dir) / "summary.json", summary);

    std::cout << "mode " << to_string(s.mode) << ": Y_F level " << format_double(level_F)
              << " kW, J_F " << format_double(outcome.J_F) << ", revenue "
              << format_double(revenue_F) << " (" << art.iterations << " iterations)\n"
              << "outputs in " << s.out_dir << "\n";
    return 0;
}

int cmd_sweep(const Scenario& s) {
    if (s.sweep_scales.empty())
        throw ScenarioError("sweep needs a non-empty 'sweep.price_scales' grid");
    std::vector<BuildingModel> fleet = realize_fleet(s);
    if (fleet.empty()) throw ScenarioError("sweep needs a non-empty fleet");
    fs::create_directories(s.out_dir);

    AdmmConfig config = s.admm;
    config.jf_every = 0;  // extraction runs once per grid point below
    Eigen::MatrixXd table(static_cast<Eigen::Index>(s.sweep_scales.size()), 3);
    for (std::size_t i = 0; i < s.sweep_scales.size(); ++i) {
        const double scale = s.sweep_scales[i];
        if (scale < 0.0) throw ScenarioError("sweep price scales must be nonnegative");
        const Eigen::VectorXd p = scale * s.p;
        AdmmRun run = s.mode == BidMode::decentral ? run_decentralized(fleet, config, p)
                                                   : run_centralized(fleet, config, p);
        BidOutcome outcome = feasible_extract(fleet, run.history.back().y, p, config.structure,
                                              config.qp_tol, config.qp_max_iter);
        table(static_cast<Eigen::Index>(i), 0) = scale;
        table(static_cast<Eigen::Index>(i), 1) = outcome.Y_F(0);
        table(static_cast<Eigen::Index>(i), 2) = outcome.J_F;
        std::cout << "scale " << format_double(scale) << ": Y_F level "
                  << format_double(outcome.Y_F(0)) << ", J_F " << format_double(outcome.J_F)
                  << "\n";
    }
    write_numeric_csv((fs::path(s.out_dir) / "sweep.csv").string(),
                      {"price_scale", "Y_F_level", "J_F"}, table);
    std::cout << "wrote sweep.csv to " << s.out_dir << "\n";
    return 0;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const NegotiationError& e) {
        if (e.status == SolveStatus::infeasible) {
            std::cerr << "infeasible: " << e.what() << "\n";
            return 2;
        }
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return 1;
    } catch (const ModelIoError& e) {
        std::cerr << "model file error: " << e.what() << "\n";
        return 1;
    } catch (const ProtocolError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"aggregated frequency-reserve bidding for building fleets"};
    app.require_subcommand(1);

    std::string scenario_path;
    Overrides ov;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--scenario", scenario_path, "scenario JSON file")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", ov.out, "output directory (overrides the scenario)");
    };

    CLI::App* generate = app.add_subcommand("generate", "write a synthetic fleet to disk");
    add_common(generate);
    generate->add_option("--seed", ov.seed, "generator seed override");

    CLI::App* bid = app.add_subcommand("bid", "negotiate and settle one reserve bid");
    add_common(bid);
    bid->add_option("--mode", ov.mode, "individual | central | decentral");
    bid->add_option("--iters", ov.iters, "negotiation iteration cap override");
    bid->add_option("--rho", ov.rho, "penalty parameter override");
    bid->add_option("--alpha", ov.alpha, "reward mixing weight override");
    bid->add_option("--seed", ov.seed, "generator seed override");

    CLI::App* sweep = app.add_subcommand("sweep", "bid across a grid of price scales");
    add_common(sweep);
    sweep->add_option("--iters", ov.iters, "negotiation iteration cap override");
    sweep->add_option("--rho", ov.rho, "penalty parameter override");
    sweep->add_option("--seed", ov.seed, "generator seed override");

    CLI11_PARSE(app, argc, argv);

    return guarded([&]() -> int {
        const Scenario s = load_with_overrides(scenario_path, ov);
        if (generate->parsed()) return cmd_generate(s);
        if (bid->parsed()) return cmd_bid(s);
        return cmd_sweep(s);
    });
}
