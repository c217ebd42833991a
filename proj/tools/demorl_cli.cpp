// Experiment CLI: campaign drivers around the demorl_core library.
//
//   demorl <command> --config cfg.ini --out results/ [--seed S]
//
// Commands: train-demorl, train-sac, train-ars, run-demolayer,
// regret-check, ablate-elite. Every campaign writes run.csv,
// config.snapshot and curve.svg into the output directory.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "demorl/experiment.hpp"
#include "demorl/regret.hpp"
#include "demorl/report_io.hpp"

namespace fs = std::filesystem;
using namespace demorl;

namespace {

struct CliArgs {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed_override = -1;
};

ExperimentConfig load_config(const CliArgs& args) {
    ExperimentConfig cfg = args.config_path.empty()
                               ? ExperimentConfig{}
                               : ExperimentConfig::from_file(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed_override >= 0) cfg.seeds = {std::uint64_t(args.seed_override)};
    fs::create_directories(cfg.out_dir);
    return cfg;
}

void write_common_outputs(const ExperimentConfig& cfg, const std::string& command,
                          const std::vector<RunLog>& logs) {
    for (std::size_t i = 0; i < logs.size(); ++i)
        write_run_csv(cfg.out_dir + "/run_s" + std::to_string(cfg.seeds[i]) + ".csv",
                      logs[i]);
    // run.csv carries the cross-seed aggregate curve
    const CurveStats stats = aggregate_curves(logs);
    RunLog aggregate;
    for (std::size_t e = 0; e < stats.x.size(); ++e) {
        RunLogRow row;
        row.epoch = e;
        row.env_steps = logs[0].rows[e].env_steps;
        row.mean_eval_return = stats.mean[e];
        row.std_eval_return = stats.stddev[e];
        row.d_env_size = logs[0].rows[e].d_env_size;
        row.d_mpc_size = logs[0].rows[e].d_mpc_size;
        row.wall_seconds = logs[0].rows[e].wall_seconds;
        aggregate.rows.push_back(row);
    }
    write_run_csv(cfg.out_dir + "/run.csv", aggregate);
    write_curve_svg(cfg.out_dir + "/curve.svg", logs, command);
    write_text_file(cfg.out_dir + "/config.snapshot", cfg.snapshot_text(command));
}

int cmd_train(const CliArgs& args, const std::string& command) {
    const ExperimentConfig cfg = load_config(args);
    std::vector<RunLog> logs;
    for (const std::uint64_t seed : cfg.seeds) {
        std::cerr << command << ": seed " << seed << "\n";
        if (command == "train-demorl") {
            SacAgent agent{};
            logs.push_back(train_demorl(cfg, seed, &agent));
            save_sac_file(cfg.out_dir + "/sac_s" + std::to_string(seed) + ".bin", agent);
        } else if (command == "train-sac") {
            SacAgent agent{};
            logs.push_back(train_sac_baseline(cfg, seed, &agent));
            save_sac_file(cfg.out_dir + "/sac_s" + std::to_string(seed) + ".bin", agent);
        } else {
            ArsTrainResult res = train_ars(cfg, seed);
            logs.push_back(res.log);
            save_policy_file(cfg.out_dir + "/ars_policy_s" + std::to_string(seed) + ".txt",
                             res.policy);
        }
        const RunLogRow& last = logs.back().rows.back();
        std::cerr << "  final eval return " << last.mean_eval_return << " after "
                  << last.env_steps << " env steps\n";
    }
    write_common_outputs(cfg, command, logs);
    return 0;
}

int cmd_demolayer(const CliArgs& args) {
    const ExperimentConfig cfg = load_config(args);
    require(!cfg.demo_policy_path.empty(),
            "run-demolayer: demo.policy_path must point to an ARS checkpoint");
    const LinearPolicy policy = load_policy_file(cfg.demo_policy_path);

    std::ostringstream summary;
    summary << "seed,median_unguided,median_guided\n";
    bool any = false;
    for (const std::uint64_t seed : cfg.seeds) {
        std::cerr << "run-demolayer: seed " << seed << "\n";
        const std::vector<DemoEpisodeRow> rows = run_demolayer(cfg, policy, seed);
        write_demo_csv(cfg.out_dir + "/demo_s" + std::to_string(seed) + ".csv", rows);
        VecD unguided, guided;
        for (const DemoEpisodeRow& r : rows) {
            unguided.push_back(r.unguided_return);
            guided.push_back(r.guided_return);
        }
        std::sort(unguided.begin(), unguided.end());
        std::sort(guided.begin(), guided.end());
        summary << seed << ',' << unguided[unguided.size() / 2] << ','
                << guided[guided.size() / 2] << '\n';
        any = true;
    }
    require(any, "run-demolayer: no seeds");
    write_text_file(cfg.out_dir + "/demo_summary.csv", summary.str());
    write_text_file(cfg.out_dir + "/config.snapshot", cfg.snapshot_text("run-demolayer"));
    return 0;
}

ConvexTrackingSpec make_toy(const ExperimentConfig& cfg, std::uint64_t seed) {
    ConvexTrackingSpec spec;
    spec.dim = 1;
    spec.box_radius = cfg.regret_box_radius;
    spec.control_variance = cfg.regret_variance;
    spec.grid_points = cfg.regret_grid_points;
    Rng rng = make_rng(derive_seed(seed, "regret-toy"));
    std::uniform_real_distribution<double> inner(-0.5 * spec.box_radius,
                                                 0.5 * spec.box_radius);
    const double theta0 = inner(rng);
    spec.initial_mean = {inner(rng)};
    if (cfg.regret_target == "static") {
        spec.target = [theta0](std::size_t) { return VecD{theta0}; };
    } else {
        const double amp = 0.4 * spec.box_radius;
        spec.target = [theta0, amp](std::size_t t) {
            return VecD{theta0 + amp * std::sin(0.05 * double(t))};
        };
    }
    return spec;
}

int cmd_regret(const CliArgs& args) {
    const ExperimentConfig cfg = load_config(args);
    const AlphaSchedule schedule{cfg.regret_alpha_c};
    bool all_ok = true;
    std::ostringstream report;
    report << "seed,rounds,final_regret,final_bound,bound_holds,lemma_holds,"
              "loglog_slope\n";
    for (const std::uint64_t seed : cfg.seeds) {
        const ConvexTrackingSpec spec = make_toy(cfg, seed);
        const TrackingRun run = run_convex_tracking(cfg.regret_rounds, spec, schedule);
        const BoundReport bound = check_bound(run);
        const LemmaReport lemma = lemma1_per_round_check(run);
        const double slope = loglog_slope(run.records);
        std::ofstream csv(cfg.out_dir + "/regret_s" + std::to_string(seed) + ".csv");
        write_regret_csv(csv, run);
        report << seed << ',' << cfg.regret_rounds << ','
               << run.records.back().cum_regret << ',' << run.records.back().cum_bound
               << ',' << (bound.all_hold ? "yes" : "NO") << ','
               << (lemma.all_hold ? "yes" : "NO") << ',' << slope << '\n';
        all_ok = all_ok && bound.all_hold && lemma.all_hold && slope > 0.0 && slope < 1.0;
    }
    write_text_file(cfg.out_dir + "/regret_report.csv", report.str());
    write_text_file(cfg.out_dir + "/config.snapshot", cfg.snapshot_text("regret-check"));
    std::cout << (all_ok ? "regret-check: all checks hold\n"
                         : "regret-check: CHECK FAILED\n");
    return all_ok ? 0 : 1;
}

int cmd_ablate(const CliArgs& args, const std::string& fractions_csv) {
    const ExperimentConfig cfg = load_config(args);
    std::vector<double> fractions;
    std::istringstream in(fractions_csv);
    std::string item;
    while (std::getline(in, item, ',')) fractions.push_back(std::stod(item) / 100.0);
    const std::vector<AblationRow> table = ablate_elite(cfg, fractions);
    write_ablation_csv(cfg.out_dir + "/ablation.csv", table);
    write_text_file(cfg.out_dir + "/config.snapshot", cfg.snapshot_text("ablate-elite"));
    for (const AblationRow& row : table)
        std::cout << "p=" << row.elite_fraction * 100.0 << "%: median epochs-to-threshold "
                  << row.median_epochs_to_threshold << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DMD-MPC + model-free RL experiment driver"};
    app.require_subcommand(1);

    CliArgs args;
    std::string fractions = "1,5,10,20,50,100";
    for (const char* name :
         {"train-demorl", "train-sac", "train-ars", "run-demolayer", "regret-check",
          "ablate-elite"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", args.config_path, "config file (ini-style)");
        sub->add_option("--out", args.out_dir, "output directory");
        sub->add_option("--seed", args.seed_override, "override the seed list");
        if (std::string(name) == "ablate-elite")
            sub->add_option("--fractions", fractions, "elite percentages, comma separated");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands()[0]->get_name();
    try {
        if (command == "run-demolayer") return cmd_demolayer(args);
        if (command == "regret-check") return cmd_regret(args);
        if (command == "ablate-elite") return cmd_ablate(args, fractions);
        return cmd_train(args, command);
    } catch (const std::exception& err) {
        std::cerr << command << ": aborted: " << err.what() << "\n";
        return 2;
    }
}
