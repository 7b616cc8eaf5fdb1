#include <cmath>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "abmcal/csv.hpp"
#include "abmcal/experiment.hpp"

namespace fs = std::filesystem;
using namespace abmcal;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    int trials = 1;
    std::string out;
    std::string rule;
};

ExperimentConfig load_config(const GlobalOptions& g) {
    return g.config.empty() ? default_experiment_config() : load_experiment_config(g.config);
}

std::optional<GenerationRule> rule_option(const GlobalOptions& g) {
    if (g.rule.empty()) return std::nullopt;
    return parse_generation_rule(g.rule);
}

std::string fmt(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

int cmd_generate_validation(const GlobalOptions& g, int replications) {
    ExperimentConfig cfg = load_config(g);
    if (g.seed) cfg.validation_seed = *g.seed;
    if (replications > 0) cfg.validation_replications = replications;
    const fs::path out = g.out.empty() ? fs::path("validation") : fs::path(g.out);
    const ValidationData data = generate_validation(cfg.model, cfg.framework.dynamic_fixed,
                                                    cfg.framework.het_template, cfg.validation_replications,
                                                    cfg.validation_seed);
    nlohmann::json prov;
    prov["seed"] = cfg.validation_seed;
    prov["replications"] = cfg.validation_replications;
    prov["dynamic"] = {{"name", cfg.framework.dynamic_name},
                       {"values", std::vector<double>(cfg.framework.dynamic_fixed.values.data(),
                                                      cfg.framework.dynamic_fixed.values.data() +
                                                          cfg.framework.dynamic_fixed.values.size())}};
    const Matrix& hv = cfg.framework.het_template.values;
    prov["heterogeneous"] = {{"name", cfg.framework.het_name},
                             {"clusters", "initial-wealth top 50% = cluster 0"},
                             {"values", std::vector<double>(hv.data(), hv.data() + hv.size())}};
    prov["config"] = nlohmann::json::parse(experiment_config_json(cfg));
    write_file_atomic(out / "validation.csv", summary_trace_csv(data.trace));
    write_file_atomic(out / "validation.provenance.json", prov.dump(2) + "\n");
    std::cout << "wrote " << (out / "validation.csv").string() << " (" << data.trace.num_stats() << "x"
              << data.trace.horizon() << ", R=" << data.replications << ", seed " << data.master_seed << ")\n";
    return 0;
}

int cmd_calibrate(const GlobalOptions& g, const std::string& validation_path, const std::string& resume) {
    ExperimentConfig cfg = load_config(g);
    if (g.seed) cfg.framework.seed = *g.seed;
    if (auto r = rule_option(g)) cfg.framework.rule = *r;
    const fs::path out = g.out.empty() ? fs::path("calibration") : fs::path(g.out);

    Matrix validation;
    if (validation_path.empty()) {
        validation = generate_validation(cfg.model, cfg.framework.dynamic_fixed, cfg.framework.het_template,
                                         cfg.validation_replications, cfg.validation_seed)
                         .trace.stats;
    } else {
        validation = read_summary_trace(validation_path).stats;
    }
    const FrameworkModel model = wealth_framework_model(cfg.model);
    require(validation.rows() == static_cast<Eigen::Index>(model.stat_names.size()) &&
                validation.cols() == cfg.model.horizon,
            ErrorKind::dimension_mismatch, "validation data must be " + std::to_string(model.stat_names.size()) +
                                               "x" + std::to_string(cfg.model.horizon));
    FrameworkRunOptions options;
    options.snapshot = out / "snapshot.json";
    if (!resume.empty()) {
        std::ifstream in(resume);
        require(static_cast<bool>(in), ErrorKind::io, "cannot open snapshot " + resume);
        std::ostringstream text;
        text << in.rdbuf();
        options.resume = parse_snapshot(text.str());
    }
    const FrameworkResult result = run_framework(cfg.framework, model, validation, synthetic_reference(cfg), options);
    write_framework_outputs(result, cfg.framework, model.stat_names, out);
    const TrailRecord& best = result.state.trail[static_cast<std::size_t>(result.best_index)];
    std::cout << "best record: iteration " << best.iteration << " (" << to_string(best.phase) << ", candidate "
              << best.candidate << ")\n"
              << "total MAPE " << fmt(result.report.mape_total, 4) << ", dynamic MAE "
              << fmt(result.report.dynamic_mae, 4) << ", heterogeneous Euclidean "
              << fmt(result.report.het_euclidean, 4) << "\n"
              << "outputs in " << out.string() << "\n";
    return 0;
}

void print_table(const PresetRun& run) {
    std::cout << std::left << std::setw(20) << "method" << std::setw(7) << "trial" << std::right << std::setw(10)
              << "MAPE" << std::setw(10) << "MAE" << std::setw(10) << "Eucl" << std::setw(9) << "sec" << "\n";
    for (const TrialRow& r : run.rows) {
        std::cout << std::left << std::setw(20) << r.method << std::setw(7) << r.trial << std::right << std::setw(10)
                  << fmt(r.report.mape_total, 4) << std::setw(10) << fmt(r.report.dynamic_mae, 4) << std::setw(10)
                  << fmt(r.report.het_euclidean, 4) << std::setw(9) << fmt(r.seconds, 1) << "\n";
    }
    std::cout << "\naggregate (mean (sd))\n";
    std::string current;
    for (std::size_t i = 0; i < run.rows.size(); ++i) {
        const std::string& m = run.rows[i].method;
        if (m == current) continue;
        current = m;
        std::vector<double> mape, mae, eucl;
        for (const TrialRow& r : run.rows) {
            if (r.method != m) continue;
            mape.push_back(r.report.mape_total);
            mae.push_back(r.report.dynamic_mae);
            eucl.push_back(r.report.het_euclidean);
        }
        auto cell = [](const std::vector<double>& xs) {
            const double sd = xs.size() > 1 ? std::sqrt(sample_variance(xs)) : 0.0;
            return fmt(sample_mean(xs), 3) + " (" + fmt(sd, 3) + ")";
        };
        std::cout << std::left << std::setw(20) << m << "MAPE " << cell(mape) << "  MAE " << cell(mae) << "  Eucl "
                  << cell(eucl) << "\n";
    }
}

int cmd_run_preset(const GlobalOptions& g, const std::string& name) {
    const ExperimentConfig cfg = load_config(g);
    const std::uint64_t seed = g.seed.value_or(1);
    const fs::path out = g.out.empty() ? fs::path("runs") / name : fs::path(g.out) / name;
    const PresetRun run = run_preset(name, cfg, g.trials, seed, out, rule_option(g), &std::cerr);
    print_table(run);
    std::cout << "outputs in " << out.string() << "\n";
    return 0;
}

int cmd_report(const GlobalOptions& g, const std::string& dir_arg) {
    const fs::path dir = !dir_arg.empty() ? fs::path(dir_arg) : (g.out.empty() ? fs::path("runs") : fs::path(g.out));
    const RunReport report = build_report(dir);
    std::cout << "one-tailed Welch t-test, H1: method mean < random-search mean\n";
    std::cout << std::left << std::setw(24) << "method" << std::setw(18) << "baseline" << std::setw(15) << "metric"
              << std::right << std::setw(10) << "mean" << std::setw(10) << "base" << std::setw(9) << "t"
              << std::setw(10) << "p" << "\n";
    for (const WelchRow& w : report.welch) {
        std::cout << std::left << std::setw(24) << w.method << std::setw(18) << w.baseline << std::setw(15) << w.metric
                  << std::right << std::setw(10) << fmt(w.mean, 4) << std::setw(10) << fmt(w.baseline_mean, 4)
                  << std::setw(9) << fmt(w.test.t, 2) << std::setw(10) << fmt(w.test.p_value, 4) << "\n";
    }
    if (report.welch.empty()) std::cout << "(no method with a matching random-search baseline)\n";
    std::cout << "wrote welch.csv, series.csv and SVG plots in " << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibration toolkit for stochastic agent-based simulations"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions g;
    std::uint64_t seed_value = 0;
    app.add_option("--config", g.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed_value, "master seed");
    app.add_option("--trials", g.trials, "independent trials per method")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "output directory");
    app.add_option("--rule", g.rule, "dynamic generation rule")
        ->check(CLI::IsMember({"by-time", "by-regime", "mode-selection", "random"}));

    auto* gen = app.add_subcommand("generate-validation", "synthesize validation data from the synthetic truth");
    int replications = 0;
    gen->add_option("--replications", replications, "replications averaged (default from config)")
        ->check(CLI::PositiveNumber);

    auto* cal = app.add_subcommand("calibrate", "run the calibration framework once");
    std::string validation_path, resume;
    cal->add_option("--validation", validation_path, "validation CSV (stat,t1..tT)")->check(CLI::ExistingFile);
    cal->add_option("--resume", resume, "continue from a snapshot.json")->check(CLI::ExistingFile);

    auto* pre = app.add_subcommand("run-preset", "run a named experiment preset");
    std::string preset;
    pre->add_option("name", preset, "preset name")->required()->check(CLI::IsMember(preset_names()));

    auto* rep = app.add_subcommand("report", "significance tests and iteration curves for a run directory");
    std::string run_dir;
    rep->add_option("run_dir", run_dir, "directory holding run-preset outputs");

    CLI11_PARSE(app, argc, argv);
    if (seed_opt->count() > 0) g.seed = seed_value;

    try {
        if (*gen) return cmd_generate_validation(g, replications);
        if (*cal) return cmd_calibrate(g, validation_path, resume);
        if (*pre) return cmd_run_preset(g, preset);
        if (*rep) return cmd_report(g, run_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::io ? 3 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
