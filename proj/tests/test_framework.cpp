#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "abmcal/csv.hpp"
#include "abmcal/experiment.hpp"
#include "abmcal/framework.hpp"

using namespace abmcal;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_experiment() {
    ExperimentConfig c = default_experiment_config();
    c.model.grid_width = c.model.grid_height = 12;
    c.model.num_agents = 30;
    c.model.horizon = 15;
    c.framework.dynamic_fixed = synthetic_income_schedule(15);
    c.framework.replications = 2;
    c.validation_replications = 5;
    return c;
}

Matrix validation_for(const ExperimentConfig& c) {
    return generate_validation(c.model, c.framework.dynamic_fixed, c.framework.het_template,
                               c.validation_replications, c.validation_seed)
        .trace.stats;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

TrailRecord record(double err) {
    TrailRecord r;
    r.mape_total = err;
    r.mape_per_stat = Vector::Constant(1, err);
    return r;
}

}  // namespace

TEST_CASE("phase schedule") {
    const char* expected = "DDHHHDDHHH";
    for (int c = 0; c < 10; ++c)
        CHECK((phase_of(c, 2, 3) == Phase::dynamic) == (expected[c] == 'D'));
    for (int c = 0; c < 20; ++c) {
        CHECK(phase_of(c, 1, 0) == Phase::dynamic);
        CHECK(phase_of(c, 0, 1) == Phase::heterogeneous);
        CHECK(phase_of(c, 20, 30) == phase_of(c + 50, 20, 30));
    }
    CHECK_THROWS_AS(phase_of(0, 0, 0), Error);
}

TEST_CASE("select_best") {
    CHECK(select_best({record(0.4)}) == 0);
    CHECK(select_best({record(0.3), record(0.1), record(0.2)}) == 1);
    CHECK(select_best({record(0.2), record(0.1), record(0.1)}) == 1);
    CHECK_THROWS_AS(select_best({}), Error);
}

TEST_CASE("report metrics need matching shapes") {
    TrailRecord r = record(0.1);
    r.dynamic_values = Matrix::Constant(1, 50, 1.0);
    r.het_values = Matrix(2, 1);
    r.het_values << 1.0, 0.0;
    Reference ref;
    ref.dynamic = synthetic_income_schedule(50);
    Matrix truth(2, 1);
    truth << 0.9, 0.1;
    ref.het = truth;
    const MetricsReport m = make_report(r, ref);
    CHECK(m.dynamic_mae == doctest::Approx(0.5));
    CHECK(m.het_euclidean == doctest::Approx(0.1414).epsilon(1e-4));
    r.het_values = Matrix::Zero(3, 1);
    CHECK(std::isnan(make_report(r, ref).het_euclidean));
    CHECK(std::isnan(make_report(r, Reference{}).dynamic_mae));
}

TEST_CASE("alternating run keeps blocks frozen and clusters once") {
    ExperimentConfig c = small_experiment();
    FrameworkConfig f = c.framework;
    f.c_cal = 10;
    f.c_dyn = 2;
    f.c_het = 3;
    f.clustering = ClusteringMode::parametric;
    f.het_clusters = 2;
    f.vae.epochs = 5;
    FrameworkModel model = wealth_framework_model(c.model);
    int trace_calls = 0;
    const auto inner = model.agent_traces;
    model.agent_traces = [&](const DynamicSchedule& s, const HeterogeneousAssignment& h, std::uint64_t seed) {
        ++trace_calls;
        return inner(s, h, seed);
    };
    const FrameworkResult res = run_framework(f, model, validation_for(c), synthetic_reference(c));
    CHECK(trace_calls == 1);
    CHECK(res.state.clustering_calls == 1);
    CHECK(res.state.assignment.num_clusters() == 2);

    const auto& trail = res.state.trail;
    CHECK(trail.size() == 2 * 2 * 3 + 2 * 3);
    for (std::size_t i = 1; i < trail.size(); ++i) {
        const TrailRecord& a = trail[i - 1];
        const TrailRecord& b = trail[i];
        CHECK(b.phase == phase_of(b.iteration, 2, 3));
        const bool same_block = (b.iteration / 5 == a.iteration / 5) && a.phase == b.phase;
        if (!same_block) continue;
        if (b.phase == Phase::dynamic) CHECK(a.het_values == b.het_values);
        if (b.phase == Phase::heterogeneous) CHECK(a.dynamic_values == b.dynamic_values);
    }
    double min = 1e300;
    for (const TrailRecord& r : trail) min = std::min(min, r.mape_total);
    CHECK(trail[static_cast<std::size_t>(res.best_index)].mape_total == min);
    CHECK(res.report.mape_total == min);
    // dynamic hand-off: heterogeneous block runs the block's lowest-MAPE candidate
    double best_dyn = 1e300;
    Matrix best_vals;
    for (const TrailRecord& r : trail) {
        if (r.iteration >= 2) break;
        if (r.mape_total < best_dyn) {
            best_dyn = r.mape_total;
            best_vals = r.dynamic_values;
        }
    }
    for (const TrailRecord& r : trail)
        if (r.iteration >= 2 && r.iteration < 5) CHECK(r.dynamic_values == best_vals);
}

TEST_CASE("pure modes") {
    ExperimentConfig c = small_experiment();
    const Matrix val = validation_for(c);
    const FrameworkModel model = wealth_framework_model(c.model);
    FrameworkConfig d = c.framework;
    d.c_cal = 3;
    d.c_dyn = 1;
    d.c_het = 0;
    const FrameworkResult rd = run_framework(d, model, val, synthetic_reference(c));
    for (const TrailRecord& r : rd.state.trail) {
        CHECK(r.phase == Phase::dynamic);
        CHECK(r.het_values == c.framework.het_template.values);
    }
    FrameworkConfig h = c.framework;
    h.c_cal = 3;
    h.c_dyn = 0;
    h.c_het = 1;
    const FrameworkResult rh = run_framework(h, model, val, synthetic_reference(c));
    CHECK(rh.state.trail.size() == 3);
    for (const TrailRecord& r : rh.state.trail) {
        CHECK(r.phase == Phase::heterogeneous);
        CHECK(r.dynamic_values == c.framework.dynamic_fixed.values);
    }
}

TEST_CASE("snapshot resume reproduces an uninterrupted run") {
    ExperimentConfig c = small_experiment();
    FrameworkConfig f = c.framework;
    f.c_dyn = 2;
    f.c_het = 3;
    f.c_cal = 16;
    f.search.c0 = 3;
    const Matrix val = validation_for(c);
    const FrameworkModel model = wealth_framework_model(c.model);
    const Reference ref = synthetic_reference(c);
    const FrameworkResult full = run_framework(f, model, val, ref);

    FrameworkConfig first = f;
    first.c_cal = 9;
    const fs::path dir = fs::temp_directory_path() / "abmcal_snapshot_test";
    fs::remove_all(dir);
    FrameworkRunOptions o1;
    o1.snapshot = dir / "snapshot.json";
    run_framework(first, model, val, ref, o1);
    REQUIRE(fs::exists(o1.snapshot));
    const CalibrationState saved = parse_snapshot(slurp(o1.snapshot));
    CHECK(saved.next_iteration == 9);
    CHECK(snapshot_json(saved) == slurp(o1.snapshot));

    FrameworkRunOptions o2;
    o2.resume = saved;
    const FrameworkResult resumed = run_framework(f, model, val, ref, o2);
    CHECK(trail_csv(resumed.state.trail, model.stat_names) == trail_csv(full.state.trail, model.stat_names));
    CHECK(resumed.state.heterogeneous_log == full.state.heterogeneous_log);
    CHECK(resumed.state.dynamic_log == full.state.dynamic_log);
    CHECK(resumed.best_index == full.best_index);
    fs::remove_all(dir);
}

TEST_CASE("output files") {
    ExperimentConfig c = small_experiment();
    FrameworkConfig f = c.framework;
    f.c_cal = 4;
    f.c_dyn = 1;
    f.c_het = 1;
    const FrameworkModel model = wealth_framework_model(c.model);
    const FrameworkResult res = run_framework(f, model, validation_for(c), synthetic_reference(c));
    const fs::path dir = fs::temp_directory_path() / "abmcal_outputs_test";
    fs::remove_all(dir);
    write_framework_outputs(res, f, model.stat_names, dir);
    for (const char* name : {"report.csv", "trail.csv", "best_params.csv", "dynamic_log.csv", "heterogeneous_log.csv"})
        CHECK(fs::exists(dir / name));
    const CsvTable report = read_csv(dir / "report.csv");
    CHECK(report.header == std::vector<std::string>{"metric", "value"});
    CHECK(report.rows.size() == 7);
    const CsvTable trail = read_csv(dir / "trail.csv");
    CHECK(trail.rows.size() == res.state.trail.size());
    CHECK(trail.column("best_so_far") >= 0);
    const CsvTable best = read_csv(dir / "best_params.csv");
    CHECK(best.rows.size() == 15 + 2);
    const CsvTable dyn = read_csv(dir / "dynamic_log.csv");
    CHECK(dyn.header.front() == "iter");
    const CsvTable het = read_csv(dir / "heterogeneous_log.csv");
    CHECK(het.column("gp_loglik") >= 0);
    CHECK(het.rows.size() == 2);
    fs::remove_all(dir);
}

TEST_CASE("config parsing") {
    const ExperimentConfig d = default_experiment_config();
    const ExperimentConfig back = parse_experiment_config(experiment_config_json(d));
    CHECK(experiment_config_json(back) == experiment_config_json(d));

    const ExperimentConfig c = parse_experiment_config(
        R"({"framework": {"c_cal": 7, "rule": "by-time"}, "search": {"c0": 4}, "model": {"horizon": 20}})");
    CHECK(c.framework.c_cal == 7);
    CHECK(c.framework.rule == GenerationRule::by_time);
    CHECK(c.framework.search.c0 == 4);
    CHECK(c.framework.dynamic_fixed.horizon() == 20);

    CHECK_THROWS_AS(parse_experiment_config(R"({"framework": {"c_cal": 7, "typo": 1}})"), Error);
    CHECK_THROWS_AS(parse_experiment_config(R"({"framework": {"rule": "sideways"}})"), Error);
    CHECK_THROWS_AS(parse_experiment_config(R"({"framework": {"c_dyn": 0, "c_het": 0}})"), Error);
    CHECK_THROWS_AS(parse_experiment_config(R"({"search": {"xi_rand": 0.9}})"), Error);
    try {
        parse_experiment_config("{\n  \"model\": {\n    \"horizon\": ,\n  }\n}", "cfg.json");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("cfg.json") != std::string::npos);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), Error);
}

TEST_CASE("presets") {
    const ExperimentConfig c = default_experiment_config();
    CHECK(preset_names().size() == 8);
    for (const std::string& name : preset_names()) CHECK_FALSE(preset_methods(name, c).empty());
    const auto fb = preset_methods("framework-b", c);
    REQUIRE(fb.size() == 1);
    CHECK(fb[0].framework.c_cal == 200);
    CHECK(fb[0].framework.c_dyn == 20);
    CHECK(fb[0].framework.c_het == 30);
    const auto fa = preset_methods("framework-a", c, GenerationRule::by_time);
    CHECK(fa[0].framework.c_dyn == 2);
    CHECK(fa[0].framework.rule == GenerationRule::by_time);
    CHECK(preset_methods("synthetic-baseline", c)[0].evaluation_only);
    CHECK(preset_methods("random-search", c).size() == 3);
    CHECK(baseline_method("dynamic-by-time") == "rs-dynamic");
    CHECK(baseline_method("heterogeneous-bo") == "rs-heterogeneous");
    CHECK(baseline_method("framework-b") == "rs-framework");
    CHECK(baseline_method("rs-dynamic").empty());
    CHECK_THROWS_AS(preset_methods("dynamic-by-time", c, GenerationRule::random), Error);
    CHECK_THROWS_AS(preset_methods("nope", c), Error);
}

TEST_CASE("preset runs are byte-identical and reportable") {
    ExperimentConfig c = small_experiment();
    const fs::path root = fs::temp_directory_path() / "abmcal_preset_test";
    fs::remove_all(root);
    run_preset("synthetic-baseline", c, 3, 7, root / "a");
    run_preset("synthetic-baseline", c, 3, 7, root / "b");
    CHECK(slurp(root / "a" / "per_trial.csv") == slurp(root / "b" / "per_trial.csv"));
    CHECK(slurp(root / "a" / "aggregate.csv") == slurp(root / "b" / "aggregate.csv"));
    const CsvTable per = read_csv(root / "a" / "per_trial.csv");
    CHECK(per.rows.size() == 3);
    const RunReport rep = build_report(root / "a");
    CHECK(rep.welch.empty());
    CHECK(fs::exists(root / "a" / "welch.csv"));
    fs::remove_all(root);
}

TEST_CASE("report on an empty directory fails without writing") {
    const fs::path dir = fs::temp_directory_path() / "abmcal_empty_report";
    fs::remove_all(dir);
    fs::create_directories(dir);
    CHECK_THROWS_AS(build_report(dir), Error);
    CHECK(fs::is_empty(dir));
    fs::remove_all(dir);
    CHECK_THROWS_AS(build_report(dir), Error);
}

TEST_CASE("series plot is well-formed svg") {
    std::vector<std::pair<std::string, std::vector<SeriesPoint>>> s{
        {"a<b", {{0, 0.5, 0.1}, {1, 0.4, 0.1}, {2, 0.3, 0.05}}}};
    const std::string svg = series_svg(s, "t");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("a&lt;b") != std::string::npos);
}
