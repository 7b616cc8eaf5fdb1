#include "abmcal/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "abmcal/csv.hpp"

namespace abmcal {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
    require(j.is_object(), ErrorKind::invalid_argument, where + " must be an object");
    for (const auto& item : j.items()) {
        const bool known = std::find(allowed.begin(), allowed.end(), item.key()) != allowed.end();
        require(known, ErrorKind::invalid_argument, where + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
void read_key(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::invalid_argument, where + "." + key + ": wrong type");
    }
}

Range read_range(const json& j, const std::string& where) {
    require(j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(), ErrorKind::invalid_argument,
            where + " must be [low, high]");
    Range r{j[0].get<double>(), j[1].get<double>()};
    require(r.min < r.max, ErrorKind::invalid_argument, where + ": low must be below high");
    return r;
}

std::string_view normalization_name(VaeNormalization n) {
    return n == VaeNormalization::minmax_per_attribute ? "minmax" : "standardize";
}

FrameworkConfig with_phases(FrameworkConfig f, int c_cal, int c_dyn, int c_het) {
    f.c_cal = c_cal;
    f.c_dyn = c_dyn;
    f.c_het = c_het;
    return f;
}

double column_mean(const std::vector<double>& xs) { return sample_mean(xs); }

double column_sd(const std::vector<double>& xs) { return xs.size() > 1 ? std::sqrt(sample_variance(xs)) : 0.0; }

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.framework.dynamic_fixed = synthetic_income_schedule(c.model.horizon);
    c.framework.het_template = synthetic_consumption();
    return c;
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::io, source + ": " + e.what());
    }
    ExperimentConfig c = default_experiment_config();
    check_keys(j, source, {"model", "validation", "framework", "search", "vae", "parameters"});

    if (j.contains("model")) {
        const json& m = j["model"];
        const std::string w = source + ".model";
        check_keys(m, w, {"grid_width", "grid_height", "num_agents", "horizon", "vision", "base_metabolism",
                          "base_regrowth", "max_cell_wealth", "initial_wealth", "population_seed"});
        read_key(m, "grid_width", c.model.grid_width, w);
        read_key(m, "grid_height", c.model.grid_height, w);
        read_key(m, "num_agents", c.model.num_agents, w);
        read_key(m, "horizon", c.model.horizon, w);
        read_key(m, "vision", c.model.vision, w);
        read_key(m, "base_metabolism", c.model.base_metabolism, w);
        read_key(m, "base_regrowth", c.model.base_regrowth, w);
        read_key(m, "max_cell_wealth", c.model.max_cell_wealth, w);
        read_key(m, "population_seed", c.model.rng_seed, w);
        if (m.contains("initial_wealth")) {
            const json& r = m["initial_wealth"];
            require(r.is_array() && r.size() == 2, ErrorKind::invalid_argument, w + ".initial_wealth must be [low, high]");
            c.model.initial_wealth = Range{r[0].get<double>(), r[1].get<double>()};
        }
        c.model.validate();
    }
    if (j.contains("validation")) {
        const json& v = j["validation"];
        const std::string w = source + ".validation";
        check_keys(v, w, {"replications", "seed"});
        read_key(v, "replications", c.validation_replications, w);
        read_key(v, "seed", c.validation_seed, w);
        require(c.validation_replications >= 1, ErrorKind::invalid_argument, w + ".replications must be >= 1");
    }
    FrameworkConfig& f = c.framework;
    if (j.contains("framework")) {
        const json& fr = j["framework"];
        const std::string w = source + ".framework";
        check_keys(fr, w, {"c_cal", "c_dyn", "c_het", "replications", "candidates", "num_regimes", "rule",
                           "clustering", "het_clusters", "dpmm_gamma", "dpmm_iterations"});
        read_key(fr, "c_cal", f.c_cal, w);
        read_key(fr, "c_dyn", f.c_dyn, w);
        read_key(fr, "c_het", f.c_het, w);
        read_key(fr, "replications", f.replications, w);
        read_key(fr, "candidates", f.candidates, w);
        read_key(fr, "num_regimes", f.num_regimes, w);
        read_key(fr, "het_clusters", f.het_clusters, w);
        read_key(fr, "dpmm_gamma", f.dpmm_gamma, w);
        read_key(fr, "dpmm_iterations", f.dpmm_iterations, w);
        std::string name;
        read_key(fr, "rule", name, w);
        if (!name.empty()) f.rule = parse_generation_rule(name);
        name.clear();
        read_key(fr, "clustering", name, w);
        if (!name.empty()) f.clustering = parse_clustering_mode(name);
    }
    if (j.contains("search")) {
        const json& s = j["search"];
        const std::string w = source + ".search";
        check_keys(s, w, {"c0", "xi_rand", "xi_pv", "xi_pm", "cooling_base"});
        read_key(s, "c0", f.search.c0, w);
        read_key(s, "xi_rand", f.search.xi_rand, w);
        read_key(s, "xi_pv", f.search.xi_pv, w);
        read_key(s, "xi_pm", f.search.xi_pm, w);
        read_key(s, "cooling_base", f.search.cooling_base, w);
    }
    if (j.contains("vae")) {
        const json& v = j["vae"];
        const std::string w = source + ".vae";
        check_keys(v, w, {"latent", "hidden", "epochs", "batch_size", "learning_rate", "plateau_epochs",
                          "normalization"});
        read_key(v, "latent", f.vae.latent, w);
        read_key(v, "hidden", f.vae.hidden, w);
        read_key(v, "epochs", f.vae.epochs, w);
        read_key(v, "batch_size", f.vae.batch_size, w);
        read_key(v, "learning_rate", f.vae.learning_rate, w);
        read_key(v, "plateau_epochs", f.vae.plateau_epochs, w);
        std::string norm;
        read_key(v, "normalization", norm, w);
        if (norm == "standardize") {
            f.vae.normalization = VaeNormalization::standardize_features;
        } else if (!norm.empty()) {
            require(norm == "minmax", ErrorKind::invalid_argument, w + ".normalization must be minmax or standardize");
        }
    }
    f.dynamic_fixed = synthetic_income_schedule(c.model.horizon);
    if (j.contains("parameters")) {
        const json& p = j["parameters"];
        const std::string w = source + ".parameters";
        check_keys(p, w, {"dynamic", "heterogeneous"});
        if (p.contains("dynamic")) {
            check_keys(p["dynamic"], w + ".dynamic", {"name", "range"});
            read_key(p["dynamic"], "name", f.dynamic_name, w + ".dynamic");
            if (p["dynamic"].contains("range")) f.dynamic_fixed.ranges = {read_range(p["dynamic"]["range"], w + ".dynamic.range")};
        }
        if (p.contains("heterogeneous")) {
            check_keys(p["heterogeneous"], w + ".heterogeneous", {"name", "range"});
            read_key(p["heterogeneous"], "name", f.het_name, w + ".heterogeneous");
            if (p["heterogeneous"].contains("range")) {
                f.het_template.ranges = {read_range(p["heterogeneous"]["range"], w + ".heterogeneous.range")};
            }
        }
    }
    f.validate();
    f.het_template.validate(c.model.num_agents);
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_experiment_config(text.str(), path.string());
}

std::string experiment_config_json(const ExperimentConfig& c) {
    const FrameworkConfig& f = c.framework;
    json j;
    j["model"] = {{"grid_width", c.model.grid_width},
                  {"grid_height", c.model.grid_height},
                  {"num_agents", c.model.num_agents},
                  {"horizon", c.model.horizon},
                  {"vision", c.model.vision},
                  {"base_metabolism", c.model.base_metabolism},
                  {"base_regrowth", c.model.base_regrowth},
                  {"max_cell_wealth", c.model.max_cell_wealth},
                  {"initial_wealth", {c.model.initial_wealth.min, c.model.initial_wealth.max}},
                  {"population_seed", c.model.rng_seed}};
    j["validation"] = {{"replications", c.validation_replications}, {"seed", c.validation_seed}};
    j["framework"] = {{"c_cal", f.c_cal},
                      {"c_dyn", f.c_dyn},
                      {"c_het", f.c_het},
                      {"replications", f.replications},
                      {"candidates", f.candidates},
                      {"num_regimes", f.num_regimes},
                      {"rule", to_string(f.rule)},
                      {"clustering", to_string(f.clustering)},
                      {"het_clusters", f.het_clusters},
                      {"dpmm_gamma", f.dpmm_gamma},
                      {"dpmm_iterations", f.dpmm_iterations}};
    j["search"] = {{"c0", f.search.c0},
                   {"xi_rand", f.search.xi_rand},
                   {"xi_pv", f.search.xi_pv},
                   {"xi_pm", f.search.xi_pm},
                   {"cooling_base", f.search.cooling_base}};
    j["vae"] = {{"latent", f.vae.latent},
                {"hidden", f.vae.hidden},
                {"epochs", f.vae.epochs},
                {"batch_size", f.vae.batch_size},
                {"learning_rate", f.vae.learning_rate},
                {"plateau_epochs", f.vae.plateau_epochs},
                {"normalization", normalization_name(f.vae.normalization)}};
    const Range dr = f.dynamic_fixed.ranges.front();
    const Range hr = f.het_template.ranges.front();
    j["parameters"] = {{"dynamic", {{"name", f.dynamic_name}, {"range", {dr.min, dr.max}}}},
                       {"heterogeneous", {{"name", f.het_name}, {"range", {hr.min, hr.max}}}}};
    return j.dump(2) + "\n";
}

Reference synthetic_reference(const ExperimentConfig& config) {
    Reference r;
    r.dynamic = config.framework.dynamic_fixed;
    r.het = config.framework.het_template.values;
    return r;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{
        "synthetic-baseline", "random-search",    "dynamic-by-time", "dynamic-by-regime",
        "dynamic-mode-selection", "heterogeneous-bo", "framework-a",   "framework-b"};
    return names;
}

std::vector<MethodSpec> preset_methods(const std::string& name, const ExperimentConfig& base,
                                       std::optional<GenerationRule> rule) {
    const FrameworkConfig& f = base.framework;
    SearchStrategy random_search = f.search;
    random_search.xi_rand = 1.0;
    random_search.xi_pv = 0.0;
    random_search.xi_pm = 0.0;

    auto dynamic_only = [&](GenerationRule r) {
        FrameworkConfig out = with_phases(f, 100, 1, 0);
        out.rule = r;
        return out;
    };
    if (name == "synthetic-baseline") return {{"synthetic", true, f}};
    if (name == "random-search") {
        FrameworkConfig het = with_phases(f, 100, 0, 1);
        het.search = random_search;
        FrameworkConfig both = with_phases(f, 200, 20, 30);
        both.rule = GenerationRule::random;
        both.search = random_search;
        return {{"rs-dynamic", false, dynamic_only(GenerationRule::random)},
                {"rs-heterogeneous", false, het},
                {"rs-framework", false, both}};
    }
    if (name.rfind("dynamic-", 0) == 0) {
        const GenerationRule r = parse_generation_rule(name.substr(8));
        require(r != GenerationRule::random, ErrorKind::invalid_argument,
                "the random rule is the random-search preset");
        require(!rule || *rule == r, ErrorKind::invalid_argument,
                "--rule conflicts with the rule named by preset " + name);
        return {{name, false, dynamic_only(r)}};
    }
    if (name == "heterogeneous-bo") return {{name, false, with_phases(f, 100, 0, 1)}};
    if (name == "framework-a" || name == "framework-b") {
        FrameworkConfig out = name == "framework-a" ? with_phases(f, 200, 2, 3) : with_phases(f, 200, 20, 30);
        if (rule) out.rule = *rule;
        return {{name, false, out}};
    }
    fail(ErrorKind::invalid_argument, "unknown preset '" + name + "'");
}

std::string baseline_method(const std::string& method) {
    if (method.rfind("dynamic-", 0) == 0) return "rs-dynamic";
    if (method == "heterogeneous-bo") return "rs-heterogeneous";
    if (method.rfind("framework-", 0) == 0) return "rs-framework";
    return "";
}

PresetRun run_preset(const std::string& name, const ExperimentConfig& base, int trials, std::uint64_t seed,
                     const std::filesystem::path& out, std::optional<GenerationRule> rule, std::ostream* progress) {
    require(trials >= 1, ErrorKind::invalid_argument, "--trials must be >= 1");
    const std::vector<MethodSpec> methods = preset_methods(name, base, rule);
    const FrameworkModel model = wealth_framework_model(base.model);
    const Reference reference = synthetic_reference(base);
    const Matrix validation = generate_validation(base.model, base.framework.dynamic_fixed,
                                                  base.framework.het_template, base.validation_replications,
                                                  base.validation_seed)
                                  .trace.stats;
    PresetRun run;
    for (const MethodSpec& spec : methods) {
        for (int k = 0; k < trials; ++k) {
            const auto start = std::chrono::steady_clock::now();
            TrialRow row;
            row.method = spec.method;
            row.trial = k;
            row.seed = derive_seed(seed, static_cast<std::uint64_t>(k));
            const std::filesystem::path dir =
                out.empty() ? std::filesystem::path() : out / spec.method / ("trial_" + std::to_string(k));
            if (spec.evaluation_only) {
                row.report = evaluate_combination(model, spec.framework.dynamic_fixed, spec.framework.het_template,
                                                  validation, spec.framework.replications, row.seed, reference);
                if (!dir.empty()) write_file_atomic(dir / "report.csv", report_csv(row.report, model.stat_names));
            } else {
                FrameworkConfig cfg = spec.framework;
                cfg.seed = row.seed;
                const FrameworkResult result = run_framework(cfg, model, validation, reference);
                row.report = result.report;
                if (!dir.empty()) write_framework_outputs(result, cfg, model.stat_names, dir);
            }
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            if (progress) {
                *progress << spec.method << " trial " << k << ": mape " << fixed(row.report.mape_total, 4)
                          << " mae " << fixed(row.report.dynamic_mae, 3) << " eucl "
                          << fixed(row.report.het_euclidean, 3) << " (" << fixed(row.seconds, 1) << " s)\n";
            }
            run.rows.push_back(std::move(row));
        }
    }
    if (!out.empty()) {
        write_file_atomic(out / "per_trial.csv", per_trial_csv(run.rows, model.stat_names));
        write_file_atomic(out / "aggregate.csv", aggregate_csv(run.rows, model.stat_names));
    }
    return run;
}

std::string per_trial_csv(const std::vector<TrialRow>& rows, const std::vector<std::string>& stat_names) {
    std::ostringstream os;
    os << "method,trial,seed";
    for (const std::string& s : stat_names) os << ",mape_" << s;
    os << ",mape_total,dynamic_mae,het_euclidean\n";
    for (const TrialRow& r : rows) {
        os << r.method << ',' << r.trial << ',' << r.seed;
        for (Eigen::Index s = 0; s < r.report.mape_per_stat.size(); ++s) {
            os << ',' << format_number(r.report.mape_per_stat(s));
        }
        os << ',' << format_number(r.report.mape_total) << ',' << format_number(r.report.dynamic_mae) << ','
           << format_number(r.report.het_euclidean) << '\n';
    }
    return os.str();
}

std::string aggregate_csv(const std::vector<TrialRow>& rows, const std::vector<std::string>& stat_names) {
    std::vector<std::string> methods;
    for (const TrialRow& r : rows) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    }
    std::ostringstream os;
    os << "method,metric,mean,sd,n\n";
    for (const std::string& m : methods) {
        std::vector<std::pair<std::string, std::vector<double>>> cols;
        for (const std::string& s : stat_names) cols.push_back({"mape_" + s, {}});
        cols.push_back({"mape_total", {}});
        cols.push_back({"dynamic_mae", {}});
        cols.push_back({"het_euclidean", {}});
        for (const TrialRow& r : rows) {
            if (r.method != m) continue;
            std::size_t c = 0;
            for (Eigen::Index s = 0; s < r.report.mape_per_stat.size(); ++s) cols[c++].second.push_back(r.report.mape_per_stat(s));
            cols[c++].second.push_back(r.report.mape_total);
            cols[c++].second.push_back(r.report.dynamic_mae);
            cols[c++].second.push_back(r.report.het_euclidean);
        }
        for (const auto& [metric, xs] : cols) {
            os << m << ',' << metric << ',' << format_number(column_mean(xs)) << ',' << format_number(column_sd(xs))
               << ',' << xs.size() << '\n';
        }
    }
    return os.str();
}

RunReport build_report(const std::filesystem::path& run_dir) {
    require(std::filesystem::is_directory(run_dir), ErrorKind::io, run_dir.string() + ": not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(run_dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "per_trial.csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    require(!files.empty(), ErrorKind::io, run_dir.string() + ": no per_trial.csv found (run run-preset first)");

    // method -> metric -> values; method -> trail paths
    std::map<std::string, std::map<std::string, std::vector<double>>> values;
    std::map<std::string, std::vector<std::filesystem::path>> trails;
    std::vector<std::string> order;
    for (const auto& file : files) {
        const CsvTable t = read_csv(file);
        const int mcol = t.column("method");
        const int tcol = t.column("trial");
        require(mcol >= 0 && tcol >= 0, ErrorKind::io, file.string() + ": missing method/trial columns");
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string& method = t.rows[r][static_cast<std::size_t>(mcol)];
            if (std::find(order.begin(), order.end(), method) == order.end()) order.push_back(method);
            for (const char* metric : {"mape_total", "dynamic_mae", "het_euclidean"}) {
                const int c = t.column(metric);
                require(c >= 0, ErrorKind::io, file.string() + ": missing column " + metric);
                values[method][metric].push_back(parse_number(t.rows[r][static_cast<std::size_t>(c)],
                                                              file.string() + ":" + std::to_string(r + 2)));
            }
            const std::filesystem::path trail =
                file.parent_path() / method / ("trial_" + t.rows[r][static_cast<std::size_t>(tcol)]) / "trail.csv";
            if (std::filesystem::exists(trail)) trails[method].push_back(trail);
        }
    }

    RunReport report;
    for (const std::string& method : order) {
        const std::string base = baseline_method(method);
        if (base.empty() || !values.count(base)) continue;
        for (const char* metric : {"mape_total", "dynamic_mae", "het_euclidean"}) {
            const std::vector<double>& a = values[method][metric];
            const std::vector<double>& b = values[base][metric];
            const auto finite = [](const std::vector<double>& xs) {
                return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
            };
            if (a.size() < 2 || b.size() < 2 || !finite(a) || !finite(b)) continue;
            WelchRow row;
            row.method = method;
            row.baseline = base;
            row.metric = metric;
            row.mean = sample_mean(a);
            row.baseline_mean = sample_mean(b);
            if (sample_variance(a) + sample_variance(b) <= 0.0) {
                row.test.p_value = row.mean < row.baseline_mean ? 0.0 : (row.mean > row.baseline_mean ? 1.0 : 0.5);
            } else {
                row.test = welch_t_test(a, b);
            }
            report.welch.push_back(row);
        }
    }

    for (const std::string& method : order) {
        if (!trails.count(method)) continue;
        std::vector<std::map<int, double>> curves;
        for (const auto& path : trails[method]) {
            const CsvTable t = read_csv(path);
            const int it = t.column("iter");
            const int best = t.column("best_so_far");
            require(it >= 0 && best >= 0, ErrorKind::io, path.string() + ": missing iter/best_so_far");
            std::map<int, double> curve;
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                const std::string where = path.string() + ":" + std::to_string(r + 2);
                curve[static_cast<int>(parse_number(t.rows[r][static_cast<std::size_t>(it)], where))] =
                    parse_number(t.rows[r][static_cast<std::size_t>(best)], where);
            }
            curves.push_back(std::move(curve));
        }
        std::vector<SeriesPoint> points;
        for (const auto& [iter, first_value] : curves.front()) {
            std::vector<double> xs;
            for (const auto& c : curves) {
                const auto found = c.find(iter);
                if (found != c.end()) xs.push_back(found->second);
            }
            if (xs.size() != curves.size()) continue;
            points.push_back({iter, sample_mean(xs), column_sd(xs)});
        }
        report.series.emplace_back(method, std::move(points));
    }

    std::ostringstream welch;
    welch << "method,baseline,metric,mean,baseline_mean,t,df,p_one_tailed\n";
    for (const WelchRow& w : report.welch) {
        welch << w.method << ',' << w.baseline << ',' << w.metric << ',' << format_number(w.mean) << ','
              << format_number(w.baseline_mean) << ',' << format_number(w.test.t) << ',' << format_number(w.test.df)
              << ',' << format_number(w.test.p_value) << '\n';
    }
    std::ostringstream series;
    series << "method,iteration,mean_best_mape,sd\n";
    for (const auto& [method, points] : report.series) {
        for (const SeriesPoint& p : points) {
            series << method << ',' << p.iteration << ',' << format_number(p.mean) << ',' << format_number(p.sd) << '\n';
        }
    }
    write_file_atomic(run_dir / "welch.csv", welch.str());
    write_file_atomic(run_dir / "series.csv", series.str());
    if (!report.series.empty()) {
        write_file_atomic(run_dir / "series.svg", series_svg(report.series, "best-so-far total MAPE"));
        for (const auto& s : report.series) {
            write_file_atomic(run_dir / ("series_" + s.first + ".svg"), series_svg({s}, s.first));
        }
    }
    return report;
}

std::string series_svg(const std::vector<std::pair<std::string, std::vector<SeriesPoint>>>& series,
                       const std::string& title) {
    const double width = 720, height = 420, left = 70, right = 180, top = 40, bottom = 50;
    double xmax = 1, ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
    for (const auto& s : series) {
        for (const SeriesPoint& p : s.second) {
            xmax = std::max(xmax, static_cast<double>(p.iteration));
            ymin = std::min(ymin, p.mean);
            ymax = std::max(ymax, p.mean);
        }
    }
    if (!std::isfinite(ymin)) {
        ymin = 0;
        ymax = 1;
    }
    if (ymax - ymin < 1e-12) ymax = ymin + 1e-3;
    const double pad = 0.05 * (ymax - ymin);
    ymin = std::max(0.0, ymin - pad);
    ymax += pad;
    const double pw = width - left - right, ph = height - top - bottom;
    auto X = [&](double x) { return left + pw * x / xmax; };
    auto Y = [&](double y) { return top + ph * (1.0 - (y - ymin) / (ymax - ymin)); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = ymin + (ymax - ymin) * i / 4.0;
        const double x = xmax * i / 4.0;
        os << "<text x=\"" << left - 6 << "\" y=\"" << fixed(Y(y) + 4, 1) << "\" text-anchor=\"end\">" << fixed(y, 4)
           << "</text>\n";
        os << "<text x=\"" << fixed(X(x), 1) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
           << fixed(x, 0) << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">iteration</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = colors[k % (sizeof(colors) / sizeof(colors[0]))];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const SeriesPoint& p : series[k].second) {
            os << fixed(X(p.iteration), 1) << ',' << fixed(Y(p.mean), 1) << ' ';
        }
        os << "\"/>\n";
        const double ly = top + 16.0 * static_cast<double>(k);
        os << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30 << "\" y2=\"" << ly
           << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left + pw + 34 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[k].first)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace abmcal
