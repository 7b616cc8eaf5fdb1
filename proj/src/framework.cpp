#include "abmcal/framework.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "abmcal/csv.hpp"

namespace abmcal {

namespace {

using nlohmann::json;

std::string param_label(const std::string& name, std::size_t n, std::size_t count) {
    return count == 1 ? name : name + "_" + std::to_string(n + 1);
}

// NaN and infinities become null in JSON.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

json matrix_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.size(); ++i) data.push_back(number(m.data()[i]));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from(const json& j) {
    Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    const json& data = j.at("data");
    require(static_cast<Eigen::Index>(data.size()) == m.size(), ErrorKind::io, "snapshot: matrix size mismatch");
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = number_or(data[static_cast<std::size_t>(i)], std::numeric_limits<double>::quiet_NaN());
    }
    return m;
}

json vector_json(const Vector& v) { return matrix_json(v); }
Vector vector_from(const json& j) { return matrix_from(j).col(0); }

json ranges_json(const std::vector<Range>& ranges) {
    json out = json::array();
    for (const Range& r : ranges) out.push_back({r.min, r.max});
    return out;
}

std::vector<Range> ranges_from(const json& j) {
    std::vector<Range> out;
    for (const json& r : j) out.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    return out;
}

json schedule_json(const DynamicSchedule& s) {
    return {{"values", matrix_json(s.values)}, {"ranges", ranges_json(s.ranges)}};
}

DynamicSchedule schedule_from(const json& j) {
    DynamicSchedule s;
    s.values = matrix_from(j.at("values"));
    s.ranges = ranges_from(j.at("ranges"));
    return s;
}

std::string_view rule_name(ClusterRule rule) {
    return rule == ClusterRule::explicit_labels ? "explicit" : "initial-wealth-halves";
}

json assignment_json(const HeterogeneousAssignment& h) {
    return {{"labels", h.cluster_of_agent},
            {"rule", rule_name(h.rule)},
            {"values", matrix_json(h.values)},
            {"ranges", ranges_json(h.ranges)}};
}

HeterogeneousAssignment assignment_from(const json& j) {
    HeterogeneousAssignment h;
    h.cluster_of_agent = j.at("labels").get<std::vector<int>>();
    h.rule = j.at("rule").get<std::string>() == "explicit" ? ClusterRule::explicit_labels
                                                           : ClusterRule::initial_wealth_halves;
    h.values = matrix_from(j.at("values"));
    h.ranges = ranges_from(j.at("ranges"));
    return h;
}

SearchBranch branch_from(const std::string& name) {
    for (SearchBranch b : {SearchBranch::initial, SearchBranch::random, SearchBranch::max_variance,
                           SearchBranch::min_mean, SearchBranch::weighted_ei}) {
        if (to_string(b) == name) return b;
    }
    fail(ErrorKind::io, "snapshot: unknown search branch '" + name + "'");
}

void write_snapshot(const std::filesystem::path& path, const CalibrationState& state) {
    if (!path.empty()) write_file_atomic(path, snapshot_json(state));
}

HeterogeneousAssignment cluster_agents(const FrameworkConfig& config, const FrameworkModel& model,
                                       const DynamicSchedule& dynamic_in) {
    if (config.clustering == ClusteringMode::given) return config.het_template;
    require(static_cast<bool>(model.agent_traces), ErrorKind::invalid_argument,
            "clustering needs agent trajectories from the model");
    HeterogeneousAssignment probe = config.het_template;
    const AgentTrace traces = model.agent_traces(dynamic_in, probe, derive_seed(config.seed, 0xC1u));
    const VaeModel vae = train_vae(traces, config.vae, derive_seed(config.seed, 0xC2u));
    const Matrix codes = encode(vae, traces);
    const MixtureModel mix = config.clustering == ClusteringMode::parametric
                                 ? fit_gmm(codes, config.het_clusters, derive_seed(config.seed, 0xC3u))
                                 : fit_dpmm(codes, config.dpmm_gamma, config.dpmm_iterations,
                                            derive_seed(config.seed, 0xC3u));
    return build_assignment(mix, config.het_template.ranges);
}

CalibrationState initial_state(const FrameworkConfig& config, const FrameworkModel& model) {
    CalibrationState state;
    if (config.c_dyn > 0) {
        const DynamicSchedule& shape = config.dynamic_fixed;
        state.candidates = random_candidates(config.candidates, shape.ranges, shape.horizon(),
                                             derive_seed(config.seed, 0xD0u));
        state.dynamic_current = state.candidates.candidates.front();
    } else {
        state.dynamic_current = config.dynamic_fixed;
    }
    state.assignment = cluster_agents(config, model, state.dynamic_current);
    state.clustering_calls = 1;
    const int dims = static_cast<int>(state.assignment.values.size());
    state.het = start_heterogeneous(dims, derive_seed(config.seed, 0x4845u));
    state.het_current = config.c_het > 0
                            ? from_unit_box(state.het.next, state.assignment.num_clusters(), state.assignment.ranges)
                            : state.assignment.values;
    std::ostringstream dyn, het;
    write_dynamic_log_header(dyn);
    write_heterogeneous_log_header(het, dims);
    state.dynamic_log = dyn.str();
    state.heterogeneous_log = het.str();
    return state;
}

void run_dynamic_iteration(int c, const FrameworkConfig& config, const FrameworkModel& model,
                           const Matrix& validation, CalibrationState& state) {
    if (!state.in_dynamic_block) {
        state.in_dynamic_block = true;
        state.dynamic_block_best = std::numeric_limits<double>::infinity();
    }
    HeterogeneousAssignment frozen = state.assignment;
    frozen.values = state.het_current;
    DynamicStepOptions options;
    options.replications = config.replications;
    options.num_regimes = config.num_regimes;
    options.rule = config.rule;
    const DynamicStepResult step =
        dynamic_calibration_step(model.simulate, state.candidates, frozen, validation, options,
                                 derive_seed(derive_seed(config.seed, 0xD1u), static_cast<std::uint64_t>(c)));
    std::ostringstream log;
    append_dynamic_log(log, c, step);
    state.dynamic_log += log.str();
    for (int i = 0; i < step.evaluated.size(); ++i) {
        const MapeResult m = mape(step.likelihoods.sim_mean[static_cast<std::size_t>(i)], validation);
        TrailRecord r;
        r.iteration = c;
        r.phase = Phase::dynamic;
        r.candidate = i;
        r.branch = std::string(to_string(config.rule));
        r.mape_per_stat = m.per_stat;
        r.mape_total = m.total;
        r.neg_log_lik = step.neg_log_likelihood(i);
        r.dynamic_values = step.evaluated.candidates[static_cast<std::size_t>(i)].values;
        r.het_values = state.het_current;
        state.trail.push_back(std::move(r));
        if (m.total < state.dynamic_block_best) {
            state.dynamic_block_best = m.total;
            state.dynamic_current = step.evaluated.candidates[static_cast<std::size_t>(i)];
        }
    }
    state.candidates = step.next;
}

void run_heterogeneous_iteration(int c, const FrameworkConfig& config, const FrameworkModel& model,
                                 const Matrix& validation, CalibrationState& state) {
    state.in_dynamic_block = false;
    const HeterogeneousStepResult step = heterogeneous_calibration_step(
        model.simulate, state.het, state.dynamic_current, state.assignment, validation, config.replications,
        config.search, derive_seed(derive_seed(config.seed, 0x48u), static_cast<std::uint64_t>(c)));
    std::ostringstream log;
    append_heterogeneous_log(log, c, step);
    state.heterogeneous_log += log.str();
    const MapeResult m = mape(step.sim_mean, validation);
    TrailRecord r;
    r.iteration = c;
    r.phase = Phase::heterogeneous;
    r.branch = std::string(to_string(step.branch));
    r.mape_per_stat = m.per_stat;
    r.mape_total = m.total;
    r.dynamic_values = state.dynamic_current.values;
    r.het_values = step.evaluated;
    state.trail.push_back(std::move(r));
    // incumbent of G
    state.het_current = from_unit_box(state.het.log.params[static_cast<std::size_t>(state.het.log.best_index())],
                                      state.assignment.num_clusters(), state.assignment.ranges);
}

}  // namespace

ClusteringMode parse_clustering_mode(std::string_view name) {
    if (name == "given") return ClusteringMode::given;
    if (name == "parametric") return ClusteringMode::parametric;
    if (name == "nonparametric") return ClusteringMode::nonparametric;
    fail(ErrorKind::invalid_argument,
         "unknown clustering mode '" + std::string(name) + "' (given|parametric|nonparametric)");
}

std::string_view to_string(ClusteringMode mode) {
    switch (mode) {
        case ClusteringMode::given: return "given";
        case ClusteringMode::parametric: return "parametric";
        case ClusteringMode::nonparametric: return "nonparametric";
    }
    return "unknown";
}

std::string_view to_string(Phase phase) { return phase == Phase::dynamic ? "dynamic" : "heterogeneous"; }

Phase phase_of(int c, int c_dyn, int c_het) {
    require(c >= 0 && c_dyn >= 0 && c_het >= 0 && c_dyn + c_het >= 1, ErrorKind::invalid_argument,
            "phase_of: need c >= 0 and C_dyn + C_het >= 1");
    return c % (c_dyn + c_het) < c_dyn ? Phase::dynamic : Phase::heterogeneous;
}

void FrameworkConfig::validate() const {
    require(c_cal >= 1, ErrorKind::invalid_argument, "C_cal must be >= 1");
    require(c_dyn >= 0 && c_het >= 0 && c_dyn + c_het >= 1, ErrorKind::invalid_argument,
            "C_dyn and C_het must be >= 0 with C_dyn + C_het >= 1");
    require(replications >= 1 && candidates >= 1 && num_regimes >= 1, ErrorKind::invalid_argument,
            "R, I and K_dyn must be >= 1");
    require(clustering != ClusteringMode::parametric || het_clusters >= 1, ErrorKind::invalid_argument,
            "K_het must be >= 1");
    require(dpmm_gamma > 0 && dpmm_iterations >= 1, ErrorKind::invalid_argument,
            "DPMM needs gamma > 0 and at least one sweep");
    require(!dynamic_fixed.ranges.empty() && dynamic_fixed.horizon() >= 1, ErrorKind::invalid_argument,
            "dynamic parameter declaration is empty");
    require(!het_template.ranges.empty(), ErrorKind::invalid_argument,
            "heterogeneous parameter declaration is empty");
    dynamic_fixed.validate();
    search.validate();
}

FrameworkModel wealth_framework_model(const WealthModelConfig& config) {
    FrameworkModel model;
    model.simulate = wealth_simulator(config);
    model.agent_traces = [config](const DynamicSchedule& s, const HeterogeneousAssignment& h, std::uint64_t seed) {
        return run_simulation(config, s, h, seed).agents;
    };
    model.stat_names = summary_stat_names();
    return model;
}

int select_best(const std::vector<TrailRecord>& trail) {
    require(!trail.empty(), ErrorKind::invalid_argument, "select_best: empty audit trail");
    int best = 0;
    for (int i = 1; i < static_cast<int>(trail.size()); ++i) {
        if (trail[static_cast<std::size_t>(i)].mape_total < trail[static_cast<std::size_t>(best)].mape_total) best = i;
    }
    return best;
}

MetricsReport make_report(const TrailRecord& best, const Reference& reference) {
    MetricsReport out;
    out.mape_per_stat = best.mape_per_stat;
    out.mape_total = best.mape_total;
    if (reference.dynamic && reference.dynamic->values.rows() == best.dynamic_values.rows() &&
        reference.dynamic->values.cols() == best.dynamic_values.cols()) {
        DynamicSchedule est = *reference.dynamic;
        est.values = best.dynamic_values;
        out.dynamic_mae = dynamic_mae(est, *reference.dynamic);
    }
    if (reference.het && reference.het->rows() == best.het_values.rows() &&
        reference.het->cols() == best.het_values.cols()) {
        out.het_euclidean = heterogeneous_euclidean(best.het_values, *reference.het);
    }
    return out;
}

FrameworkResult run_framework(const FrameworkConfig& config, const FrameworkModel& model,
                              const Matrix& validation, const Reference& reference,
                              const FrameworkRunOptions& options) {
    config.validate();
    require(static_cast<bool>(model.simulate), ErrorKind::invalid_argument, "framework model has no simulator");
    FrameworkResult result;
    CalibrationState& state = result.state;
    state = options.resume ? *options.resume : initial_state(config, model);
    state.assignment.validate(static_cast<int>(state.assignment.cluster_of_agent.size()));

    for (int c = state.next_iteration; c < config.c_cal; ++c) {
        try {
            if (phase_of(c, config.c_dyn, config.c_het) == Phase::dynamic) {
                run_dynamic_iteration(c, config, model, validation, state);
            } else {
                run_heterogeneous_iteration(c, config, model, validation, state);
            }
        } catch (...) {
            write_snapshot(options.snapshot, state);
            throw;
        }
        state.next_iteration = c + 1;
        write_snapshot(options.snapshot, state);
    }
    result.best_index = select_best(state.trail);
    result.report = make_report(state.trail[static_cast<std::size_t>(result.best_index)], reference);
    return result;
}

MetricsReport evaluate_combination(const FrameworkModel& model, const DynamicSchedule& dynamic,
                                   const HeterogeneousAssignment& het, const Matrix& validation,
                                   int replications, std::uint64_t seed, const Reference& reference) {
    require(replications >= 1, ErrorKind::invalid_argument, "R must be >= 1");
    const MapeResult m = mape(model.simulate(dynamic, het, replications, seed).summary_mean, validation);
    TrailRecord r;
    r.mape_per_stat = m.per_stat;
    r.mape_total = m.total;
    r.dynamic_values = dynamic.values;
    r.het_values = het.values;
    return make_report(r, reference);
}

std::string report_csv(const MetricsReport& report, const std::vector<std::string>& stat_names) {
    require(static_cast<Eigen::Index>(stat_names.size()) == report.mape_per_stat.size(),
            ErrorKind::dimension_mismatch, "report: one name per statistic");
    std::ostringstream os;
    os << "metric,value\n";
    for (std::size_t s = 0; s < stat_names.size(); ++s) {
        os << "mape_" << stat_names[s] << ',' << format_number(report.mape_per_stat(static_cast<Eigen::Index>(s)))
           << '\n';
    }
    os << "mape_total," << format_number(report.mape_total) << '\n';
    os << "dynamic_mae," << format_number(report.dynamic_mae) << '\n';
    os << "het_euclidean," << format_number(report.het_euclidean) << '\n';
    return os.str();
}

std::string trail_csv(const std::vector<TrailRecord>& trail, const std::vector<std::string>& stat_names) {
    std::ostringstream os;
    os << "iter,phase,candidate,branch";
    for (const std::string& s : stat_names) os << ",mape_" << s;
    os << ",mape_total,neg_log_lik,best_so_far\n";
    double best = std::numeric_limits<double>::infinity();
    for (const TrailRecord& r : trail) {
        require(static_cast<Eigen::Index>(stat_names.size()) == r.mape_per_stat.size(),
                ErrorKind::dimension_mismatch, "trail: one name per statistic");
        best = std::min(best, r.mape_total);
        os << r.iteration << ',' << to_string(r.phase) << ',' << r.candidate << ',' << r.branch;
        for (Eigen::Index s = 0; s < r.mape_per_stat.size(); ++s) os << ',' << format_number(r.mape_per_stat(s));
        os << ',' << format_number(r.mape_total) << ',' << format_number(r.neg_log_lik) << ','
           << format_number(best) << '\n';
    }
    return os.str();
}

std::string best_params_csv(const TrailRecord& best, const FrameworkConfig& config) {
    std::ostringstream os;
    os << "group,param,index,value\n";
    const auto N = static_cast<std::size_t>(best.dynamic_values.rows());
    for (std::size_t n = 0; n < N; ++n) {
        for (Eigen::Index t = 0; t < best.dynamic_values.cols(); ++t) {
            os << "dynamic," << param_label(config.dynamic_name, n, N) << ',' << t + 1 << ','
               << format_number(best.dynamic_values(static_cast<Eigen::Index>(n), t)) << '\n';
        }
    }
    const auto M = static_cast<std::size_t>(best.het_values.cols());
    for (std::size_t n = 0; n < M; ++n) {
        for (Eigen::Index k = 0; k < best.het_values.rows(); ++k) {
            os << "heterogeneous," << param_label(config.het_name, n, M) << ',' << k << ','
               << format_number(best.het_values(k, static_cast<Eigen::Index>(n))) << '\n';
        }
    }
    return os.str();
}

void write_framework_outputs(const FrameworkResult& result, const FrameworkConfig& config,
                             const std::vector<std::string>& stat_names, const std::filesystem::path& dir) {
    const TrailRecord& best = result.state.trail.at(static_cast<std::size_t>(result.best_index));
    write_file_atomic(dir / "report.csv", report_csv(result.report, stat_names));
    write_file_atomic(dir / "trail.csv", trail_csv(result.state.trail, stat_names));
    write_file_atomic(dir / "best_params.csv", best_params_csv(best, config));
    write_file_atomic(dir / "dynamic_log.csv", result.state.dynamic_log);
    write_file_atomic(dir / "heterogeneous_log.csv", result.state.heterogeneous_log);
}

std::string snapshot_json(const CalibrationState& state) {
    json j;
    j["next_iteration"] = state.next_iteration;
    j["assignment"] = assignment_json(state.assignment);
    json cands = json::array();
    for (const DynamicSchedule& s : state.candidates.candidates) cands.push_back(schedule_json(s));
    j["candidates"] = {{"iteration", state.candidates.iteration}, {"schedules", cands}};
    j["dynamic_current"] = schedule_json(state.dynamic_current);
    j["dynamic_block_best"] = number(state.dynamic_block_best);
    j["in_dynamic_block"] = state.in_dynamic_block;
    json points = json::array();
    for (const Vector& p : state.het.log.params) points.push_back(vector_json(p));
    j["het"] = {{"points", points},
                {"errors", state.het.log.errors},
                {"next", vector_json(state.het.next)},
                {"next_branch", to_string(state.het.next_branch)},
                {"iteration", state.het.iteration},
                {"replication_seed", state.het.replication_seed}};
    j["het_current"] = matrix_json(state.het_current);
    json trail = json::array();
    for (const TrailRecord& r : state.trail) {
        trail.push_back({{"iteration", r.iteration},
                         {"phase", to_string(r.phase)},
                         {"candidate", r.candidate},
                         {"branch", r.branch},
                         {"mape_per_stat", vector_json(r.mape_per_stat)},
                         {"mape_total", r.mape_total},
                         {"neg_log_lik", number(r.neg_log_lik)},
                         {"dynamic_values", matrix_json(r.dynamic_values)},
                         {"het_values", matrix_json(r.het_values)}});
    }
    j["trail"] = trail;
    j["dynamic_log"] = state.dynamic_log;
    j["heterogeneous_log"] = state.heterogeneous_log;
    j["clustering_calls"] = state.clustering_calls;
    return j.dump() + "\n";
}

CalibrationState parse_snapshot(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::io, std::string("snapshot: ") + e.what());
    }
    try {
        CalibrationState s;
        s.next_iteration = j.at("next_iteration").get<int>();
        s.assignment = assignment_from(j.at("assignment"));
        s.candidates.iteration = j.at("candidates").at("iteration").get<int>();
        for (const json& c : j.at("candidates").at("schedules")) s.candidates.candidates.push_back(schedule_from(c));
        s.dynamic_current = schedule_from(j.at("dynamic_current"));
        s.dynamic_block_best = number_or(j.at("dynamic_block_best"), std::numeric_limits<double>::infinity());
        s.in_dynamic_block = j.at("in_dynamic_block").get<bool>();
        const json& het = j.at("het");
        for (const json& p : het.at("points")) s.het.log.params.push_back(vector_from(p));
        s.het.log.errors = het.at("errors").get<std::vector<double>>();
        s.het.next = vector_from(het.at("next"));
        s.het.next_branch = branch_from(het.at("next_branch").get<std::string>());
        s.het.iteration = het.at("iteration").get<int>();
        s.het.replication_seed = het.at("replication_seed").get<std::uint64_t>();
        s.het_current = matrix_from(j.at("het_current"));
        for (const json& r : j.at("trail")) {
            TrailRecord t;
            t.iteration = r.at("iteration").get<int>();
            t.phase = r.at("phase").get<std::string>() == "dynamic" ? Phase::dynamic : Phase::heterogeneous;
            t.candidate = r.at("candidate").get<int>();
            t.branch = r.at("branch").get<std::string>();
            t.mape_per_stat = vector_from(r.at("mape_per_stat"));
            t.mape_total = r.at("mape_total").get<double>();
            t.neg_log_lik = number_or(r.at("neg_log_lik"), std::numeric_limits<double>::quiet_NaN());
            t.dynamic_values = matrix_from(r.at("dynamic_values"));
            t.het_values = matrix_from(r.at("het_values"));
            s.trail.push_back(std::move(t));
        }
        s.dynamic_log = j.at("dynamic_log").get<std::string>();
        s.heterogeneous_log = j.at("heterogeneous_log").get<std::string>();
        s.clustering_calls = j.at("clustering_calls").get<int>();
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::io, std::string("snapshot: ") + e.what());
    }
}

}  // namespace abmcal
