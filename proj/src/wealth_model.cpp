#include "abmcal/wealth_model.hpp"

#include <random>
#include <sstream>

namespace abmcal {

namespace {

std::string dims(Eigen::Index r, Eigen::Index c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
}

// Moore-ring offsets for radius 1..vision, each ring clockwise from north; self last.
std::vector<std::pair<int, int>> neighbor_offsets(int vision) {
    std::vector<std::pair<int, int>> out;
    for (int r = 1; r <= vision; ++r) {
        for (int dx = 0; dx <= r; ++dx) out.emplace_back(dx, -r);
        for (int dy = -r + 1; dy <= r; ++dy) out.emplace_back(r, dy);
        for (int dx = r - 1; dx >= -r; --dx) out.emplace_back(dx, r);
        for (int dy = r - 1; dy >= -r; --dy) out.emplace_back(-r, dy);
        for (int dx = -r + 1; dx < 0; ++dx) out.emplace_back(dx, -r);
    }
    out.emplace_back(0, 0);
    return out;
}

Vector population_wealth(const WealthModelConfig& config) {
    std::mt19937_64 rng(config.rng_seed);
    std::uniform_real_distribution<double> u(config.initial_wealth.min, config.initial_wealth.max);
    Vector w(config.num_agents);
    for (int a = 0; a < config.num_agents; ++a) w(a) = u(rng);
    return w;
}

// Agent ids in descending wealth order, ties by ascending id.
std::vector<int> rank_descending(const Vector& wealths) {
    std::vector<int> order(static_cast<std::size_t>(wealths.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return wealths(a) > wealths(b); });
    return order;
}

}  // namespace

void WealthModelConfig::validate() const {
    require(grid_width > 0 && grid_height > 0, ErrorKind::invalid_argument,
            "grid dimensions must be positive");
    require(num_agents > 0, ErrorKind::invalid_argument, "num_agents must be positive");
    require(horizon >= 1, ErrorKind::invalid_argument, "horizon must be >= 1");
    require(vision >= 1, ErrorKind::invalid_argument, "vision must be >= 1");
    require(base_metabolism >= 0.0 && base_regrowth >= 0.0, ErrorKind::invalid_argument,
            "base_metabolism and base_regrowth must be nonnegative");
    require(max_cell_wealth > 0.0, ErrorKind::invalid_argument, "max_cell_wealth must be positive");
    require(initial_wealth.min >= 0.0 && initial_wealth.min <= initial_wealth.max,
            ErrorKind::invalid_argument, "initial_wealth_range must satisfy 0 <= low <= high");
}

void DynamicSchedule::validate() const {
    require(static_cast<Eigen::Index>(ranges.size()) == values.rows(),
            ErrorKind::dimension_mismatch, "dynamic schedule: one range per parameter row required");
    for (Eigen::Index n = 0; n < values.rows(); ++n) {
        const Range& r = ranges[static_cast<std::size_t>(n)];
        for (Eigen::Index t = 0; t < values.cols(); ++t) {
            if (!r.contains(values(n, t))) {
                std::ostringstream os;
                os << "dynamic schedule value " << values(n, t) << " at (param " << n << ", t "
                   << t + 1 << ") outside [" << r.min << ", " << r.max << "]";
                fail(ErrorKind::out_of_range, os.str());
            }
        }
    }
}

void HeterogeneousAssignment::validate(int num_agents) const {
    require(static_cast<Eigen::Index>(ranges.size()) == values.cols(),
            ErrorKind::dimension_mismatch, "heterogeneous values: one range per parameter column");
    require(values.rows() >= 1, ErrorKind::dimension_mismatch, "heterogeneous values: no clusters");
    if (rule == ClusterRule::explicit_labels) {
        require(static_cast<int>(cluster_of_agent.size()) == num_agents,
                ErrorKind::dimension_mismatch,
                "cluster_of_agent has " + std::to_string(cluster_of_agent.size()) +
                    " labels for " + std::to_string(num_agents) + " agents");
        for (int k : cluster_of_agent) {
            require(k >= 0 && k < values.rows(), ErrorKind::out_of_range,
                    "cluster label " + std::to_string(k) + " has no parameter row");
        }
    } else {
        require(values.rows() == 2, ErrorKind::dimension_mismatch,
                "initial-wealth split needs exactly 2 clusters");
    }
    for (Eigen::Index k = 0; k < values.rows(); ++k) {
        for (Eigen::Index n = 0; n < values.cols(); ++n) {
            const Range& r = ranges[static_cast<std::size_t>(n)];
            if (!r.contains(values(k, n))) {
                std::ostringstream os;
                os << "heterogeneous value " << values(k, n) << " at (cluster " << k << ", param "
                   << n << ") outside [" << r.min << ", " << r.max << "]";
                fail(ErrorKind::out_of_range, os.str());
            }
        }
    }
}

TercileSizes tercile_sizes(int num_agents) {
    require(num_agents >= 3, ErrorKind::invalid_argument, "terciles need at least 3 agents");
    const int outer = (num_agents + 2) / 3;
    if (num_agents - 2 * outer >= 1) return {outer, num_agents - 2 * outer, outer};
    // A = 4 is the only size where the ceil rule empties the middle class.
    const int bottom = num_agents / 3;
    return {outer, num_agents - outer - bottom, bottom};
}

Vector summarize(const Vector& wealths) {
    require(wealths.size() > 0, ErrorKind::invalid_argument, "summarize: empty wealth vector");
    const TercileSizes sz = tercile_sizes(static_cast<int>(wealths.size()));
    const std::vector<int> order = rank_descending(wealths);
    auto mean_of = [&](int begin, int count) {
        double s = 0.0;
        for (int j = begin; j < begin + count; ++j) s += wealths(order[static_cast<std::size_t>(j)]);
        return s / count;
    };
    Vector out(kNumSummaryStats);
    out << mean_of(0, sz.top), mean_of(sz.top, sz.middle), mean_of(sz.top + sz.middle, sz.bottom),
        gini(wealths);
    return out;
}

std::vector<int> resolve_clusters(const WealthModelConfig& config,
                                  const HeterogeneousAssignment& het) {
    if (het.rule == ClusterRule::explicit_labels) return het.cluster_of_agent;
    const Vector w0 = population_wealth(config);
    const std::vector<int> order = rank_descending(w0);
    const int top = (config.num_agents + 1) / 2;
    std::vector<int> labels(static_cast<std::size_t>(config.num_agents), 1);
    for (int j = 0; j < top; ++j) labels[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = 0;
    return labels;
}

SimulationResult run_simulation(const WealthModelConfig& config,
                                const DynamicSchedule& schedule,
                                const HeterogeneousAssignment& het,
                                std::uint64_t seed) {
    config.validate();
    require(schedule.num_params() == 1, ErrorKind::dimension_mismatch,
            "wealth model takes exactly 1 dynamic parameter (income), got " +
                std::to_string(schedule.num_params()));
    require(schedule.horizon() == config.horizon, ErrorKind::dimension_mismatch,
            "schedule is " + dims(schedule.values.rows(), schedule.values.cols()) +
                ", horizon is " + std::to_string(config.horizon));
    require(het.num_params() == 1, ErrorKind::dimension_mismatch,
            "wealth model takes exactly 1 heterogeneous parameter (consumption)");
    schedule.validate();
    het.validate(config.num_agents);

    const int A = config.num_agents;
    const int T = config.horizon;
    const int W = config.grid_width;
    const int H = config.grid_height;
    const int cells = W * H;

    SimulationResult result;
    result.clusters = resolve_clusters(config, het);

    Vector wealth = population_wealth(config);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick_cell(0, cells - 1);
    std::uniform_real_distribution<double> cell_init(0.0, config.max_cell_wealth);

    std::vector<double> cell(static_cast<std::size_t>(cells));
    for (double& c : cell) c = cell_init(rng);
    std::vector<int> pos(static_cast<std::size_t>(A));
    for (int& p : pos) p = pick_cell(rng);

    Vector consumption(A);
    for (int a = 0; a < A; ++a) {
        consumption(a) = het.values(result.clusters[static_cast<std::size_t>(a)], 0) *
                         config.base_metabolism;
    }

    const auto offsets = neighbor_offsets(config.vision);
    std::vector<int> occupancy(static_cast<std::size_t>(cells));

    result.summary.names = summary_stat_names();
    result.summary.stats.resize(kNumSummaryStats, T);
    result.agents.attributes = 1;
    result.agents.values.resize(A, T);
    WealthLedger& ledger = result.ledger;
    ledger.total = Vector::Zero(T + 1);
    ledger.harvested = Vector::Zero(T + 1);
    ledger.consumed = Vector::Zero(T + 1);
    ledger.floor_loss = Vector::Zero(T + 1);
    ledger.total(0) = wealth.sum();

    for (int t = 0; t < T; ++t) {
        // 1. harvest
        std::fill(occupancy.begin(), occupancy.end(), 0);
        for (int p : pos) ++occupancy[static_cast<std::size_t>(p)];
        double harvested = 0.0;
        for (int a = 0; a < A; ++a) {
            const auto p = static_cast<std::size_t>(pos[static_cast<std::size_t>(a)]);
            const double share = cell[p] / occupancy[p];
            wealth(a) += share;
            harvested += share;
        }
        for (int p : pos) cell[static_cast<std::size_t>(p)] = 0.0;

        // 2. consume
        double floor_loss = 0.0;
        for (int a = 0; a < A; ++a) {
            wealth(a) -= consumption(a);
            if (wealth(a) < 0.0) {
                floor_loss -= wealth(a);
                wealth(a) = 0.0;
            }
        }

        // 3. move
        for (int a = 0; a < A; ++a) {
            const int p = pos[static_cast<std::size_t>(a)];
            const int x = p % W;
            const int y = p / W;
            int best = -1;
            double best_wealth = -1.0;
            for (const auto& [dx, dy] : offsets) {
                const int nx = ((x + dx) % W + W) % W;
                const int ny = ((y + dy) % H + H) % H;
                const int q = ny * W + nx;
                if (cell[static_cast<std::size_t>(q)] > best_wealth) {
                    best_wealth = cell[static_cast<std::size_t>(q)];
                    best = q;
                }
            }
            pos[static_cast<std::size_t>(a)] = best;
        }

        // 4. regrow
        const double growth = schedule.values(0, t) * config.base_regrowth;
        for (double& c : cell) c = std::min(config.max_cell_wealth, c + growth);

        ledger.harvested(t + 1) = harvested;
        ledger.consumed(t + 1) = consumption.sum();
        ledger.floor_loss(t + 1) = floor_loss;
        ledger.total(t + 1) = wealth.sum();
        result.summary.stats.col(t) = summarize(wealth);
        result.agents.values.col(t) = wealth;
    }
    return result;
}

ReplicationMean run_replications(const WealthModelConfig& config,
                                 const DynamicSchedule& schedule,
                                 const HeterogeneousAssignment& het,
                                 int replications,
                                 std::uint64_t master_seed) {
    require(replications >= 1, ErrorKind::invalid_argument, "replications must be >= 1");
    ReplicationMean out;
    for (int r = 0; r < replications; ++r) {
        SimulationResult run = run_simulation(config, schedule, het,
                                              derive_seed(master_seed, static_cast<std::uint64_t>(r)));
        if (r == 0) {
            out.summary_mean = run.summary.stats;
            out.agent_mean = run.agents.values;
        } else {
            out.summary_mean += run.summary.stats;
            out.agent_mean += run.agents.values;
        }
    }
    out.summary_mean /= replications;
    out.agent_mean /= replications;
    return out;
}

ValidationData generate_validation(const WealthModelConfig& config,
                                   const DynamicSchedule& schedule,
                                   const HeterogeneousAssignment& het,
                                   int replications,
                                   std::uint64_t master_seed) {
    ValidationData v;
    v.trace.names = summary_stat_names();
    v.trace.stats = run_replications(config, schedule, het, replications, master_seed).summary_mean;
    v.replications = replications;
    v.master_seed = master_seed;
    return v;
}

DynamicSchedule synthetic_income_schedule(int horizon) {
    DynamicSchedule s;
    s.values.resize(1, horizon);
    for (int t = 0; t < horizon; ++t) s.values(0, t) = ((t / 10) % 2 == 0) ? 1.5 : 0.5;
    s.ranges = {Range{0.0, 2.0}};
    return s;
}

HeterogeneousAssignment synthetic_consumption() {
    HeterogeneousAssignment h;
    h.rule = ClusterRule::initial_wealth_halves;
    h.values.resize(2, 1);
    h.values << 0.9, 0.1;
    h.ranges = {Range{0.0, 1.0}};
    return h;
}

}  // namespace abmcal
