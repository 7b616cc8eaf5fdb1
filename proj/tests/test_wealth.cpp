#include <doctest.h>

#include <random>

#include "abmcal/wealth_model.hpp"
#include "oracles.hpp"

using namespace abmcal;

namespace {

WealthModelConfig small_config() {
    WealthModelConfig cfg;
    cfg.grid_width = 12;
    cfg.grid_height = 12;
    cfg.num_agents = 30;
    cfg.horizon = 20;
    return cfg;
}

DynamicSchedule constant_income(int horizon, double v) {
    DynamicSchedule s;
    s.values = Matrix::Constant(1, horizon, v);
    s.ranges = {Range{0.0, 2.0}};
    return s;
}

}  // namespace

TEST_CASE("gini examples") {
    CHECK(gini(Vector::Constant(4, 1.0)) == doctest::Approx(0.0));
    CHECK(gini(Vector{{0.0, 0.0, 0.0, 1.0}}) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(gini(Vector{{3.0, 2.0, 1.0}}) == doctest::Approx(4.0 / 18.0).epsilon(1e-12));
    CHECK(gini(Vector::Zero(5)) == 0.0);
    CHECK_THROWS_AS(gini(Vector()), Error);
    CHECK_THROWS_AS(gini(Vector{{1.0, -1.0}}), Error);
}

TEST_CASE("gini matches the pairwise oracle and is scale and permutation invariant") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<int> len(1, 60);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> w(static_cast<std::size_t>(len(rng)));
        for (double& x : w) x = u(rng);
        const Vector v = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
        const double g = gini(v);
        CHECK(std::abs(g - oracle::gini_pairwise(w)) <= 1e-12);
        CHECK(std::abs(gini(Vector(v * 3.7)) - g) <= 1e-12);
        std::shuffle(w.begin(), w.end(), rng);
        const Vector p = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
        CHECK(std::abs(gini(p) - g) <= 1e-12);
        CHECK(g >= 0.0);
        CHECK(g < 1.0);
    }
}

TEST_CASE("gini works on long double too") {
    Eigen::Matrix<long double, Eigen::Dynamic, 1> w(4);
    w << 0, 0, 0, 1;
    CHECK(static_cast<double>(gini(w)) == doctest::Approx(0.75));
}

TEST_CASE("tercile sizes and summarize") {
    const TercileSizes t100 = tercile_sizes(100);
    CHECK(t100.top == 34);
    CHECK(t100.middle == 32);
    CHECK(t100.bottom == 34);
    const TercileSizes t4 = tercile_sizes(4);
    CHECK(t4.top + t4.middle + t4.bottom == 4);
    CHECK(t4.middle >= 1);

    const Vector flat = summarize(Vector::Constant(9, 5.0));
    CHECK(flat(0) == doctest::Approx(5.0));
    CHECK(flat(1) == doctest::Approx(5.0));
    CHECK(flat(2) == doctest::Approx(5.0));
    CHECK(flat(3) == doctest::Approx(0.0));

    const Vector s3 = summarize(Vector{{3.0, 2.0, 1.0}});
    CHECK(s3(0) == doctest::Approx(3.0));
    CHECK(s3(1) == doctest::Approx(2.0));
    CHECK(s3(2) == doctest::Approx(1.0));
    CHECK(s3(3) == doctest::Approx(0.2222).epsilon(1e-4));

    const Vector s4 = summarize(Vector{{0.0, 0.0, 0.0, 1.0}});
    CHECK(s4(0) == doctest::Approx(0.5));
    CHECK(s4(1) == doctest::Approx(0.0));
    CHECK(s4(2) == doctest::Approx(0.0));
    CHECK(s4(3) == doctest::Approx(0.75));

    CHECK_THROWS_AS(summarize(Vector()), Error);
}

TEST_CASE("synthetic truth gives a valid 4x50 trace") {
    WealthModelConfig cfg;
    const auto res = run_simulation(cfg, synthetic_income_schedule(50), synthetic_consumption(), 3);
    CHECK(res.summary.num_stats() == 4);
    CHECK(res.summary.horizon() == 50);
    CHECK(res.summary.names == summary_stat_names());
    CHECK(res.agents.num_agents() == 100);
    CHECK(res.summary.stats.allFinite());
    // Table values of the truth
    const DynamicSchedule s = synthetic_income_schedule(50);
    CHECK(s.values(0, 0) == 1.5);
    CHECK(s.values(0, 10) == 0.5);
    CHECK(s.values(0, 25) == 1.5);
    CHECK(s.values(0, 49) == 1.5);
}

TEST_CASE("determinism and seed sensitivity") {
    const WealthModelConfig cfg = small_config();
    const auto sched = constant_income(cfg.horizon, 1.0);
    const auto het = synthetic_consumption();
    const auto a = run_simulation(cfg, sched, het, 5);
    const auto b = run_simulation(cfg, sched, het, 5);
    const auto c = run_simulation(cfg, sched, het, 6);
    CHECK(a.summary.stats == b.summary.stats);
    CHECK(a.agents.values == b.agents.values);
    CHECK(a.summary.stats != c.summary.stats);
}

TEST_CASE("no income makes every agent starve and gini reach zero") {
    WealthModelConfig cfg = small_config();
    cfg.horizon = 60;
    HeterogeneousAssignment het = synthetic_consumption();
    het.values = Matrix::Constant(2, 1, 1.0);
    const auto res = run_simulation(cfg, constant_income(cfg.horizon, 0.0), het, 1);
    const Vector last = res.summary.stats.col(cfg.horizon - 1);
    CHECK(last(0) == 0.0);
    CHECK(last(2) == 0.0);
    CHECK(last(3) == 0.0);
}

TEST_CASE("wealth ledger balances and class ordering holds") {
    const WealthModelConfig cfg = small_config();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto res = run_simulation(cfg, synthetic_income_schedule(cfg.horizon), synthetic_consumption(), seed);
        const WealthLedger& l = res.ledger;
        for (int t = 1; t <= cfg.horizon; ++t) {
            CHECK(l.total(t) - l.total(t - 1) ==
                  doctest::Approx(l.harvested(t) - l.consumed(t) + l.floor_loss(t)).epsilon(1e-9));
            CHECK(l.floor_loss(t) >= 0.0);
        }
        const Matrix& st = res.summary.stats;
        for (int t = 0; t < cfg.horizon; ++t) {
            CHECK(st(0, t) >= st(1, t));
            CHECK(st(1, t) >= st(2, t));
        }
    }
}

TEST_CASE("more income never lowers mean wealth over 30 seeds") {
    const WealthModelConfig cfg = small_config();
    const auto het = synthetic_consumption();
    double low = 0.0, high = 0.0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        low += run_simulation(cfg, constant_income(cfg.horizon, 0.5), het, seed).ledger.total.mean();
        high += run_simulation(cfg, constant_income(cfg.horizon, 1.5), het, seed).ledger.total.mean();
    }
    CHECK(high >= low);
}

TEST_CASE("validation is the replication mean") {
    const WealthModelConfig cfg = small_config();
    const auto sched = constant_income(cfg.horizon, 1.0);
    const auto het = synthetic_consumption();
    const auto one = generate_validation(cfg, sched, het, 1, 77);
    const auto single = run_simulation(cfg, sched, het, derive_seed(77, 0));
    CHECK((one.trace.stats - single.summary.stats).cwiseAbs().maxCoeff() == 0.0);
    const auto v1 = generate_validation(cfg, sched, het, 4, 77);
    const auto v2 = generate_validation(cfg, sched, het, 4, 77);
    CHECK(v1.trace.stats == v2.trace.stats);
    Matrix manual = Matrix::Zero(4, cfg.horizon);
    for (int r = 0; r < 4; ++r) manual += run_simulation(cfg, sched, het, derive_seed(77, r)).summary.stats;
    manual /= 4.0;
    CHECK((v1.trace.stats - manual).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("invalid inputs raise structured errors") {
    const WealthModelConfig cfg = small_config();
    auto het = synthetic_consumption();
    auto wrong_t = constant_income(cfg.horizon + 1, 1.0);
    try {
        run_simulation(cfg, wrong_t, het, 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dimension_mismatch);
    }
    auto out_of_range = constant_income(cfg.horizon, 3.0);
    try {
        run_simulation(cfg, out_of_range, het, 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::out_of_range);
    }
    het.values(0, 0) = 1.5;
    CHECK_THROWS_AS(run_simulation(cfg, constant_income(cfg.horizon, 1.0), het, 1), Error);
}

TEST_CASE("initial-wealth halves split the population evenly") {
    WealthModelConfig cfg;
    const auto clusters = resolve_clusters(cfg, synthetic_consumption());
    REQUIRE(clusters.size() == 100);
    CHECK(std::count(clusters.begin(), clusters.end(), 0) == 50);
    CHECK(std::count(clusters.begin(), clusters.end(), 1) == 50);
}
