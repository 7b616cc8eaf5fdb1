#include <doctest.h>

#include <random>

#include "abmcal/simulator.hpp"
#include "abmcal/surrogate.hpp"
#include "oracles.hpp"

using namespace abmcal;

namespace {

KernelHyperparams hyper_1d(double noise_precision) {
    KernelHyperparams h;
    h.signal_variance = 1.0;
    h.lengthscales = Vector::Ones(1);
    h.noise_precision = noise_precision;
    return h;
}

Vector v1(double x) { return Vector::Constant(1, x); }

}  // namespace

TEST_CASE("matern 5/2 values") {
    const Vector ell = Vector::Ones(2);
    const Vector x{{0.0, 0.0}}, y{{1.0, 0.0}}, far{{100.0, 0.0}};
    CHECK(matern52(x, x, 2.5, ell) == doctest::Approx(2.5));
    CHECK(matern52(x, y, 1.0, ell) == doctest::Approx(0.5239941088318203).epsilon(1e-12));
    CHECK(matern52(x, far, 1.0, ell) < 1e-90);
    const Vector ell2{{2.0, 1.0}};
    const Vector z{{2.0, 0.0}};
    CHECK(matern52(x, z, 1.0, ell2) == doctest::Approx(0.5239941088318203).epsilon(1e-12));
}

TEST_CASE("expected improvement closed form") {
    CHECK(expected_improvement(1.0, 1.0, 1.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
    CHECK(expected_improvement(2.0, 0.0, 1.0) == 0.0);
    CHECK(expected_improvement(0.5, 0.0, 1.0) == doctest::Approx(0.5));
    CHECK(weighted_ei(0.3, 0.7, 1.0, 0.0) ==
          doctest::Approx(0.7 * normal_cdf(1.0)).epsilon(1e-12));
    CHECK(weighted_ei(0.3, 0.7, 1.0, 1.0) == doctest::Approx(0.7 * normal_pdf(1.0)).epsilon(1e-12));
}

TEST_CASE("EI is increasing in sigma and weighted EI at 0.5 is half of EI") {
    // |best - mu| <= 0.02 so the slope phi(z) is still resolvable in double at sigma = 0.01
    for (const auto& [mu, best] : {std::pair{0.52, 0.5}, std::pair{0.3, 0.32}, std::pair{1.0, 1.0}, std::pair{-0.1, -0.09}}) {
        for (int k = 0; k < 1000; ++k) {
            const double sigma = 0.01 + (10.0 - 0.01) * k / 999.0;
            const double h = 1e-4 * sigma;
            CHECK(expected_improvement(mu, sigma + h, best) - expected_improvement(mu, sigma - h, best) > 0.0);
        }
    }
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-2.0, 2.0), us(0.0, 10.0);
    for (int k = 0; k < 1000; ++k) {
        const double mu = u(rng), best = u(rng), sigma = us(rng);
        CHECK(expected_improvement(mu, sigma, best) >= 0.0);
        CHECK(std::abs(weighted_ei(mu, sigma, best, 0.5) - 0.5 * expected_improvement(mu, sigma, best)) <= 1e-12);
    }
}

TEST_CASE("cooling weight") {
    SearchStrategy s;
    CHECK(s.cooling_weight(0) == doctest::Approx(0.5));
    CHECK(s.cooling_weight(69) == doctest::Approx(0.2499).epsilon(1e-4));
    CHECK(s.xi_wei() == doctest::Approx(0.5));
    SearchStrategy bad;
    bad.xi_rand = 0.9;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("gp two-point oracle") {
    const Matrix x{{0.0}, {1.0}};
    const Vector y{{1.0, 2.0}};
    const GaussianProcess gp(x, y, hyper_1d(1e12));
    const PosteriorPrediction mid = gp.predict(v1(0.5));
    CHECK(mid.mean == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(mid.sd * mid.sd == doctest::Approx(0.098868693454221).epsilon(1e-6));
    const PosteriorPrediction q = gp.predict(v1(0.25));
    CHECK(q.mean == doctest::Approx(1.210810174025637).epsilon(1e-6));
    CHECK(q.sd * q.sd == doctest::Approx(0.05231727687884147).epsilon(1e-6));
    // far from data: back to the offset mean and the prior variance
    const PosteriorPrediction far = gp.predict(v1(1e3));
    CHECK(far.mean == doctest::Approx(1.5));
    CHECK(far.sd * far.sd == doctest::Approx(1.0));
    CHECK_THROWS_AS(gp.predict(Vector::Zero(2)), Error);
}

TEST_CASE("gp interpolates at high precision and never exceeds prior variance") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        const int n = 8, d = 2;
        Matrix x(n, d);
        Vector y(n);
        for (int i = 0; i < n; ++i) {
            x(i, 0) = u(rng);
            x(i, 1) = u(rng);
            y(i) = std::sin(5 * x(i, 0)) + x(i, 1);
        }
        KernelHyperparams h;
        h.signal_variance = 0.7;
        h.lengthscales = Vector::Constant(d, 0.4);
        h.noise_precision = 1e12;
        const GaussianProcess gp(x, y, h);
        for (int i = 0; i < n; ++i) CHECK(std::abs(gp.predict(x.row(i).transpose()).mean - y(i)) <= 1e-6);
        for (int q = 0; q < 50; ++q) {
            const Vector p{{u(rng), u(rng)}};
            const PosteriorPrediction pr = gp.predict(p);
            CHECK(pr.sd >= 0.0);
            CHECK(pr.sd * pr.sd <= h.signal_variance + 1e-9);
        }
    }
}

TEST_CASE("duplicate points drive the noise variance down") {
    EvaluationLog log;
    log.add(Vector{{0.3, 0.6}}, 0.2);
    log.add(Vector{{0.3, 0.6}}, 0.2);
    const GpFit fit = fit_gp(log);
    CHECK(fit.hyper.noise_variance() < 1e-4);
}

TEST_CASE("gp fit beats every start and reads white noise as noise") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.5, 0.1);
    EvaluationLog log;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) log.add(Vector{{i / 5.0, j / 5.0}}, g(rng));
    const GpFit fit = fit_gp(log);
    REQUIRE(fit.start_log_marginals.size() == 8);
    for (double s : fit.start_log_marginals) CHECK(fit.log_marginal >= s - 1e-9);

    const Vector e = Eigen::Map<const Vector>(log.errors.data(), log.size());
    const double var = (e.array() - e.mean()).square().sum() / (log.size() - 1);
    const bool long_scale = fit.hyper.lengthscales.minCoeff() >= 10.0 - 1e-9;
    const bool noisy = fit.hyper.noise_variance() >= 0.5 * var;
    CHECK((long_scale || noisy));
}

TEST_CASE("early proposals are uniform in the box") {
    SearchStrategy s;
    EvaluationLog log;
    GaussianProcess gp;
    std::vector<double> d0, d1;
    for (int k = 0; k < 10000; ++k) {
        const Proposal p = propose_next(log, gp, s, k % s.c0, 2, static_cast<std::uint64_t>(k));
        CHECK(p.branch == SearchBranch::initial);
        d0.push_back(p.point(0));
        d1.push_back(p.point(1));
    }
    CHECK(oracle::ks_uniform(d0) < 0.02);
    CHECK(oracle::ks_uniform(d1) < 0.02);
}

TEST_CASE("every branch stays in the box") {
    EvaluationLog log;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 12; ++i) {
        const Vector p{{u(rng), u(rng)}};
        log.add(p, (p.array() - 0.4).square().sum());
    }
    const GpFit fit = fit_gp(log);
    const GaussianProcess gp(stack_rows(log.params),
                             Eigen::Map<const Vector>(log.errors.data(), log.size()), fit.hyper);
    for (SearchBranch b : {SearchBranch::random, SearchBranch::max_variance, SearchBranch::min_mean,
                           SearchBranch::weighted_ei}) {
        const Proposal p = propose_with_branch(log, gp, b, 0.3, 2, 5);
        CHECK(p.branch == b);
        CHECK(p.point.minCoeff() >= 0.0);
        CHECK(p.point.maxCoeff() <= 1.0);
    }
    SearchStrategy s;
    for (int c = s.c0; c < s.c0 + 30; ++c) {
        const Proposal p = propose_next(log, gp, s, c, 2, static_cast<std::uint64_t>(c));
        CHECK(p.point.minCoeff() >= 0.0);
        CHECK(p.point.maxCoeff() <= 1.0);
    }
}

TEST_CASE("min-mean branch finds the surrogate minimum") {
    EvaluationLog log;
    for (int i = 0; i <= 10; ++i) {
        const double x = i / 10.0;
        log.add(v1(x), (x - 0.37) * (x - 0.37) + 0.05);
    }
    const GpFit fit = fit_gp(log);
    const GaussianProcess gp(stack_rows(log.params),
                             Eigen::Map<const Vector>(log.errors.data(), log.size()), fit.hyper);
    double best_x = 0.0, best_mu = 1e300;
    for (int k = 0; k <= 10000; ++k) {
        const double x = k / 10000.0;
        const double mu = gp.predict_mean(v1(x));
        if (mu < best_mu) {
            best_mu = mu;
            best_x = x;
        }
    }
    const Proposal p = propose_with_branch(log, gp, SearchBranch::min_mean, 0.5, 1, 3);
    CHECK(std::abs(p.point(0) - best_x) <= 0.05);
}

TEST_CASE("inner search is never worse than its starts") {
    std::mt19937_64 rng(1);
    double best = 0.0;
    const auto f = [](const Vector& x) { return -std::pow(x(0) - 0.8, 2) - std::pow(x(1) - 0.1, 2); };
    const Vector inc{{0.5, 0.5}};
    const Vector x = maximize_in_box(f, inc, rng, InnerSearchOptions{}, best);
    CHECK(best >= f(inc));
    CHECK(std::abs(x(0) - 0.8) < 2e-3);
    CHECK(std::abs(x(1) - 0.1) < 2e-3);
}

TEST_CASE("unit box round trip") {
    Matrix v(2, 1);
    v << 0.9, 0.1;
    const std::vector<Range> ranges{Range{0.0, 1.0}};
    const Vector u = to_unit_box(v, ranges);
    CHECK(from_unit_box(u, 2, ranges) == v);
    const std::vector<Range> wide{Range{-1.0, 3.0}};
    CHECK((from_unit_box(to_unit_box(v, wide), 2, wide) - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("heterogeneous step bookkeeping") {
    WealthModelConfig cfg;
    cfg.grid_width = cfg.grid_height = 12;
    cfg.num_agents = 30;
    cfg.horizon = 15;
    const auto sim = wealth_simulator(cfg);
    const auto dyn = synthetic_income_schedule(15);
    const auto het = synthetic_consumption();
    const Matrix val = generate_validation(cfg, dyn, het, 5, 3).trace.stats;
    HeterogeneousState state = start_heterogeneous(2, 21);
    SearchStrategy s;
    double last_best = 1e300;
    for (int c = 0; c < 14; ++c) {
        const auto step = heterogeneous_calibration_step(sim, state, dyn, het, val, 2, s, derive_seed(9, c));
        CHECK(state.log.size() == c + 1);
        CHECK(step.best_so_far <= last_best);
        CHECK(step.best_so_far == state.log.best_error());
        CHECK(step.evaluated.minCoeff() >= 0.0);
        CHECK(step.evaluated.maxCoeff() <= 1.0);
        last_best = step.best_so_far;
        if (c + 1 < s.c0) CHECK(step.next.branch == SearchBranch::initial);
    }
}

TEST_CASE("pure random search skips the surrogate") {
    EvaluationLog log;
    log.add(Vector{{0.1, 0.2}}, 1.0);
    SearchStrategy s;
    s.xi_rand = 1.0;
    s.xi_pv = s.xi_pm = 0.0;
    CHECK(s.pure_random());
    const Proposal p = propose_next(log, GaussianProcess(), s, 50, 2, 1);
    CHECK(p.branch == SearchBranch::random);
}
