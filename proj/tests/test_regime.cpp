#include <doctest.h>

#include <numeric>
#include <random>
#include <set>

#include "abmcal/beta.hpp"
#include "abmcal/hmm.hpp"
#include "abmcal/regime.hpp"
#include "abmcal/simulator.hpp"
#include "oracles.hpp"

using namespace abmcal;

namespace {

Matrix random_observations(std::mt19937_64& rng, int T, int S) {
    std::normal_distribution<double> g;
    Matrix o(T, S);
    for (int t = 0; t < T; ++t)
        for (int s = 0; s < S; ++s) o(t, s) = g(rng) + (t % 7 < 3 ? 2.0 : 0.0);
    return o;
}

// Cheap deterministic stand-in for the ABM: stats follow the income schedule
// with small seeded noise.
SummarySimulator toy_simulator() {
    return [](const DynamicSchedule& s, const HeterogeneousAssignment&, int replications, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, 0.2);
        ReplicationMean out;
        out.summary_mean = Matrix::Zero(2, s.horizon());
        for (int r = 0; r < replications; ++r) {
            for (int t = 0; t < s.horizon(); ++t) {
                out.summary_mean(0, t) += 100.0 * s.values(0, t) + g(rng);
                out.summary_mean(1, t) += 50.0 + 40.0 * s.values(0, t) + g(rng);
            }
        }
        out.summary_mean /= replications;
        out.agent_mean = Matrix::Zero(1, s.horizon());
        return out;
    };
}

}  // namespace

TEST_CASE("likelihood examples") {
    Matrix val(1, 1);
    val << 10.0;
    const LikelihoodMatrix lm = compute_likelihoods({val}, val);
    CHECK(lm.per_stat(0, 0, 0) == doctest::Approx(0.39894).epsilon(1e-5));

    // densities 0.3 and 0.5 multiply to 0.15
    LikelihoodMatrix two;
    two.log_per_stat = {Matrix(2, 1)};
    two.log_per_stat[0] << std::log(0.3), std::log(0.5);
    two.log_joint = two.log_per_stat[0].colwise().sum().transpose();
    CHECK(two.joint()(0, 0) == doctest::Approx(0.15));

    Matrix d(2, 3), mu(2, 3);
    d << 1, 2, 3, 4, 5, 6;
    mu = d;
    const LikelihoodMatrix peak = compute_likelihoods({mu}, d);
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 3; ++t)
            CHECK(peak.per_stat(s, t, 0) == doctest::Approx(1.0 / (std::sqrt(2 * M_PI) * 0.1 * mu(s, t))));
    CHECK(peak.log_joint.rows() == 3);
    CHECK(peak.log_joint(1, 0) == doctest::Approx(peak.log_per_stat[0].col(1).sum()));

    // zero mean falls back to the sd floor and stays finite
    const LikelihoodMatrix zero = compute_likelihoods({Matrix::Zero(1, 1)}, Matrix::Zero(1, 1));
    CHECK(std::isfinite(zero.log_joint(0, 0)));
}

TEST_CASE("hmm with one state is the column mean") {
    std::mt19937_64 rng(4);
    const Matrix o = random_observations(rng, 40, 3);
    const HmmFit fit = fit_hmm(o, 1, 9);
    CHECK(std::all_of(fit.labels.begin(), fit.labels.end(), [](int l) { return l == 0; }));
    const Vector means = o.colwise().mean().transpose();
    CHECK((fit.model.means.row(0).transpose() - means).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("hmm separates a two-level signal") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 0.01);
    const int T = 50;
    Matrix o(T, 2);
    for (int t = 0; t < T; ++t) {
        const double level = t < T / 2 ? 1.0 : -1.0;
        o(t, 0) = level + g(rng);
        o(t, 1) = level + g(rng);
    }
    const HmmFit fit = fit_hmm(o, 2, 3);
    for (int t = 1; t < T / 2; ++t) CHECK(fit.labels[t] == fit.labels[0]);
    for (int t = T / 2 + 1; t < T; ++t) CHECK(fit.labels[t] == fit.labels[T / 2]);
    CHECK(fit.labels[0] != fit.labels[T / 2]);
}

TEST_CASE("baum-welch log-likelihood never decreases on 20 random datasets") {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 20; ++k) {
        const Matrix o = random_observations(rng, 50, 4);
        const HmmFit fit = fit_hmm(o, 3, static_cast<std::uint64_t>(k));
        REQUIRE(fit.log_likelihood_trace.size() >= 2);
        for (std::size_t i = 1; i < fit.log_likelihood_trace.size(); ++i)
            CHECK(fit.log_likelihood_trace[i] >= fit.log_likelihood_trace[i - 1] - 1e-9);
        CHECK(fit.model.variances.minCoeff() > 0.0);
        CHECK(fit.log_likelihood == doctest::Approx(hmm_log_likelihood(fit.model, o)));
    }
}

TEST_CASE("constant observations floor the variance and flag it") {
    const Matrix o = Matrix::Constant(20, 2, 3.0);
    const HmmFit fit = fit_hmm(o, 2, 1);
    CHECK(fit.variance_floored);
    CHECK(fit.model.variances.minCoeff() >= 1e-6);
}

TEST_CASE("merge_regimes examples") {
    Eigen::MatrixXi labels(4, 2);
    labels << 1, 1, 1, 1, 2, 1, 1, 1;
    const MergedRegimes m = merge_regimes(labels);
    REQUIRE(m.size() == 2);
    CHECK(m.blocks[0] == std::vector<int>{0, 1, 3});
    CHECK(m.blocks[1] == std::vector<int>{2});

    Eigen::MatrixXi single(5, 1);
    single << 0, 2, 0, 1, 2;
    const MergedRegimes s = merge_regimes(single);
    CHECK(s.size() == 3);

    Eigen::MatrixXi distinct(4, 1);
    distinct << 0, 1, 2, 3;
    CHECK(merge_regimes(distinct).size() == 4);
}

TEST_CASE("merge_regimes is a partition on 1000 random labelings") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> dim(1, 30), lab(0, 3);
    for (int k = 0; k < 1000; ++k) {
        const int T = dim(rng), I = 1 + dim(rng) % 4;
        Eigen::MatrixXi labels(T, I);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < I; ++i) labels(t, i) = lab(rng);
        const MergedRegimes m = merge_regimes(labels);
        std::vector<int> seen(static_cast<std::size_t>(T), 0);
        bool ok = true;
        for (int u = 0; u < m.size(); ++u) {
            for (int t : m.blocks[static_cast<std::size_t>(u)]) {
                ++seen[static_cast<std::size_t>(t)];
                ok = ok && m.block_of_time[static_cast<std::size_t>(t)] == u;
                ok = ok && labels.row(t) == labels.row(m.blocks[static_cast<std::size_t>(u)].front());
            }
        }
        for (int c : seen) ok = ok && c == 1;
        // distinct blocks have distinct tuples
        std::set<std::vector<int>> sigs(m.signatures.begin(), m.signatures.end());
        ok = ok && static_cast<int>(sigs.size()) == m.size();
        CHECK(ok);
    }
}

TEST_CASE("poor-fit threshold") {
    const std::vector<int> block{0, 1};
    // constant likelihood never counts as poor
    CHECK_FALSE(detect_poor_fit(Matrix::Constant(4, 2, std::log(0.3)), block, 0));

    Matrix l(4, 1);
    l << std::log(0.2), std::log(0.2), std::log(1e-300) - 50.0, 0.0;  // min ~ 0, max = 1
    CHECK(detect_poor_fit(l, block, 0));  // 0.2 < 0.5

    const std::vector<int> with_max{0, 3};
    CHECK_FALSE(detect_poor_fit(l, with_max, 0));

    // later iterations lower the threshold toward the minimum
    Matrix m(3, 1);
    m << std::log(0.2), std::log(0.1), 0.0;
    const std::vector<int> one{0};
    CHECK(detect_poor_fit(m, one, 0));    // (0.1 + 1)/2 = 0.55
    CHECK_FALSE(detect_poor_fit(m, one, 30));  // ratio 0.042: threshold ~0.136
    CHECK(poor_fit_ratio(2) == doctest::Approx(0.81));
}

TEST_CASE("beta fits") {
    const std::vector<double> v{0.2, 0.5, 0.8}, w{1.0 / 3, 1.0 / 3, 1.0 / 3};
    const BetaPosterior b = fit_beta(v, w);
    CHECK(b.alpha == doctest::Approx(b.beta).epsilon(1e-6));
    CHECK(b.mean() == doctest::Approx(0.5).epsilon(1e-6));
    // scipy Nelder-Mead on the same objective: alpha = beta = 1.895339
    CHECK(b.alpha == doctest::Approx(1.895339).epsilon(1e-5));

    const std::vector<double> v2{0.1, 0.3, 0.6}, w2{0.5, 0.3, 0.2};
    const BetaPosterior b2 = fit_beta(v2, w2);
    CHECK(b2.alpha == doctest::Approx(1.459478902053697).epsilon(1e-6));
    CHECK(b2.beta == doctest::Approx(4.047904164858351).epsilon(1e-6));
    CHECK(beta_log_likelihood(b2.alpha, b2.beta, v2, w2) >=
          beta_log_likelihood(b2.alpha * 1.01, b2.beta, v2, w2));

    const std::vector<double> wpoint{1.0, 0.0, 0.0};
    const BetaPosterior p = fit_beta(v, wpoint);
    CHECK(p.mean() == doctest::Approx(0.2).epsilon(1e-3));
    CHECK(p.moment_fallback);
}

TEST_CASE("beta fit matches a grid-search oracle") {
    const std::vector<double> v{0.2, 0.5, 0.8}, w{1.0 / 3, 1.0 / 3, 1.0 / 3};
    double best = -1e300, ba = 0, bb = 0;
    for (double a = 0.05; a <= 50.0; a += 0.05)
        for (double b = 0.05; b <= 50.0; b += 0.05) {
            const double ll = beta_log_likelihood(a, b, v, w);
            if (ll > best) {
                best = ll;
                ba = a;
                bb = b;
            }
        }
    const BetaPosterior fit = fit_beta(v, w);
    CHECK(fit.mean() == doctest::Approx(ba / (ba + bb)).epsilon(1e-6));
    CHECK(std::abs(fit.alpha - ba) < 0.05);
    CHECK(beta_log_likelihood(fit.alpha, fit.beta, v, w) >= best - 1e-12);
}

TEST_CASE("beta fitted to an even grid is close to uniform and draws pass KS") {
    std::vector<double> grid, w;
    for (int i = 0; i < 200; ++i) grid.push_back((i + 0.5) / 200.0);
    w.assign(grid.size(), 1.0 / static_cast<double>(grid.size()));
    const BetaPosterior b = fit_beta(grid, w);
    CHECK(b.alpha >= 0.8);
    CHECK(b.alpha <= 1.25);
    CHECK(b.beta >= 0.8);
    CHECK(b.beta <= 1.25);

    // poor-fit override: posterior is Beta(1,1); ByTime draws are uniform
    RegimePosteriors post;
    post.by_param = {{BetaPosterior{1.0, 1.0, false}}};
    post.poor_fit = {true};
    Eigen::MatrixXi labels = Eigen::MatrixXi::Zero(100, 1);
    const MergedRegimes merged = merge_regimes(labels);
    const CandidateSet c = generate_next(post, merged, GenerationRule::by_time, 100, {Range{0.0, 1.0}}, 100, 8);
    std::vector<double> draws;
    for (const auto& s : c.candidates)
        for (int t = 0; t < 100; ++t) draws.push_back(s.values(0, t));
    REQUIRE(draws.size() == 10000);
    CHECK(oracle::ks_uniform(draws) < 0.02);
}

TEST_CASE("fitted beta mean stays inside the value span") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> v(6), w(6);
        for (double& x : v) x = u(rng);
        for (double& x : w) x = u(rng);
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (double& x : w) x /= total;
        const BetaPosterior b = fit_beta(v, w);
        CHECK(b.alpha > 0.0);
        CHECK(b.beta > 0.0);
        CHECK(b.mean() >= *std::min_element(v.begin(), v.end()) - 1e-9);
        CHECK(b.mean() <= *std::max_element(v.begin(), v.end()) + 1e-9);
    }
}

TEST_CASE("generation rules") {
    RegimePosteriors post;
    post.by_param = {{beta_from_moments(0.5, 0.01), beta_from_moments(0.3, 0.02)}};
    post.poor_fit = {false, false};
    Eigen::MatrixXi labels(20, 1);
    for (int t = 0; t < 20; ++t) labels(t, 0) = t < 10 ? 0 : 1;
    const MergedRegimes merged = merge_regimes(labels);
    const std::vector<Range> unit{Range{0.0, 1.0}};

    const CandidateSet ms = generate_next(post, merged, GenerationRule::mode_selection, 3, unit, 20, 1);
    CHECK(ms.candidates[0].values(0, 0) == doctest::Approx(0.4));
    CHECK(ms.candidates[1].values(0, 0) == doctest::Approx(0.5));
    CHECK(ms.candidates[2].values(0, 0) == doctest::Approx(0.6));
    for (const auto& s : ms.candidates)
        for (int t = 1; t < 10; ++t) CHECK(s.values(0, t) == s.values(0, 0));
    const CandidateSet ms2 = generate_next(post, merged, GenerationRule::mode_selection, 3, unit, 20, 99);
    for (int i = 0; i < 3; ++i) CHECK(ms.candidates[i].values == ms2.candidates[i].values);

    const CandidateSet br = generate_next(post, merged, GenerationRule::by_regime, 4, {Range{0.0, 2.0}}, 20, 3);
    for (const auto& s : br.candidates) {
        for (int t = 1; t < 10; ++t) CHECK(s.values(0, t) == s.values(0, 0));
        for (int t = 11; t < 20; ++t) CHECK(s.values(0, t) == s.values(0, 10));
    }

    for (GenerationRule rule : {GenerationRule::by_time, GenerationRule::by_regime, GenerationRule::mode_selection,
                                GenerationRule::random}) {
        const CandidateSet c = generate_next(post, merged, rule, 5, {Range{0.0, 2.0}}, 20, 17);
        for (const auto& s : c.candidates) {
            CHECK(s.values.minCoeff() >= 0.0);
            CHECK(s.values.maxCoeff() <= 2.0);
        }
    }
    CHECK(parse_generation_rule("by-time") == GenerationRule::by_time);
    CHECK(to_string(GenerationRule::mode_selection) == "mode-selection");
    CHECK_THROWS_AS(parse_generation_rule("sideways"), Error);
}

TEST_CASE("dynamic step on test-case sizes") {
    WealthModelConfig cfg;
    cfg.grid_width = cfg.grid_height = 15;
    cfg.num_agents = 40;
    const CandidateSet cands = random_candidates(3, {Range{0.0, 2.0}}, 50, 5);
    const auto het = synthetic_consumption();
    const Matrix val =
        generate_validation(cfg, synthetic_income_schedule(50), het, 5, 1).trace.stats;
    DynamicStepOptions opt;
    const auto sim = wealth_simulator(cfg);
    const DynamicStepResult a = dynamic_calibration_step(sim, cands, het, val, opt, 42);
    REQUIRE(a.next.size() == 3);
    for (const auto& s : a.next.candidates) {
        CHECK(s.horizon() == 50);
        CHECK(s.values.minCoeff() >= 0.0);
        CHECK(s.values.maxCoeff() <= 2.0);
    }
    CHECK(a.neg_log_likelihood.size() == 3);
    const DynamicStepResult b = dynamic_calibration_step(sim, cands, het, val, opt, 42);
    for (int i = 0; i < 3; ++i) CHECK(a.next.candidates[i].values == b.next.candidates[i].values);
}

TEST_CASE("posterior concentrates on the candidate that generated the data") {
    const SummarySimulator sim = toy_simulator();
    const Range range{0.0, 2.0};
    HeterogeneousAssignment het;
    int hits = 0, checked = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CandidateSet cands = random_candidates(3, {range}, 30, seed);
        DynamicSchedule truth = cands.candidates[0];
        truth.values.setConstant(1.2);
        cands.candidates[0] = truth;
        const Matrix val = sim(truth, het, 50, derive_seed(seed, 777)).summary_mean;
        DynamicStepOptions opt;
        opt.replications = 5;
        opt.rule = GenerationRule::by_time;
        const DynamicStepResult step = dynamic_calibration_step(sim, cands, het, val, opt, seed);
        for (int u = 0; u < step.merged.size(); ++u) {
            if (step.posteriors.poor_fit[static_cast<std::size_t>(u)]) continue;
            ++checked;
            const double mean = step.posteriors.by_param[0][static_cast<std::size_t>(u)].mean();
            if (std::abs(mean - range.normalize(1.2)) <= 0.1) ++hits;
        }
    }
    REQUIRE(checked > 0);
    CHECK(hits == checked);
}
