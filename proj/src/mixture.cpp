#include "abmcal/mixture.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "abmcal/kmeans_init.hpp"
#include "abmcal/stats.hpp"

namespace abmcal {

namespace {

Matrix component_log_density(const Vector& weights, const Matrix& means, const Matrix& variances,
                             const Matrix& codes) {
    const Eigen::Index A = codes.rows(), K = weights.size(), H = codes.cols();
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    Matrix out(A, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const Eigen::RowVectorXd inv = variances.row(k).cwiseInverse();
        const double norm = std::log(weights(k)) -
                            0.5 * (variances.row(k).array().log().sum() + static_cast<double>(H) * log_2pi);
        out.col(k) = ((codes.rowwise() - means.row(k)).array().square().rowwise() * inv.array())
                         .rowwise()
                         .sum()
                         .matrix() *
                         -0.5 +
                     Vector::Constant(A, norm);
    }
    return out;
}

Vector row_log_sum_exp(const Matrix& m) {
    Vector out(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i) = log_sum_exp(m.row(i));
    return out;
}

Eigen::RowVectorXd population_variance(const Matrix& codes) {
    const Eigen::RowVectorXd mean = codes.colwise().mean();
    return (codes.rowwise() - mean).array().square().colwise().mean().matrix().cwiseMax(kGmmVarianceFloor);
}

struct EmRun {
    MixtureModel model;
    double log_lik = -std::numeric_limits<double>::infinity();
};

EmRun run_em(const Matrix& codes, int k, std::mt19937_64& rng) {
    const Eigen::Index A = codes.rows();
    const Eigen::RowVectorXd data_var = population_variance(codes);
    EmRun run;
    MixtureModel& m = run.model;
    m.kind = MixtureKind::parametric;
    m.weights = Vector::Constant(k, 1.0 / k);
    m.means.resize(k, codes.cols());
    m.variances = data_var.replicate(k, 1);
    const std::vector<int> centers = kmeans_plus_plus(codes, k, rng);
    for (int j = 0; j < k; ++j) m.means.row(j) = codes.row(centers[static_cast<std::size_t>(j)]);

    Matrix logp;
    double previous = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < kGmmMaxIterations; ++iter) {
        logp = component_log_density(m.weights, m.means, m.variances, codes);
        const Vector point_ll = row_log_sum_exp(logp);
        const double ll = point_ll.sum();
        m.score_trace.push_back(ll);
        run.log_lik = ll;
        if (iter > 0 && ll - previous < kGmmTolerance) break;
        previous = ll;
        if (iter + 1 == kGmmMaxIterations) break;

        const Matrix resp = (logp.colwise() - point_ll).array().exp().matrix();
        const Vector nk = resp.colwise().sum().transpose();
        bool reinitialized = false;
        for (int j = 0; j < k; ++j) {
            if (nk(j) <= 1e-10) {
                Eigen::Index worst = 0;
                point_ll.minCoeff(&worst);
                m.means.row(j) = codes.row(worst);
                m.variances.row(j) = data_var;
                m.weights(j) = 1.0 / static_cast<double>(A);
                reinitialized = true;
                continue;
            }
            const Eigen::RowVectorXd mu = (resp.col(j).transpose() * codes) / nk(j);
            m.means.row(j) = mu;
            m.variances.row(j) = (resp.col(j).transpose() * (codes.rowwise() - mu).array().square().matrix()) / nk(j);
            m.variances.row(j) = m.variances.row(j).cwiseMax(kGmmVarianceFloor);
            m.weights(j) = nk(j) / static_cast<double>(A);
        }
        if (reinitialized) m.weights /= m.weights.sum();
    }
    m.assignments.resize(static_cast<std::size_t>(A));
    for (Eigen::Index i = 0; i < A; ++i) {
        Eigen::Index best = 0;
        logp.row(i).maxCoeff(&best);
        m.assignments[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    m.best_score = run.log_lik;
    return run;
}

// Sufficient statistics of one DPMM component.
struct ClusterStats {
    int n = 0;
    Vector sum;
    Vector sumsq;

    explicit ClusterStats(Eigen::Index dims) : sum(Vector::Zero(dims)), sumsq(Vector::Zero(dims)) {}
    void add(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
        ++n;
        sum += x.transpose();
        sumsq += x.transpose().cwiseAbs2();
    }
    void remove(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
        --n;
        sum -= x.transpose();
        sumsq -= x.transpose().cwiseAbs2();
    }
};

struct NigPosterior {
    double kappa, mu, a, b;
};

NigPosterior posterior(const NigPrior& p, int n, double sum, double sumsq) {
    NigPosterior q;
    q.kappa = p.kappa0 + n;
    q.mu = (p.kappa0 * p.mu0 + sum) / q.kappa;
    q.a = p.a0 + 0.5 * n;
    q.b = p.b0 + 0.5 * (sumsq + p.kappa0 * p.mu0 * p.mu0 - q.kappa * q.mu * q.mu);
    q.b = std::max(q.b, p.b0 * 1e-12);
    return q;
}

double log_predictive(const NigPrior& p, const ClusterStats& c, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    double total = 0.0;
    for (Eigen::Index h = 0; h < x.size(); ++h) {
        const NigPosterior q = posterior(p, c.n, c.sum(h), c.sumsq(h));
        const double nu = 2.0 * q.a;
        const double scale2 = q.b * (q.kappa + 1.0) / (q.a * q.kappa);
        const double d = x(h) - q.mu;
        total += std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                 0.5 * std::log(nu * std::numbers::pi * scale2) -
                 0.5 * (nu + 1.0) * std::log1p(d * d / (nu * scale2));
    }
    return total;
}

double log_marginal(const NigPrior& p, const ClusterStats& c) {
    double total = 0.0;
    for (Eigen::Index h = 0; h < c.sum.size(); ++h) {
        const NigPosterior q = posterior(p, c.n, c.sum(h), c.sumsq(h));
        total += std::lgamma(q.a) - std::lgamma(p.a0) + p.a0 * std::log(p.b0) - q.a * std::log(q.b) +
                 0.5 * (std::log(p.kappa0) - std::log(q.kappa)) -
                 0.5 * c.n * std::log(2.0 * std::numbers::pi);
    }
    return total;
}

// Labels renumbered 0..K-1 in order of first appearance.
std::vector<int> relabel(const std::vector<int>& labels, int& k) {
    std::vector<int> map;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (l >= static_cast<int>(map.size())) map.resize(static_cast<std::size_t>(l) + 1, -1);
        if (map[static_cast<std::size_t>(l)] < 0) map[static_cast<std::size_t>(l)] = k++;
        out[i] = map[static_cast<std::size_t>(l)];
    }
    return out;
}

std::vector<ClusterStats> gather(const Matrix& x, const std::vector<int>& labels, int k) {
    std::vector<ClusterStats> stats(static_cast<std::size_t>(k), ClusterStats(x.cols()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        stats[static_cast<std::size_t>(labels[i])].add(x.row(static_cast<Eigen::Index>(i)));
    }
    return stats;
}

}  // namespace

Vector mixture_point_log_likelihood(const MixtureModel& model, const Matrix& codes) {
    require(codes.cols() == model.means.cols(), ErrorKind::dimension_mismatch,
            "mixture: code dimension mismatch");
    return row_log_sum_exp(component_log_density(model.weights, model.means, model.variances, codes));
}

MixtureModel fit_gmm(const Matrix& codes, int k, std::uint64_t seed) {
    require(codes.rows() >= 1 && codes.cols() >= 1, ErrorKind::invalid_argument, "fit_gmm: no codes");
    require(k >= 1 && k <= codes.rows(), ErrorKind::invalid_argument, "fit_gmm: need 1 <= K <= A");
    require(codes.allFinite(), ErrorKind::invalid_argument, "fit_gmm: non-finite codes");
    EmRun best;
    for (int r = 0; r < kGmmRestarts; ++r) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        EmRun run = run_em(codes, k, rng);
        if (run.log_lik > best.log_lik) best = std::move(run);
    }
    return best.model;
}

double dpmm_log_joint(const Matrix& standardized, const std::vector<int>& labels, double gamma,
                      const NigPrior& prior) {
    require(static_cast<Eigen::Index>(labels.size()) == standardized.rows(), ErrorKind::dimension_mismatch,
            "dpmm_log_joint: one label per row");
    int k = 0;
    const std::vector<int> compact = relabel(labels, k);
    const std::vector<ClusterStats> stats = gather(standardized, compact, k);
    const double n = static_cast<double>(labels.size());
    double total = k * std::log(gamma) + std::lgamma(gamma) - std::lgamma(gamma + n);
    for (const ClusterStats& c : stats) total += std::lgamma(static_cast<double>(c.n)) + log_marginal(prior, c);
    return total;
}

MixtureModel fit_dpmm(const Matrix& codes, double gamma, int iterations, std::uint64_t seed,
                      const NigPrior& prior) {
    require(gamma > 0.0, ErrorKind::invalid_argument, "fit_dpmm: concentration must be positive");
    require(iterations >= 1, ErrorKind::invalid_argument, "fit_dpmm: need at least one sweep");
    require(codes.rows() >= 1 && codes.cols() >= 1, ErrorKind::invalid_argument, "fit_dpmm: no codes");
    require(codes.allFinite(), ErrorKind::invalid_argument, "fit_dpmm: non-finite codes");
    const int A = static_cast<int>(codes.rows());

    const Eigen::RowVectorXd center = codes.colwise().mean();
    Eigen::RowVectorXd spread = (codes.rowwise() - center).array().square().colwise().mean().sqrt().matrix();
    for (Eigen::Index h = 0; h < spread.size(); ++h) {
        if (!(spread(h) > 1e-12)) spread(h) = 1.0;
    }
    const Matrix x = ((codes.rowwise() - center).array().rowwise() / spread.array()).matrix();

    std::mt19937_64 rng(seed);
    const int k_init = std::min(A, 10);
    std::uniform_int_distribution<int> pick(0, k_init - 1);
    std::vector<int> labels(static_cast<std::size_t>(A));
    for (int& l : labels) l = pick(rng);
    int k = 0;
    labels = relabel(labels, k);
    std::vector<ClusterStats> stats = gather(x, labels, k);
    const ClusterStats empty(x.cols());
    std::uniform_real_distribution<double> u(0.0, 1.0);

    MixtureModel out;
    out.kind = MixtureKind::nonparametric;
    out.concentration = gamma;
    std::vector<int> best_labels;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> logp;
    for (int sweep = 0; sweep < iterations; ++sweep) {
        for (int i = 0; i < A; ++i) {
            const auto row = x.row(i);
            const int old = labels[static_cast<std::size_t>(i)];
            stats[static_cast<std::size_t>(old)].remove(row);
            if (stats[static_cast<std::size_t>(old)].n == 0) {
                // drop the empty component; the last one takes its label
                const int last = static_cast<int>(stats.size()) - 1;
                if (old != last) {
                    std::swap(stats[static_cast<std::size_t>(old)], stats[static_cast<std::size_t>(last)]);
                    for (int& l : labels) {
                        if (l == last) l = old;
                    }
                }
                stats.pop_back();
            }
            const std::size_t K = stats.size();
            logp.assign(K + 1, 0.0);
            for (std::size_t j = 0; j < K; ++j) {
                logp[j] = std::log(static_cast<double>(stats[j].n)) + log_predictive(prior, stats[j], row);
            }
            logp[K] = std::log(gamma) + log_predictive(prior, empty, row);
            const double norm = log_sum_exp(Eigen::Map<const Vector>(logp.data(), static_cast<Eigen::Index>(K + 1)));
            double target = u(rng);
            std::size_t chosen = K;
            for (std::size_t j = 0; j <= K; ++j) {
                target -= std::exp(logp[j] - norm);
                if (target <= 0.0) {
                    chosen = j;
                    break;
                }
            }
            if (chosen == K) stats.emplace_back(x.cols());
            stats[chosen].add(row);
            labels[static_cast<std::size_t>(i)] = static_cast<int>(chosen);
        }
        const double joint = dpmm_log_joint(x, labels, gamma, prior);
        out.score_trace.push_back(joint);
        if (joint > best) {
            best = joint;
            best_labels = labels;
        }
    }

    int K = 0;
    out.assignments = relabel(best_labels, K);
    out.best_score = best;
    const std::vector<ClusterStats> final_stats = gather(x, out.assignments, K);
    out.weights.resize(K);
    out.means.resize(K, codes.cols());
    out.variances.resize(K, codes.cols());
    for (int j = 0; j < K; ++j) {
        const ClusterStats& c = final_stats[static_cast<std::size_t>(j)];
        out.weights(j) = static_cast<double>(c.n) / A;
        for (Eigen::Index h = 0; h < codes.cols(); ++h) {
            const NigPosterior q = posterior(prior, c.n, c.sum(h), c.sumsq(h));
            out.means(j, h) = center(h) + spread(h) * q.mu;
            out.variances(j, h) = spread(h) * spread(h) * q.b / (q.a - 1.0);
        }
    }
    return out;
}

HeterogeneousAssignment build_assignment(const MixtureModel& mix, const std::vector<Range>& het_ranges,
                                         const Vector& init_values) {
    const int K = mix.num_components();
    require(K >= 1, ErrorKind::invalid_argument, "build_assignment: mixture has no components");
    require(!het_ranges.empty(), ErrorKind::invalid_argument, "build_assignment: no heterogeneous parameters");
    const auto N = static_cast<Eigen::Index>(het_ranges.size());
    Vector init = init_values;
    if (init.size() == 0) {
        init.resize(N);
        for (Eigen::Index n = 0; n < N; ++n) {
            const Range& r = het_ranges[static_cast<std::size_t>(n)];
            init(n) = 0.5 * (r.min + r.max);
        }
    }
    require(init.size() == N, ErrorKind::dimension_mismatch, "build_assignment: one initial value per parameter");
    HeterogeneousAssignment het;
    het.rule = ClusterRule::explicit_labels;
    het.cluster_of_agent = mix.assignments;
    het.ranges = het_ranges;
    het.values = init.transpose().replicate(K, 1);
    het.validate(static_cast<int>(mix.assignments.size()));
    return het;
}

}  // namespace abmcal
