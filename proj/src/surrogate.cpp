#include "abmcal/surrogate.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "abmcal/csv.hpp"
#include "abmcal/metrics.hpp"

namespace abmcal {

void EvaluationLog::add(const Vector& x, double error) {
    require(std::isfinite(error), ErrorKind::numerical, "non-finite error added to the evaluation log");
    require(params.empty() || params.front().size() == x.size(), ErrorKind::dimension_mismatch,
            "evaluation log parameter dimension changed");
    params.push_back(x);
    errors.push_back(error);
}

int EvaluationLog::best_index() const {
    int best = -1;
    for (int k = 0; k < size(); ++k) {
        if (best < 0 || errors[static_cast<std::size_t>(k)] < errors[static_cast<std::size_t>(best)]) best = k;
    }
    return best;
}

double EvaluationLog::best_error() const {
    const int k = best_index();
    require(k >= 0, ErrorKind::invalid_argument, "best_error of an empty evaluation log");
    return errors[static_cast<std::size_t>(k)];
}

Matrix stack_rows(const std::vector<Vector>& rows) {
    if (rows.empty()) return Matrix();
    Matrix out(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return out;
}

namespace {

// Per-dimension squared differences between all input rows.
std::vector<Matrix> squared_differences(const Matrix& inputs) {
    std::vector<Matrix> out;
    for (Eigen::Index d = 0; d < inputs.cols(); ++d) {
        const Vector col = inputs.col(d);
        Matrix diff = col.replicate(1, inputs.rows()) - col.transpose().replicate(inputs.rows(), 1);
        out.push_back(diff.array().square().matrix());
    }
    return out;
}

Matrix matern52_covariance(const std::vector<Matrix>& sqdiff, double signal_variance,
                           const Vector& lengthscales) {
    Eigen::ArrayXXd r2 = Eigen::ArrayXXd::Zero(sqdiff.front().rows(), sqdiff.front().cols());
    for (std::size_t d = 0; d < sqdiff.size(); ++d) {
        const double ell = lengthscales(static_cast<Eigen::Index>(d));
        r2 += sqdiff[d].array() / (ell * ell);
    }
    const Eigen::ArrayXXd s5r = (5.0 * r2).sqrt();
    return (signal_variance * (1.0 + s5r + s5r.square() / 3.0) * (-s5r).exp()).matrix();
}

struct Factorization {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;
};

// Cholesky with escalating diagonal jitter; throws past kGpMaxJitter.
Factorization factorize(const Matrix& cov) {
    Factorization f;
    for (f.jitter = kGpJitter; f.jitter <= kGpMaxJitter * (1 + 1e-9); f.jitter *= 10) {
        Matrix c = cov;
        c.diagonal().array() += f.jitter;
        f.llt.compute(c);
        if (f.llt.info() == Eigen::Success && (f.llt.matrixLLT().diagonal().array() > 0).all()) return f;
    }
    std::ostringstream msg;
    msg << "GP covariance not positive definite after jitter " << kGpMaxJitter << " (n=" << cov.rows()
        << ", min diag " << cov.diagonal().minCoeff() << ", max diag " << cov.diagonal().maxCoeff() << ")";
    fail(ErrorKind::numerical, msg.str());
}

double log_marginal(const Eigen::LLT<Matrix>& llt, const Vector& centered, Vector& alpha) {
    alpha = llt.solve(centered);
    return -0.5 * centered.dot(alpha) - llt.matrixLLT().diagonal().array().log().sum() -
           0.5 * static_cast<double>(centered.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

GaussianProcess::GaussianProcess(const Matrix& inputs, const Vector& targets,
                                 const KernelHyperparams& hyper)
    : inputs_(inputs), hyper_(hyper) {
    const auto n = inputs.rows();
    require(n >= 1 && targets.size() == n, ErrorKind::dimension_mismatch,
            "GP needs one target per input row");
    require(hyper.lengthscales.size() == inputs.cols(), ErrorKind::dimension_mismatch,
            "GP lengthscale count differs from input dimension");
    require(hyper.signal_variance > 0 && hyper.noise_precision > 0 && (hyper.lengthscales.array() > 0).all(),
            ErrorKind::invalid_argument, "GP hyperparameters must be positive");

    offset_ = targets.mean();
    Matrix cov = matern52_covariance(squared_differences(inputs), hyper.signal_variance, hyper.lengthscales);
    cov.diagonal().array() += hyper.noise_variance();
    Factorization f = factorize(cov);
    llt_ = std::move(f.llt);
    jitter_ = f.jitter;
    log_marginal_ = log_marginal(llt_, targets.array() - offset_, alpha_);
}

Vector GaussianProcess::kernel_column(const Vector& query) const {
    require(query.size() == inputs_.cols(), ErrorKind::dimension_mismatch, "GP query dimension mismatch");
    Vector k(inputs_.rows());
    for (Eigen::Index i = 0; i < inputs_.rows(); ++i) {
        k(i) = matern52(inputs_.row(i).transpose(), query, hyper_.signal_variance, hyper_.lengthscales);
    }
    return k;
}

double GaussianProcess::predict_mean(const Vector& query) const {
    return offset_ + kernel_column(query).dot(alpha_);
}

PosteriorPrediction GaussianProcess::predict(const Vector& query) const {
    const Vector k = kernel_column(query);
    const Vector v = llt_.matrixL().solve(k);
    PosteriorPrediction out;
    out.mean = offset_ + k.dot(alpha_);
    out.sd = std::sqrt(std::max(hyper_.signal_variance - v.squaredNorm(), 0.0));
    return out;
}

namespace {

double error_scale(const EvaluationLog& log) {
    if (log.size() < 2) return 1.0;
    const double v = sample_variance(log.errors);
    return v > 1e-12 ? v : 1.0;
}

struct LogBounds {
    Vector lo;
    Vector hi;
};

// theta = (log s2, log ell_1..D, log noise variance)
KernelHyperparams from_theta(const Vector& theta, int dims) {
    KernelHyperparams h;
    h.signal_variance = std::exp(theta(0));
    h.lengthscales = theta.segment(1, dims).array().exp();
    h.noise_precision = std::exp(-theta(dims + 1));
    return h;
}

double marginal_at(const std::vector<Matrix>& sqdiff, const Vector& centered, const Vector& theta,
                   int dims) {
    const KernelHyperparams h = from_theta(theta, dims);
    Matrix cov = matern52_covariance(sqdiff, h.signal_variance, h.lengthscales);
    cov.diagonal().array() += h.noise_variance();
    try {
        const Factorization f = factorize(cov);
        Vector alpha;
        return log_marginal(f.llt, centered, alpha);
    } catch (const Error&) {
        return -std::numeric_limits<double>::infinity();
    }
}

}  // namespace

KernelHyperparams default_hyperparams(const EvaluationLog& log, int dims) {
    KernelHyperparams h;
    h.signal_variance = error_scale(log);
    h.lengthscales = Vector::Constant(dims, 0.3);
    h.noise_precision = 1e4;
    return h;
}

GpFit fit_gp(const EvaluationLog& log) {
    require(log.size() >= 2, ErrorKind::invalid_argument, "fit_gp needs at least 2 records");
    const Matrix x = stack_rows(log.params);
    const Vector y = Eigen::Map<const Vector>(log.errors.data(), log.size());
    const int dims = static_cast<int>(x.cols());
    const double scale = error_scale(log);
    const std::vector<Matrix> sqdiff = squared_differences(x);
    const Vector centered = y.array() - y.mean();

    LogBounds b{Vector(dims + 2), Vector(dims + 2)};
    b.lo(0) = std::log(scale * 1e-4);
    b.hi(0) = std::log(scale * 1e2);
    b.lo.segment(1, dims).setConstant(std::log(1e-2));
    b.hi.segment(1, dims).setConstant(std::log(10.0));
    b.lo(dims + 1) = std::log(1e-10);
    b.hi(dims + 1) = std::log(scale * 10.0);

    GpFit out;
    out.log_marginal = -std::numeric_limits<double>::infinity();
    for (double ell : {0.1, 0.3, 1.0, 3.0}) {
        for (double noise_share : {0.01, 0.3}) {
            Vector theta(dims + 2);
            theta(0) = std::log(scale);
            theta.segment(1, dims).setConstant(std::log(ell));
            theta(dims + 1) = std::log(noise_share * scale);
            double value = marginal_at(sqdiff, centered, theta, dims);
            out.start_log_marginals.push_back(value);

            // coordinate search in log space: per-coordinate steps that double while a
            // direction keeps improving and halve when neither direction helps
            Vector step = Vector::Ones(dims + 2);
            for (int sweep = 0; sweep < 100 && step.maxCoeff() >= 0.05; ++sweep) {
                for (int j = 0; j < dims + 2; ++j) {
                    if (step(j) < 0.05) continue;
                    bool moved = false;
                    for (double sign : {1.0, -1.0}) {
                        for (;;) {
                            Vector trial = theta;
                            trial(j) = std::clamp(theta(j) + sign * step(j), b.lo(j), b.hi(j));
                            if (trial(j) == theta(j)) break;
                            const double v = marginal_at(sqdiff, centered, trial, dims);
                            if (!(v > value + 1e-6)) break;
                            value = v;
                            theta = trial;
                            moved = true;
                            step(j) = std::min(2.0 * step(j), 4.0);
                        }
                        if (moved) break;
                    }
                    if (!moved) step(j) *= 0.5;
                }
            }
            if (value > out.log_marginal) {
                out.log_marginal = value;
                out.hyper = from_theta(theta, dims);
            }
        }
    }
    require(std::isfinite(out.log_marginal), ErrorKind::numerical,
            "fit_gp: no start produced a factorizable covariance");
    return out;
}

void SearchStrategy::validate() const {
    require(c0 >= 0, ErrorKind::invalid_argument, "search.c0 must be >= 0");
    for (double p : {xi_rand, xi_pv, xi_pm}) {
        require(p >= 0 && p <= 1, ErrorKind::invalid_argument, "search.xi_* must lie in [0,1]");
    }
    require(xi_wei() >= -1e-12, ErrorKind::invalid_argument,
            "search.xi_rand + xi_pv + xi_pm must not exceed 1");
    require(cooling_base > 0 && cooling_base <= 1, ErrorKind::invalid_argument,
            "search.cooling_base must lie in (0,1]");
    require(r0 >= 0, ErrorKind::invalid_argument, "exploration radius must be >= 0");
}

std::string_view to_string(SearchBranch branch) {
    switch (branch) {
        case SearchBranch::initial: return "initial";
        case SearchBranch::random: return "random";
        case SearchBranch::max_variance: return "max-variance";
        case SearchBranch::min_mean: return "min-mean";
        case SearchBranch::weighted_ei: return "w-ei";
    }
    return "unknown";
}

namespace {

Vector uniform_point(int dims, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector x(dims);
    for (int d = 0; d < dims; ++d) x(d) = u(rng);
    return x;
}

}  // namespace

Vector maximize_in_box(const std::function<double(const Vector&)>& objective,
                       const Vector& incumbent, std::mt19937_64& rng,
                       const InnerSearchOptions& options, double& best_value) {
    const auto dims = static_cast<int>(incumbent.size());
    std::normal_distribution<double> gauss(0.0, options.perturbation_sd);
    std::vector<Vector> starts;
    for (int k = 0; k < options.uniform_starts; ++k) starts.push_back(uniform_point(dims, rng));
    for (int k = 0; k < options.perturbed_starts; ++k) {
        Vector x = incumbent;
        for (int d = 0; d < dims; ++d) x(d) = std::clamp(x(d) + gauss(rng), 0.0, 1.0);
        starts.push_back(std::move(x));
    }

    Vector best;
    best_value = -std::numeric_limits<double>::infinity();
    for (const Vector& start : starts) {
        Vector x = start;
        double fx = objective(x);
        double step = options.initial_step;
        for (int it = 0; it < options.max_iterations && step >= options.min_step; ++it) {
            bool moved = false;
            for (int d = 0; d < dims && !moved; ++d) {
                for (double sign : {1.0, -1.0}) {
                    Vector trial = x;
                    trial(d) = std::clamp(x(d) + sign * step, 0.0, 1.0);
                    if (trial(d) == x(d)) continue;
                    const double ft = objective(trial);
                    if (ft > fx) {
                        x = std::move(trial);
                        fx = ft;
                        moved = true;
                        break;
                    }
                }
            }
            if (!moved) step *= 0.5;
        }
        if (best.size() == 0 || fx > best_value) {
            best = x;
            best_value = fx;
        }
    }
    return best;
}

Proposal propose_with_branch(const EvaluationLog& log, const GaussianProcess& gp,
                             SearchBranch branch, double cooling_weight, int dims,
                             std::uint64_t seed, const InnerSearchOptions& inner) {
    std::mt19937_64 rng(seed);
    Proposal out;
    out.branch = branch;
    if (branch == SearchBranch::initial || branch == SearchBranch::random || gp.empty() || log.size() == 0) {
        out.point = uniform_point(dims, rng);
        return out;
    }
    const Vector incumbent = log.params[static_cast<std::size_t>(log.best_index())];
    const double best = log.best_error();
    std::function<double(const Vector&)> objective;
    switch (branch) {
        case SearchBranch::max_variance:
            objective = [&](const Vector& x) { return gp.predict(x).sd; };
            break;
        case SearchBranch::min_mean:
            objective = [&](const Vector& x) { return -gp.predict_mean(x); };
            break;
        default:
            objective = [&](const Vector& x) {
                const PosteriorPrediction p = gp.predict(x);
                return weighted_ei(p.mean, p.sd, best, cooling_weight);
            };
            break;
    }
    double value = 0.0;
    out.point = maximize_in_box(objective, incumbent, rng, inner, value);
    out.acquisition = branch == SearchBranch::min_mean ? -value : value;
    return out;
}

Proposal propose_next(const EvaluationLog& log, const GaussianProcess& gp,
                      const SearchStrategy& strategy, int c, int dims, std::uint64_t seed,
                      const InnerSearchOptions& inner) {
    if (c < strategy.c0 || (gp.empty() && !strategy.pure_random())) {
        return propose_with_branch(log, gp, SearchBranch::initial, 0.0, dims, seed, inner);
    }
    if (strategy.pure_random()) {
        return propose_with_branch(log, gp, SearchBranch::random, 0.0, dims, seed, inner);
    }
    std::mt19937_64 rng(derive_seed(seed, 0x78u));
    const double xi = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    SearchBranch branch = SearchBranch::weighted_ei;
    if (xi < strategy.xi_rand) {
        branch = SearchBranch::random;
    } else if (xi < strategy.xi_rand + strategy.xi_pv) {
        branch = SearchBranch::max_variance;
    } else if (xi < strategy.xi_rand + strategy.xi_pv + strategy.xi_pm) {
        branch = SearchBranch::min_mean;
    }
    return propose_with_branch(log, gp, branch, strategy.cooling_weight(c), dims, seed, inner);
}

Vector to_unit_box(const Matrix& values, const std::vector<Range>& ranges) {
    require(static_cast<std::size_t>(values.cols()) == ranges.size(), ErrorKind::dimension_mismatch,
            "one range per heterogeneous parameter required");
    Vector x(values.size());
    Eigen::Index j = 0;
    for (Eigen::Index k = 0; k < values.rows(); ++k) {
        for (Eigen::Index n = 0; n < values.cols(); ++n) {
            x(j++) = ranges[static_cast<std::size_t>(n)].normalize(values(k, n));
        }
    }
    return x;
}

Matrix from_unit_box(const Vector& point, int clusters, const std::vector<Range>& ranges) {
    const auto N = static_cast<Eigen::Index>(ranges.size());
    require(point.size() == clusters * N, ErrorKind::dimension_mismatch,
            "unit-box point does not match clusters x parameters");
    Matrix values(clusters, N);
    Eigen::Index j = 0;
    for (Eigen::Index k = 0; k < clusters; ++k) {
        for (Eigen::Index n = 0; n < N; ++n) {
            values(k, n) = ranges[static_cast<std::size_t>(n)].denormalize(point(j++));
        }
    }
    return values;
}

HeterogeneousState start_heterogeneous(int dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    HeterogeneousState state;
    state.next = uniform_point(dims, rng);
    state.next_branch = SearchBranch::initial;
    state.replication_seed = derive_seed(seed, 0x51u);
    return state;
}

HeterogeneousStepResult heterogeneous_calibration_step(const SummarySimulator& simulate,
                                                       HeterogeneousState& state,
                                                       const DynamicSchedule& dyn_best,
                                                       const HeterogeneousAssignment& het,
                                                       const Matrix& validation, int replications,
                                                       const SearchStrategy& strategy,
                                                       std::uint64_t seed) {
    require(replications >= 1, ErrorKind::invalid_argument, "R must be >= 1");
    strategy.validate();
    const int dims = static_cast<int>(state.next.size());
    require(dims == het.values.size(), ErrorKind::dimension_mismatch,
            "heterogeneous state dimension differs from the assignment");

    HeterogeneousStepResult out;
    out.branch = state.next_branch;
    out.evaluated = from_unit_box(state.next, het.num_clusters(), het.ranges);
    HeterogeneousAssignment trial = het;
    trial.values = out.evaluated;
    out.sim_mean = simulate(dyn_best, trial, replications, state.replication_seed).summary_mean;
    out.error = mape(out.sim_mean, validation).total;
    state.log.add(state.next, out.error);
    ++state.iteration;
    out.best_so_far = state.log.best_error();

    if (strategy.pure_random()) {
        state.gp = GaussianProcess();
        out.gp_loglik = std::numeric_limits<double>::quiet_NaN();
    } else {
        const KernelHyperparams hyper = state.log.size() >= kRefitThreshold
                                            ? fit_gp(state.log).hyper
                                            : default_hyperparams(state.log, dims);
        const Vector y = Eigen::Map<const Vector>(state.log.errors.data(), state.log.size());
        state.gp = GaussianProcess(stack_rows(state.log.params), y, hyper);
        out.gp_loglik = state.gp.log_marginal_likelihood();
    }

    out.next = propose_next(state.log, state.gp, strategy, state.iteration, dims,
                            derive_seed(seed, 0x7072u));
    state.next = out.next.point;
    state.next_branch = out.next.branch;
    return out;
}

void write_heterogeneous_log_header(std::ostream& os, int dims) {
    os << "iter,branch";
    for (int d = 1; d <= dims; ++d) os << ",param_" << d;
    os << ",error,best_so_far,gp_loglik\n";
}

void append_heterogeneous_log(std::ostream& os, int iteration, const HeterogeneousStepResult& step) {
    os << iteration << ',' << to_string(step.branch);
    for (Eigen::Index k = 0; k < step.evaluated.rows(); ++k) {
        for (Eigen::Index n = 0; n < step.evaluated.cols(); ++n) os << ',' << format_number(step.evaluated(k, n));
    }
    os << ',' << format_number(step.error) << ',' << format_number(step.best_so_far) << ','
       << format_number(step.gp_loglik) << '\n';
}

}  // namespace abmcal
