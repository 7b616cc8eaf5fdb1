#include "abmcal/hmm.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "abmcal/kmeans_init.hpp"
#include "abmcal/stats.hpp"

namespace abmcal {

namespace {

Matrix log_emissions(const GaussianHmm& model, const Matrix& obs) {
    const auto T = obs.rows();
    const int K = model.num_states();
    Matrix out(T, K);
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    for (int k = 0; k < K; ++k) {
        const Eigen::RowVectorXd mu = model.means.row(k);
        const Eigen::RowVectorXd var = model.variances.row(k);
        const double norm = -0.5 * (var.array().log().sum() + log_2pi * static_cast<double>(var.size()));
        out.col(k) = ((obs.rowwise() - mu).array().square().rowwise() / var.array())
                         .rowwise()
                         .sum()
                         .matrix() * -0.5;
        out.col(k).array() += norm;
    }
    return out;
}

struct Posterior {
    Matrix gamma;   // T x K
    Matrix xi_sum;  // K x K
    double log_likelihood = 0.0;
};

Posterior forward_backward(const GaussianHmm& model, const Matrix& obs) {
    const auto T = obs.rows();
    const int K = model.num_states();
    const Matrix logb = log_emissions(model, obs);
    Matrix b(T, K);
    Vector shift(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        shift(t) = logb.row(t).maxCoeff();
        b.row(t) = (logb.row(t).array() - shift(t)).exp();
    }

    constexpr double tiny = std::numeric_limits<double>::min();
    Matrix alpha(T, K);
    Vector scale(T);
    alpha.row(0) = model.initial.transpose().cwiseProduct(b.row(0));
    for (Eigen::Index t = 0;; ++t) {
        scale(t) = std::max(alpha.row(t).sum(), tiny);
        alpha.row(t) /= scale(t);
        if (t + 1 == T) break;
        alpha.row(t + 1) = (alpha.row(t) * model.transition).cwiseProduct(b.row(t + 1));
    }

    Matrix beta(T, K);
    beta.row(T - 1).setOnes();
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        const Eigen::RowVectorXd next = b.row(t + 1).cwiseProduct(beta.row(t + 1)) / scale(t + 1);
        beta.row(t) = (model.transition * next.transpose()).transpose();
    }

    Posterior post;
    post.log_likelihood = scale.array().log().sum() + shift.sum();
    post.gamma = alpha.cwiseProduct(beta);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double s = post.gamma.row(t).sum();
        if (s > 0.0) post.gamma.row(t) /= s;
    }
    post.xi_sum = Matrix::Zero(K, K);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        const Eigen::RowVectorXd next = b.row(t + 1).cwiseProduct(beta.row(t + 1)) / scale(t + 1);
        post.xi_sum += (alpha.row(t).transpose() * next).cwiseProduct(model.transition);
    }
    return post;
}

// Returns true when some variance hit the floor.
bool m_step(GaussianHmm& model, const Posterior& post, const Matrix& obs, double variance_floor) {
    const int K = model.num_states();
    bool floored = false;
    model.initial = post.gamma.row(0).transpose();
    for (int i = 0; i < K; ++i) {
        const double row = post.xi_sum.row(i).sum();
        if (row > 0.0) model.transition.row(i) = post.xi_sum.row(i) / row;
    }
    for (int k = 0; k < K; ++k) {
        const double w = post.gamma.col(k).sum();
        if (w < 1e-300) continue;  // unvisited state keeps its parameters
        const Eigen::RowVectorXd mu = (post.gamma.col(k).transpose() * obs) / w;
        const Matrix centered = obs.rowwise() - mu;
        Eigen::RowVectorXd var =
            (post.gamma.col(k).transpose() * centered.array().square().matrix()) / w;
        for (Eigen::Index s = 0; s < var.size(); ++s) {
            if (!(var(s) >= variance_floor)) {
                var(s) = variance_floor;
                floored = true;
            }
        }
        model.means.row(k) = mu;
        model.variances.row(k) = var;
    }
    return floored;
}

GaussianHmm initial_model(const Matrix& obs, int K, std::mt19937_64& rng, const HmmOptions& opt,
                          bool& floored) {
    GaussianHmm m;
    m.initial = Vector::Constant(K, 1.0 / K);
    if (K == 1) {
        m.transition = Matrix::Ones(1, 1);
    } else {
        m.transition = Matrix::Constant(K, K, (1.0 - opt.self_transition) / (K - 1));
        m.transition.diagonal().setConstant(opt.self_transition);
    }
    const std::vector<int> centers = kmeans_plus_plus(obs, K, rng);
    m.means.resize(K, obs.cols());
    for (int k = 0; k < K; ++k) m.means.row(k) = obs.row(centers[static_cast<std::size_t>(k)]);
    const Eigen::RowVectorXd mean = obs.colwise().mean();
    Eigen::RowVectorXd var =
        (obs.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(obs.rows());
    for (Eigen::Index s = 0; s < var.size(); ++s) {
        if (!(var(s) >= opt.variance_floor)) {
            var(s) = opt.variance_floor;
            floored = true;
        }
    }
    m.variances = var.replicate(K, 1);
    return m;
}

}  // namespace

double hmm_log_likelihood(const GaussianHmm& model, const Matrix& observations) {
    return forward_backward(model, observations).log_likelihood;
}

std::vector<int> viterbi(const GaussianHmm& model, const Matrix& observations) {
    const auto T = observations.rows();
    const int K = model.num_states();
    const Matrix logb = log_emissions(model, observations);
    const Matrix log_a = model.transition.array().log();
    Matrix delta(T, K);
    Eigen::MatrixXi back(T, K);
    delta.row(0) = model.initial.array().log().transpose() + logb.row(0).array();
    for (Eigen::Index t = 1; t < T; ++t) {
        for (int j = 0; j < K; ++j) {
            Eigen::Index arg = 0;
            const double best = (delta.row(t - 1).transpose() + log_a.col(j)).maxCoeff(&arg);
            delta(t, j) = best + logb(t, j);
            back(t, j) = static_cast<int>(arg);
        }
    }
    std::vector<int> path(static_cast<std::size_t>(T));
    Eigen::Index last = 0;
    delta.row(T - 1).maxCoeff(&last);
    path[static_cast<std::size_t>(T - 1)] = static_cast<int>(last);
    for (Eigen::Index t = T - 1; t > 0; --t) {
        path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
    }
    return path;
}

HmmFit fit_hmm(const Matrix& observations, int num_states, std::uint64_t seed,
               const HmmOptions& options) {
    require(num_states >= 1, ErrorKind::invalid_argument, "HMM needs at least one state");
    require(observations.rows() >= num_states, ErrorKind::invalid_argument,
            "HMM needs T >= K observations");
    require(observations.allFinite(), ErrorKind::numerical, "HMM observations must be finite");

    HmmFit best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    bool have_best = false;
    for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(restart)));
        bool floored = false;
        GaussianHmm model = initial_model(observations, num_states, rng, options, floored);
        std::vector<double> trace;
        double ll = -std::numeric_limits<double>::infinity();
        int it = 0;
        for (;; ++it) {
            const Posterior post = forward_backward(model, observations);
            const double prev = ll;
            ll = post.log_likelihood;
            trace.push_back(ll);
            if (it > 0 && ll - prev < options.tolerance) break;
            if (it + 1 >= options.max_iterations) break;
            floored = m_step(model, post, observations, options.variance_floor) || floored;
        }
        if (!have_best || ll > best.log_likelihood) {
            have_best = true;
            best.model = std::move(model);
            best.log_likelihood = ll;
            best.log_likelihood_trace = std::move(trace);
            best.variance_floored = floored;
            best.iterations = it;
        }
    }
    best.labels = viterbi(best.model, observations);
    return best;
}

}  // namespace abmcal
