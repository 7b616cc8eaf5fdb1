#include "abmcal/regime.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <ostream>
#include <random>

#include "abmcal/csv.hpp"
#include "abmcal/stats.hpp"

namespace abmcal {

GenerationRule parse_generation_rule(std::string_view name) {
    if (name == "by-time") return GenerationRule::by_time;
    if (name == "by-regime") return GenerationRule::by_regime;
    if (name == "mode-selection") return GenerationRule::mode_selection;
    if (name == "random") return GenerationRule::random;
    fail(ErrorKind::invalid_argument, "unknown generation rule '" + std::string(name) +
                                          "' (by-time|by-regime|mode-selection|random)");
}

std::string_view to_string(GenerationRule rule) {
    switch (rule) {
        case GenerationRule::by_time: return "by-time";
        case GenerationRule::by_regime: return "by-regime";
        case GenerationRule::mode_selection: return "mode-selection";
        case GenerationRule::random: return "random";
    }
    return "unknown";
}

CandidateSet random_candidates(int count, const std::vector<Range>& ranges, int horizon,
                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CandidateSet set;
    for (int i = 0; i < count; ++i) {
        DynamicSchedule s;
        s.ranges = ranges;
        s.values.resize(static_cast<Eigen::Index>(ranges.size()), horizon);
        for (Eigen::Index n = 0; n < s.values.rows(); ++n) {
            for (int t = 0; t < horizon; ++t) {
                s.values(n, t) = ranges[static_cast<std::size_t>(n)].denormalize(u(rng));
            }
        }
        set.candidates.push_back(std::move(s));
    }
    return set;
}

LikelihoodMatrix compute_likelihoods(const std::vector<Matrix>& sim_means, const Matrix& validation) {
    require(!sim_means.empty(), ErrorKind::invalid_argument, "no candidates to score");
    const auto T = validation.cols();
    LikelihoodMatrix out;
    out.log_joint.resize(T, static_cast<Eigen::Index>(sim_means.size()));
    for (std::size_t i = 0; i < sim_means.size(); ++i) {
        const Matrix& mu = sim_means[i];
        require(mu.rows() == validation.rows() && mu.cols() == T, ErrorKind::dimension_mismatch,
                "simulation mean and validation shapes differ");
        Matrix sd = (mu.array().abs() * kLikelihoodSdRatio).max(kLikelihoodSdFloor);
        Matrix logp(mu.rows(), T);
        for (Eigen::Index s = 0; s < mu.rows(); ++s) {
            for (Eigen::Index t = 0; t < T; ++t) {
                logp(s, t) = normal_log_pdf(validation(s, t), mu(s, t), sd(s, t));
            }
        }
        out.log_joint.col(static_cast<Eigen::Index>(i)) = logp.colwise().sum().transpose();
        out.log_per_stat.push_back(std::move(logp));
        out.sim_mean.push_back(mu);
        out.sim_sd.push_back(std::move(sd));
    }
    return out;
}

RegimeLabeling detect_regimes(const std::vector<Matrix>& sim_means, const Matrix& validation,
                              int num_regimes, std::uint64_t seed, const HmmOptions& options) {
    RegimeLabeling out;
    const auto T = validation.cols();
    out.labels.resize(T, static_cast<Eigen::Index>(sim_means.size()));
    for (std::size_t i = 0; i < sim_means.size(); ++i) {
        const Matrix deviations = (sim_means[i] - validation).transpose();  // T x S
        HmmFit fit = fit_hmm(deviations, num_regimes, derive_seed(seed, i), options);
        for (Eigen::Index t = 0; t < T; ++t) {
            out.labels(t, static_cast<Eigen::Index>(i)) = fit.labels[static_cast<std::size_t>(t)];
        }
        out.fits.push_back(std::move(fit));
    }
    return out;
}

MergedRegimes merge_regimes(const Eigen::MatrixXi& labels) {
    MergedRegimes out;
    std::map<std::vector<int>, int> index;
    out.block_of_time.resize(static_cast<std::size_t>(labels.rows()));
    for (Eigen::Index t = 0; t < labels.rows(); ++t) {
        std::vector<int> sig(labels.row(t).begin(), labels.row(t).end());
        auto [it, inserted] = index.try_emplace(sig, out.size());
        if (inserted) {
            out.blocks.emplace_back();
            out.signatures.push_back(std::move(sig));
        }
        out.blocks[static_cast<std::size_t>(it->second)].push_back(static_cast<int>(t));
        out.block_of_time[static_cast<std::size_t>(t)] = it->second;
    }
    return out;
}

bool detect_poor_fit(const Matrix& log_joint, std::span<const int> block, int iteration) {
    require(!block.empty(), ErrorKind::invalid_argument, "poor-fit check on an empty block");
    const double ratio = poor_fit_ratio(iteration);
    for (Eigen::Index i = 0; i < log_joint.cols(); ++i) {
        const double lo = log_joint.col(i).minCoeff();
        const double hi = log_joint.col(i).maxCoeff();
        // log((e^lo + ratio e^hi) / (1 + ratio)), never above hi
        double threshold = hi;
        if (lo < hi) {
            threshold = std::min(hi, hi + std::log(std::exp(lo - hi) + ratio) - std::log1p(ratio));
        }
        for (int t : block) {
            if (!(log_joint(t, i) < threshold)) return false;
        }
    }
    return true;
}

RegimePosteriors fit_regime_posteriors(const CandidateSet& candidates,
                                       const LikelihoodMatrix& likelihoods,
                                       const MergedRegimes& merged, int iteration) {
    require(candidates.size() == likelihoods.log_joint.cols(), ErrorKind::dimension_mismatch,
            "candidate count differs from likelihood columns");
    const int I = candidates.size();
    const int N = candidates.candidates.front().num_params();
    RegimePosteriors out;
    out.by_param.assign(static_cast<std::size_t>(N), {});
    for (int u = 0; u < merged.size(); ++u) {
        const auto& block = merged.blocks[static_cast<std::size_t>(u)];
        const bool poor = detect_poor_fit(likelihoods.log_joint, block, iteration);
        out.poor_fit.push_back(poor);

        std::vector<double> weights;
        weights.reserve(block.size() * static_cast<std::size_t>(I));
        Vector logw(static_cast<Eigen::Index>(block.size()) * I);
        Eigen::Index j = 0;
        for (int i = 0; i < I; ++i) {
            for (int t : block) logw(j++) = likelihoods.log_joint(t, i);
        }
        if (poor) {
            weights.assign(static_cast<std::size_t>(logw.size()), 1.0 / static_cast<double>(logw.size()));
        } else {
            const double lse = log_sum_exp(logw);
            for (Eigen::Index k = 0; k < logw.size(); ++k) weights.push_back(std::exp(logw(k) - lse));
        }

        for (int n = 0; n < N; ++n) {
            std::vector<double> values;
            values.reserve(weights.size());
            for (int i = 0; i < I; ++i) {
                const DynamicSchedule& s = candidates.candidates[static_cast<std::size_t>(i)];
                const Range& r = s.ranges[static_cast<std::size_t>(n)];
                for (int t : block) values.push_back(r.normalize(s.values(n, t)));
            }
            out.by_param[static_cast<std::size_t>(n)].push_back(fit_beta(values, weights));
        }
    }
    return out;
}

CandidateSet generate_next(const RegimePosteriors& posteriors, const MergedRegimes& merged,
                           GenerationRule rule, int num_candidates,
                           const std::vector<Range>& ranges, int horizon, std::uint64_t seed) {
    require(posteriors.by_param.size() == ranges.size(), ErrorKind::dimension_mismatch,
            "posteriors and ranges disagree on the number of dynamic parameters");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const auto N = static_cast<int>(ranges.size());

    CandidateSet next;
    for (int i = 0; i < num_candidates; ++i) {
        DynamicSchedule s;
        s.ranges = ranges;
        s.values.resize(N, horizon);
        next.candidates.push_back(std::move(s));
    }
    for (int n = 0; n < N; ++n) {
        const Range& range = ranges[static_cast<std::size_t>(n)];
        const auto& post = posteriors.by_param[static_cast<std::size_t>(n)];
        require(static_cast<int>(post.size()) == merged.size(), ErrorKind::dimension_mismatch,
                "one posterior per merged regime required");
        for (int u = 0; u < merged.size(); ++u) {
            const BetaPosterior& beta = post[static_cast<std::size_t>(u)];
            const auto& block = merged.blocks[static_cast<std::size_t>(u)];
            for (int i = 0; i < num_candidates; ++i) {
                Matrix& values = next.candidates[static_cast<std::size_t>(i)].values;
                switch (rule) {
                    case GenerationRule::by_time:
                        for (int t : block) values(n, t) = range.denormalize(sample_beta(beta, rng));
                        break;
                    case GenerationRule::by_regime: {
                        const double v = range.denormalize(sample_beta(beta, rng));
                        for (int t : block) values(n, t) = v;
                        break;
                    }
                    case GenerationRule::mode_selection: {
                        const double offset = i - (num_candidates - 1) / 2.0;
                        const double x = std::clamp(beta.mean() + offset * beta.sd(), 0.0, 1.0);
                        for (int t : block) values(n, t) = range.denormalize(x);
                        break;
                    }
                    case GenerationRule::random:
                        // every regime treated as poorly fitted: Beta(1,1) per timestep
                        for (int t : block) values(n, t) = range.denormalize(uniform(rng));
                        break;
                }
            }
        }
    }
    return next;
}

DynamicStepResult dynamic_calibration_step(const SummarySimulator& simulate,
                                           const CandidateSet& candidates,
                                           const HeterogeneousAssignment& het,
                                           const Matrix& validation,
                                           const DynamicStepOptions& options, std::uint64_t seed) {
    require(options.replications >= 1, ErrorKind::invalid_argument, "R must be >= 1");
    require(candidates.size() >= 1, ErrorKind::invalid_argument, "empty candidate set");
    const std::uint64_t sim_seed = derive_seed(seed, 0x51u);
    const std::uint64_t hmm_seed = derive_seed(seed, 0x4d4du);
    const std::uint64_t gen_seed = derive_seed(seed, 0x6e6eu);

    DynamicStepResult out;
    out.evaluated = candidates;
    std::vector<Matrix> means;
    means.reserve(static_cast<std::size_t>(candidates.size()));
    for (const DynamicSchedule& s : candidates.candidates) {
        means.push_back(simulate(s, het, options.replications, sim_seed).summary_mean);
    }
    out.likelihoods = compute_likelihoods(means, validation);
    out.neg_log_likelihood = -out.likelihoods.log_joint.colwise().sum().transpose();
    out.regimes = detect_regimes(means, validation, options.num_regimes, hmm_seed, options.hmm);
    out.merged = merge_regimes(out.regimes.labels);
    out.posteriors = fit_regime_posteriors(candidates, out.likelihoods, out.merged, candidates.iteration);
    const DynamicSchedule& first = candidates.candidates.front();
    out.next = generate_next(out.posteriors, out.merged, options.rule, candidates.size(),
                             first.ranges, first.horizon(), gen_seed);
    out.next.iteration = candidates.iteration + 1;
    return out;
}

void write_dynamic_log_header(std::ostream& os) {
    os << "iter,candidate,neg_log_lik,regime_signature,param,block,alpha,beta\n";
}

void append_dynamic_log(std::ostream& os, int iteration, const DynamicStepResult& step) {
    for (int i = 0; i < step.evaluated.size(); ++i) {
        for (std::size_t n = 0; n < step.posteriors.by_param.size(); ++n) {
            for (int u = 0; u < step.merged.size(); ++u) {
                std::string sig;
                for (int label : step.merged.signatures[static_cast<std::size_t>(u)]) {
                    if (!sig.empty()) sig += '-';
                    sig += std::to_string(label);
                }
                const BetaPosterior& b = step.posteriors.by_param[n][static_cast<std::size_t>(u)];
                os << iteration << ',' << i << ',' << format_number(step.neg_log_likelihood(i)) << ','
                   << sig << ',' << n << ',' << u << ',' << format_number(b.alpha) << ','
                   << format_number(b.beta) << '\n';
            }
        }
    }
}

}  // namespace abmcal
