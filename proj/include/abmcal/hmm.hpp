#pragma once

// Hidden Markov model with diagonal Gaussian emissions, fit by Baum-Welch
// (scaled forward-backward) and decoded by Viterbi.

#include <cstdint>
#include <vector>

#include "abmcal/common.hpp"

namespace abmcal {

struct GaussianHmm {
    Vector initial;     // K
    Matrix transition;  // K x K, rows sum to 1
    Matrix means;       // K x S
    Matrix variances;   // K x S, > 0

    int num_states() const { return static_cast<int>(initial.size()); }
};

struct HmmOptions {
    int restarts = 5;
    int max_iterations = 200;
    double tolerance = 1e-6;
    double variance_floor = 1e-6;
    double self_transition = 0.8;  // initial diagonal of the transition matrix
};

struct HmmFit {
    GaussianHmm model;
    std::vector<int> labels;  // Viterbi path, 0-based states
    double log_likelihood = 0.0;
    // Log-likelihood before each M-step of the kept restart; non-decreasing.
    std::vector<double> log_likelihood_trace;
    bool variance_floored = false;
    int iterations = 0;
};

/// Fits a K-state HMM to the rows of `observations` (T x S), keeping the best of
/// `options.restarts` k-means++ initializations.
HmmFit fit_hmm(const Matrix& observations, int num_states, std::uint64_t seed,
               const HmmOptions& options = {});

double hmm_log_likelihood(const GaussianHmm& model, const Matrix& observations);

std::vector<int> viterbi(const GaussianHmm& model, const Matrix& observations);

}  // namespace abmcal
