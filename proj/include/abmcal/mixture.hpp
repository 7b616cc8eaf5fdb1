#pragma once

// Clustering of latent codes: diagonal Gaussian mixture by EM and a Dirichlet
// process mixture by collapsed Gibbs sampling. Labels are 0-based.

#include <cstdint>
#include <vector>

#include "abmcal/common.hpp"
#include "abmcal/wealth_model.hpp"

namespace abmcal {

enum class MixtureKind { parametric, nonparametric };

struct MixtureModel {
    MixtureKind kind = MixtureKind::parametric;
    Vector weights;     // K
    Matrix means;       // K x H
    Matrix variances;   // K x H
    std::vector<int> assignments;  // one per agent, 0..K-1
    double concentration = 0.0;    // nonparametric only
    // EM: log-likelihood after every E-step of the kept restart.
    // Gibbs: joint log posterior after every sweep.
    std::vector<double> score_trace;
    double best_score = 0.0;

    int num_components() const { return static_cast<int>(weights.size()); }
};

inline constexpr double kGmmVarianceFloor = 1e-6;
inline constexpr double kGmmTolerance = 1e-6;
inline constexpr int kGmmMaxIterations = 300;
inline constexpr int kGmmRestarts = 5;

/// Diagonal GMM by EM; k-means++ starts, best of kGmmRestarts by final log-likelihood.
MixtureModel fit_gmm(const Matrix& codes, int k, std::uint64_t seed);

/// Log-likelihood of every row under a mixture (diagonal Gaussians).
Vector mixture_point_log_likelihood(const MixtureModel& model, const Matrix& codes);

struct NigPrior {
    double mu0 = 0.0;
    double kappa0 = 0.01;
    double a0 = 1.0;
    double b0 = 1.0;
};

/// Collapsed Gibbs over standardized codes; returns the sweep with the highest joint
/// posterior. Components are reported in the original code units.
MixtureModel fit_dpmm(const Matrix& codes, double gamma, int iterations, std::uint64_t seed,
                      const NigPrior& prior = {});

/// log p(z) + sum_k log p(x_k) for a labeling of standardized data.
double dpmm_log_joint(const Matrix& standardized, const std::vector<int>& labels, double gamma,
                      const NigPrior& prior);

/// K_het = mixture K; every row of the values matrix set to `init_values`
/// (range midpoints when empty).
HeterogeneousAssignment build_assignment(const MixtureModel& mix, const std::vector<Range>& het_ranges,
                                         const Vector& init_values = Vector());

}  // namespace abmcal
