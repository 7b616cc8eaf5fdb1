#pragma once

// Variational autoencoder over per-agent trajectories: two tanh hidden layers in
// the encoder and decoder, diagonal Gaussian posterior, unit-variance Gaussian
// reconstruction. Gradients are exact backpropagation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <type_traits>
#include <vector>

#include "abmcal/common.hpp"
#include "abmcal/wealth_model.hpp"

namespace abmcal {

/// KL(N(mu, exp(logvar)) || N(0, I)) = 1/2 sum(mu^2 + exp(logvar) - 1 - logvar).
template <typename DerivedM, typename DerivedV>
typename DerivedM::Scalar gaussian_kl(const Eigen::MatrixBase<DerivedM>& mean,
                                      const Eigen::MatrixBase<DerivedV>& log_variance) {
    using Scalar = typename DerivedM::Scalar;
    return Scalar(0.5) * (mean.array().square() + log_variance.array().exp() - Scalar(1) -
                          log_variance.array())
                             .sum();
}

struct VaeShape {
    int input = 0;
    int hidden = 32;
    int latent = 4;

    Eigen::Index num_params() const;
};

enum class VaeNormalization {
    minmax_per_attribute,  // (x - min) / (max - min) over all agents and timesteps of an attribute
    standardize_features,  // z-score of every (attribute, timestep) column
};

struct VaeOptions {
    int latent = 4;
    int hidden = 32;
    int epochs = 200;
    int batch_size = 32;
    double learning_rate = 1e-3;
    int plateau_epochs = 10;  // halve the step after this many epochs without improvement
    VaeNormalization normalization = VaeNormalization::minmax_per_attribute;
};

/// Weights packed into one vector; the layout is fixed by VaeShape.
class VaeNetwork {
public:
    VaeNetwork() = default;
    explicit VaeNetwork(const VaeShape& shape);

    const VaeShape& shape() const { return shape_; }
    Vector& params() { return params_; }
    const Vector& params() const { return params_; }

    void initialize(std::uint64_t seed);

    /// Encoder mean and log-variance for the columns of `x` (input x B).
    void encode(const Matrix& x, Matrix& mean, Matrix& log_variance) const;
    /// Decoder output for latent columns.
    Matrix decode(const Matrix& z) const;

    /// Batch-mean negative ELBO (without the Gaussian constant) for the columns of
    /// `x` with reparameterization noise `eps` (latent x B); fills `gradient`.
    double loss_and_gradient(const Matrix& x, const Matrix& eps, Vector& gradient) const;
    double loss(const Matrix& x, const Matrix& eps) const;

private:
    VaeShape shape_;
    Vector params_;
};

struct VaeModel {
    VaeNetwork network;
    int attributes = 1;
    Vector feature_offset;  // per input column
    Vector feature_scale;   // 1 when degenerate
    std::vector<double> elbo_per_epoch;  // mean per agent, includes the Gaussian constant
    std::vector<double> learning_rate_per_epoch;
};

/// Per-column offset and scale for the chosen normalization.
void normalization_constants(const AgentTrace& traces, VaeNormalization kind, Vector& offset,
                             Vector& scale);
/// (x - offset) / scale per input column; rows are agents.
Matrix normalize_traces(const AgentTrace& traces, const Vector& feature_offset,
                        const Vector& feature_scale);

VaeModel train_vae(const AgentTrace& traces, const VaeOptions& options, std::uint64_t seed);

/// Posterior means, one row per agent (no sampling).
Matrix encode(const VaeModel& model, const AgentTrace& traces);

/// Text file of four CSV rows: `shape,P,M,H,attributes`, `feature_offset,...`,
/// `feature_scale,...` and `params,...` (all weights in the fixed block order).
void save_vae(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_vae(const std::filesystem::path& path);

}  // namespace abmcal
