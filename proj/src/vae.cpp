#include "abmcal/vae.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "abmcal/csv.hpp"

namespace abmcal {

namespace {

// Block order inside the parameter vector.
enum Block { W1, B1, W2, B2, WMU, BMU, WLV, BLV, D1, C1, D2, C2, D3, C3, kNumBlocks };

struct BlockDims {
    Eigen::Index rows;
    Eigen::Index cols;
};

std::array<BlockDims, kNumBlocks> block_dims(const VaeShape& s) {
    const Eigen::Index P = s.input, M = s.hidden, H = s.latent;
    return {{{M, P}, {M, 1}, {M, M}, {M, 1}, {H, M}, {H, 1}, {H, M}, {H, 1},
             {M, H}, {M, 1}, {M, M}, {M, 1}, {P, M}, {P, 1}}};
}

template <typename Scalar>
struct Blocks {
    using Map = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const Matrix, Matrix>>;
    std::vector<Map> m;

    Blocks(const VaeShape& shape, Scalar* data) {
        Eigen::Index offset = 0;
        for (const BlockDims& d : block_dims(shape)) {
            m.emplace_back(data + offset, d.rows, d.cols);
            offset += d.rows * d.cols;
        }
    }
    const Map& operator[](int b) const { return m[static_cast<std::size_t>(b)]; }
    Map& operator[](int b) { return m[static_cast<std::size_t>(b)]; }
};

Matrix tanh_of(const Matrix& a) { return a.array().tanh().matrix(); }

Matrix affine(const Matrix& w, const Matrix& bias, const Matrix& x) {
    return (w * x).colwise() + bias.col(0);
}

}  // namespace

Eigen::Index VaeShape::num_params() const {
    Eigen::Index n = 0;
    for (const BlockDims& d : block_dims(*this)) n += d.rows * d.cols;
    return n;
}

VaeNetwork::VaeNetwork(const VaeShape& shape) : shape_(shape), params_(Vector::Zero(shape.num_params())) {
    require(shape.input > 0 && shape.hidden > 0 && shape.latent > 0, ErrorKind::invalid_argument,
            "VAE layer sizes must be positive");
}

void VaeNetwork::initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Blocks<double> b(shape_, params_.data());
    for (int k = 0; k < kNumBlocks; ++k) {
        if (b[k].cols() == 1) {
            b[k].setZero();
            continue;
        }
        // Glorot uniform
        const double limit = std::sqrt(6.0 / static_cast<double>(b[k].rows() + b[k].cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index j = 0; j < b[k].cols(); ++j) {
            for (Eigen::Index i = 0; i < b[k].rows(); ++i) b[k](i, j) = u(rng);
        }
    }
}

void VaeNetwork::encode(const Matrix& x, Matrix& mean, Matrix& log_variance) const {
    require(x.rows() == shape_.input, ErrorKind::dimension_mismatch, "VAE input dimension mismatch");
    Blocks<const double> b(shape_, params_.data());
    const Matrix h1 = tanh_of(affine(b[W1], b[B1], x));
    const Matrix h2 = tanh_of(affine(b[W2], b[B2], h1));
    mean = affine(b[WMU], b[BMU], h2);
    log_variance = affine(b[WLV], b[BLV], h2);
}

Matrix VaeNetwork::decode(const Matrix& z) const {
    require(z.rows() == shape_.latent, ErrorKind::dimension_mismatch, "VAE latent dimension mismatch");
    Blocks<const double> b(shape_, params_.data());
    const Matrix g1 = tanh_of(affine(b[D1], b[C1], z));
    const Matrix g2 = tanh_of(affine(b[D2], b[C2], g1));
    return affine(b[D3], b[C3], g2);
}

double VaeNetwork::loss(const Matrix& x, const Matrix& eps) const {
    Matrix mean, logvar;
    encode(x, mean, logvar);
    const Matrix z = mean + (0.5 * logvar.array()).exp().matrix().cwiseProduct(eps);
    const Matrix recon = decode(z);
    const double rec = 0.5 * (recon - x).squaredNorm();
    return (rec + gaussian_kl(mean, logvar)) / static_cast<double>(x.cols());
}

double VaeNetwork::loss_and_gradient(const Matrix& x, const Matrix& eps, Vector& gradient) const {
    require(x.rows() == shape_.input && eps.rows() == shape_.latent && eps.cols() == x.cols(),
            ErrorKind::dimension_mismatch, "VAE batch shapes mismatch");
    Blocks<const double> b(shape_, params_.data());
    const double inv_b = 1.0 / static_cast<double>(x.cols());

    // forward
    const Matrix h1 = tanh_of(affine(b[W1], b[B1], x));
    const Matrix h2 = tanh_of(affine(b[W2], b[B2], h1));
    const Matrix mean = affine(b[WMU], b[BMU], h2);
    const Matrix logvar = affine(b[WLV], b[BLV], h2);
    const Matrix sd = (0.5 * logvar.array()).exp().matrix();
    const Matrix z = mean + sd.cwiseProduct(eps);
    const Matrix g1 = tanh_of(affine(b[D1], b[C1], z));
    const Matrix g2 = tanh_of(affine(b[D2], b[C2], g1));
    const Matrix recon = affine(b[D3], b[C3], g2);
    const Matrix dx = (recon - x) * inv_b;
    const double value = (0.5 * (recon - x).squaredNorm() + gaussian_kl(mean, logvar)) * inv_b;

    // backward
    gradient.setZero(params_.size());
    Blocks<double> g(shape_, gradient.data());
    g[D3] = dx * g2.transpose();
    g[C3] = dx.rowwise().sum();
    const Matrix dd2 = (b[D3].transpose() * dx).cwiseProduct((1.0 - g2.array().square()).matrix());
    g[D2] = dd2 * g1.transpose();
    g[C2] = dd2.rowwise().sum();
    const Matrix dd1 = (b[D2].transpose() * dd2).cwiseProduct((1.0 - g1.array().square()).matrix());
    g[D1] = dd1 * z.transpose();
    g[C1] = dd1.rowwise().sum();
    const Matrix dz = b[D1].transpose() * dd1;

    const Matrix dmean = dz + mean * inv_b;
    const Matrix dlogvar = (0.5 * dz.array() * eps.array() * sd.array() +
                            0.5 * inv_b * (logvar.array().exp() - 1.0))
                               .matrix();
    g[WMU] = dmean * h2.transpose();
    g[BMU] = dmean.rowwise().sum();
    g[WLV] = dlogvar * h2.transpose();
    g[BLV] = dlogvar.rowwise().sum();
    const Matrix da2 = (b[WMU].transpose() * dmean + b[WLV].transpose() * dlogvar)
                           .cwiseProduct((1.0 - h2.array().square()).matrix());
    g[W2] = da2 * h1.transpose();
    g[B2] = da2.rowwise().sum();
    const Matrix da1 = (b[W2].transpose() * da2).cwiseProduct((1.0 - h1.array().square()).matrix());
    g[W1] = da1 * x.transpose();
    g[B1] = da1.rowwise().sum();
    return value;
}

void normalization_constants(const AgentTrace& traces, VaeNormalization kind, Vector& offset,
                             Vector& scale) {
    const Eigen::Index P = traces.values.cols();
    offset.resize(P);
    scale.resize(P);
    if (kind == VaeNormalization::standardize_features) {
        offset = traces.values.colwise().mean().transpose();
        for (Eigen::Index j = 0; j < P; ++j) {
            const double sd = std::sqrt((traces.values.col(j).array() - offset(j)).square().mean());
            scale(j) = sd > 1e-12 ? sd : 1.0;
        }
        return;
    }
    const int T = traces.horizon();
    for (int k = 0; k < traces.attributes; ++k) {
        const auto block = traces.values.middleCols(k * T, T);
        const double lo = block.minCoeff();
        const double width = block.maxCoeff() - lo;
        offset.segment(k * T, T).setConstant(lo);
        scale.segment(k * T, T).setConstant(width > 0 ? width : 1.0);
    }
}

Matrix normalize_traces(const AgentTrace& traces, const Vector& feature_offset,
                        const Vector& feature_scale) {
    require(feature_offset.size() == traces.values.cols() && feature_scale.size() == traces.values.cols(),
            ErrorKind::dimension_mismatch, "normalize_traces: feature count mismatch");
    return ((traces.values.rowwise() - feature_offset.transpose()).array().rowwise() /
            feature_scale.transpose().array())
        .matrix();
}

VaeModel train_vae(const AgentTrace& traces, const VaeOptions& options, std::uint64_t seed) {
    const int A = traces.num_agents();
    require(options.latent >= 1 && A >= 2 * options.latent, ErrorKind::invalid_argument,
            "train_vae needs at least 2H agents");
    require(options.epochs >= 1 && options.batch_size >= 1, ErrorKind::invalid_argument,
            "train_vae needs positive epochs and batch size");

    VaeModel model;
    model.attributes = traces.attributes;
    normalization_constants(traces, options.normalization, model.feature_offset, model.feature_scale);
    const Matrix data = normalize_traces(traces, model.feature_offset, model.feature_scale).transpose();

    VaeShape shape;
    shape.input = static_cast<int>(data.rows());
    shape.hidden = options.hidden;
    shape.latent = options.latent;
    model.network = VaeNetwork(shape);
    model.network.initialize(derive_seed(seed, 1));

    std::mt19937_64 rng(derive_seed(seed, 2));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Eigen::Index n = shape.num_params();
    Vector m1 = Vector::Zero(n), m2 = Vector::Zero(n), grad(n);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long step = 0;
    double lr = options.learning_rate;
    double best_elbo = -std::numeric_limits<double>::infinity();
    int since_best = 0;
    const double log_norm = 0.5 * shape.input * std::log(2.0 * std::numbers::pi);

    std::vector<int> order(static_cast<std::size_t>(A));
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        const Vector saved = model.network.params();
        const Vector saved_m1 = m1, saved_m2 = m2;
        const long saved_step = step;
        double total = 0.0;
        bool finite = false;
        for (int attempt = 0; attempt < 3 && !finite; ++attempt) {
            if (attempt > 0) {
                model.network.params() = saved;
                m1 = saved_m1;
                m2 = saved_m2;
                step = saved_step;
                lr *= 0.5;
            }
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            total = 0.0;
            finite = true;
            for (int start = 0; start < A && finite; start += options.batch_size) {
                const int count = std::min(options.batch_size, A - start);
                Matrix x(shape.input, count), eps(shape.latent, count);
                for (int j = 0; j < count; ++j) x.col(j) = data.col(order[static_cast<std::size_t>(start + j)]);
                for (Eigen::Index j = 0; j < eps.size(); ++j) eps.data()[j] = gauss(rng);
                const double batch_loss = model.network.loss_and_gradient(x, eps, grad);
                if (!std::isfinite(batch_loss) || !grad.allFinite()) {
                    finite = false;
                    break;
                }
                total += batch_loss * count;
                ++step;
                m1 = beta1 * m1 + (1 - beta1) * grad;
                m2 = beta2 * m2 + (1 - beta2) * grad.cwiseAbs2();
                const double c1 = 1 - std::pow(beta1, static_cast<double>(step));
                const double c2 = 1 - std::pow(beta2, static_cast<double>(step));
                model.network.params().array() -=
                    lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + adam_eps);
            }
        }
        if (!finite) {
            std::ostringstream msg;
            msg << "VAE training diverged at epoch " << epoch << " after two learning-rate halvings (lr "
                << lr << ", parameter norm " << saved.norm() << ")";
            fail(ErrorKind::numerical, msg.str());
        }
        const double elbo = -total / A - log_norm;
        model.elbo_per_epoch.push_back(elbo);
        model.learning_rate_per_epoch.push_back(lr);
        if (elbo > best_elbo) {
            best_elbo = elbo;
            since_best = 0;
        } else if (++since_best >= options.plateau_epochs) {
            lr *= 0.5;
            since_best = 0;
        }
    }
    return model;
}

Matrix encode(const VaeModel& model, const AgentTrace& traces) {
    require(traces.attributes == model.attributes &&
                traces.values.cols() == model.network.shape().input,
            ErrorKind::dimension_mismatch, "encode: traces do not match the trained VAE");
    const Matrix data = normalize_traces(traces, model.feature_offset, model.feature_scale).transpose();
    Matrix mean, logvar;
    model.network.encode(data, mean, logvar);
    return mean.transpose();
}

void save_vae(const VaeModel& model, const std::filesystem::path& path) {
    std::ostringstream os;
    const VaeShape& s = model.network.shape();
    os << "shape," << s.input << ',' << s.hidden << ',' << s.latent << ',' << model.attributes << '\n';
    os << "feature_offset";
    for (Eigen::Index k = 0; k < model.feature_offset.size(); ++k) os << ',' << format_number(model.feature_offset(k));
    os << "\nfeature_scale";
    for (Eigen::Index k = 0; k < model.feature_scale.size(); ++k) os << ',' << format_number(model.feature_scale(k));
    os << "\nparams";
    for (Eigen::Index k = 0; k < model.network.params().size(); ++k) os << ',' << format_number(model.network.params()(k));
    os << '\n';
    write_file_atomic(path, os.str());
}

VaeModel load_vae(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty()) rows.push_back(split_csv_line(line));
    }
    require(rows.size() == 4 && rows[0][0] == "shape" && rows[0].size() == 5 && rows[1][0] == "feature_offset" &&
                rows[2][0] == "feature_scale" && rows[3][0] == "params",
            ErrorKind::io, path.string() + ": not a VAE weight file");
    auto numbers = [&](std::size_t r) {
        Vector v(static_cast<Eigen::Index>(rows[r].size() - 1));
        for (std::size_t j = 1; j < rows[r].size(); ++j) {
            v(static_cast<Eigen::Index>(j - 1)) = parse_number(rows[r][j], path.string() + ":" + std::to_string(r + 1));
        }
        return v;
    };
    const Vector shape_row = numbers(0);
    VaeShape shape;
    shape.input = static_cast<int>(shape_row(0));
    shape.hidden = static_cast<int>(shape_row(1));
    shape.latent = static_cast<int>(shape_row(2));
    VaeModel model;
    model.attributes = static_cast<int>(shape_row(3));
    model.feature_offset = numbers(1);
    model.feature_scale = numbers(2);
    model.network = VaeNetwork(shape);
    const Vector params = numbers(3);
    require(params.size() == shape.num_params() && model.feature_offset.size() == shape.input &&
                model.feature_scale.size() == shape.input,
            ErrorKind::io, path.string() + ": weight count does not match the declared shape");
    model.network.params() = params;
    return model;
}

}  // namespace abmcal
