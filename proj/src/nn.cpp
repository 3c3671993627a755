#include "gcttt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "gcttt/errors.hpp"
#include "gcttt/rng.hpp"

namespace gcttt::nn {

namespace {

using RowBlock = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                            Eigen::OuterStride<>>;
using BiasCol = Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<>>;
using MutRowBlock =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0, Eigen::OuterStride<>>;
using MutBiasCol = Eigen::Map<Eigen::VectorXd, 0, Eigen::InnerStride<>>;

struct LayerView {
    RowBlock w;
    BiasCol b;
};

LayerView layer(const ParamStore& p, std::size_t l) {
    const auto in = static_cast<Eigen::Index>(p.layer_dims[l]);
    const auto out = static_cast<Eigen::Index>(p.layer_dims[l + 1]);
    const double* base = p.weights.data() + p.layer_offset(l);
    return {RowBlock(base, out, in, Eigen::OuterStride<>(in + 1)), BiasCol(base + in, out, Eigen::InnerStride<>(in + 1))};
}

void check_input(const ParamStore& p, std::size_t cols) {
    if (cols != p.input_dim()) {
        throw ShapeError("forward: input width " + std::to_string(cols) + " != network input " +
                         std::to_string(p.input_dim()));
    }
}

// tanh(x) = 1 - 2 / (exp(2x) + 1); vectorizes, unlike Eigen's double tanh.
// Saturates cleanly: exp overflow gives 1, underflow gives -1.
void apply_activation(Matrix& m) { m.array() = 1.0 - 2.0 / ((2.0 * m.array()).exp() + 1.0); }

}  // namespace

std::size_t ParamStore::max_hidden_width() const {
    std::size_t w = 0;
    for (std::size_t i = 1; i + 1 < layer_dims.size(); ++i) w = std::max(w, layer_dims[i]);
    return w;
}

std::size_t ParamStore::layer_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < l; ++i) off += (layer_dims[i] + 1) * layer_dims[i + 1];
    return off;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.layer_dims == b.layer_dims && a.activation == b.activation && a.weights.size() == b.weights.size() &&
           std::memcmp(a.weights.data(), b.weights.data(), a.weights.size() * sizeof(double)) == 0;
}

bool operator==(const GaussianPolicy& a, const GaussianPolicy& b) {
    return a.net == b.net && a.log_std.size() == b.log_std.size() &&
           std::memcmp(a.log_std.data(), b.log_std.data(), a.log_std.size() * sizeof(double)) == 0;
}

void validate_dims(std::span<const std::size_t> layer_dims) {
    if (layer_dims.size() < 2) throw ConfigError("layer_dims needs at least an input and an output size");
    for (std::size_t d : layer_dims) {
        if (d == 0) throw ConfigError("layer_dims entries must be >= 1");
    }
}

std::size_t weight_count(std::span<const std::size_t> layer_dims) {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) n += (layer_dims[i] + 1) * layer_dims[i + 1];
    return n;
}

ParamStore init_params(std::uint64_t seed, std::vector<std::size_t> layer_dims) {
    validate_dims(layer_dims);
    ParamStore p;
    p.layer_dims = std::move(layer_dims);
    p.weights.assign(weight_count(p.layer_dims), 0.0);
    Rng rng(seed);
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        const std::size_t in = p.layer_dims[l];
        const std::size_t out = p.layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        double* base = p.weights.data() + p.layer_offset(l);
        for (std::size_t j = 0; j < out; ++j) {
            for (std::size_t i = 0; i < in; ++i) base[j * (in + 1) + i] = uniform(rng, -bound, bound);
        }
    }
    return p;
}

std::vector<double> forward(const ParamStore& params, std::span<const double> input) {
    check_input(params, input.size());
    Matrix x(1, static_cast<Eigen::Index>(input.size()));
    std::copy(input.begin(), input.end(), x.data());
    const Matrix y = forward(params, x);
    return {y.data(), y.data() + y.size()};
}

Matrix forward(const ParamStore& params, const Matrix& inputs) {
    check_input(params, static_cast<std::size_t>(inputs.cols()));
    Matrix h = inputs;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const auto [w, b] = layer(params, l);
        Matrix z = h * w.transpose();
        z.rowwise() += b.transpose();
        if (l + 1 < params.num_layers()) apply_activation(z);
        h = std::move(z);
    }
    return h;
}

Matrix forward_rows(const ParamStore& params, const Matrix& inputs) {
    check_input(params, static_cast<std::size_t>(inputs.cols()));
    Matrix out(inputs.rows(), static_cast<Eigen::Index>(params.output_dim()));
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) out.row(r) = forward(params, Matrix(inputs.row(r)));
    return out;
}

ForwardCache forward_cached(const ParamStore& params, const Matrix& inputs) {
    check_input(params, static_cast<std::size_t>(inputs.cols()));
    ForwardCache cache;
    cache.activations.reserve(params.num_layers() + 1);
    cache.activations.push_back(inputs);
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const auto [w, b] = layer(params, l);
        Matrix z = cache.activations.back() * w.transpose();
        z.rowwise() += b.transpose();
        if (l + 1 < params.num_layers()) apply_activation(z);
        cache.activations.push_back(std::move(z));
    }
    return cache;
}

namespace {

Matrix backprop(const ParamStore& params, const ForwardCache& cache, const Matrix& grad_output, double* grad) {
    if (grad_output.rows() != cache.output().rows() || grad_output.cols() != cache.output().cols()) {
        throw ShapeError("backward: gradient shape does not match network output");
    }
    Matrix delta = grad_output;  // d loss / d pre-activation of the current layer
    for (std::size_t l = params.num_layers(); l-- > 0;) {
        const Matrix& h_in = cache.activations[l];
        const auto [w, b] = layer(params, l);
        if (grad != nullptr) {
            const auto in = static_cast<Eigen::Index>(params.layer_dims[l]);
            const auto out = static_cast<Eigen::Index>(params.layer_dims[l + 1]);
            double* base = grad + params.layer_offset(l);
            MutRowBlock gw(base, out, in, Eigen::OuterStride<>(in + 1));
            MutBiasCol gb(base + in, out, Eigen::InnerStride<>(in + 1));
            gw.noalias() += delta.transpose() * h_in;
            gb += delta.colwise().sum().transpose();
        }
        Matrix d_in = delta * w;
        if (l > 0) {
            // tanh'(z) = 1 - tanh(z)^2, with tanh(z) stored as the layer input.
            d_in.array() *= (1.0 - h_in.array().square());
        }
        delta = std::move(d_in);
    }
    return delta;
}

}  // namespace

Matrix backward(const ParamStore& params, const ForwardCache& cache, const Matrix& grad_output, std::span<double> grad) {
    if (grad.size() != params.weights.size()) throw ShapeError("backward: gradient buffer has wrong length");
    return backprop(params, cache, grad_output, grad.data());
}

Matrix backward_input(const ParamStore& params, const ForwardCache& cache, const Matrix& grad_output) {
    return backprop(params, cache, grad_output, nullptr);
}

GaussianPolicy make_policy(std::uint64_t seed, std::vector<std::size_t> layer_dims, double init_log_std) {
    GaussianPolicy p;
    p.net = init_params(seed, std::move(layer_dims));
    p.log_std.assign(p.net.output_dim(), init_log_std);
    return p;
}

double gaussian_log_prob(std::span<const double> mean, std::span<const double> raw_log_std,
                         std::span<const double> action) {
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    if (mean.size() != action.size() || raw_log_std.size() != action.size()) {
        throw ShapeError("gaussian_log_prob: dimension mismatch");
    }
    double lp = 0.0;
    for (std::size_t d = 0; d < action.size(); ++d) {
        const double ls = clamped_log_std(raw_log_std[d]);
        const double z = (action[d] - mean[d]) * std::exp(-ls);
        lp += -0.5 * z * z - ls - kHalfLog2Pi;
    }
    return lp;
}

std::vector<double> flatten(const GaussianPolicy& policy) {
    std::vector<double> flat(policy.net.weights);
    flat.insert(flat.end(), policy.log_std.begin(), policy.log_std.end());
    return flat;
}

void unflatten(GaussianPolicy& policy, std::span<const double> flat) {
    if (flat.size() != policy.parameter_count()) throw ShapeError("unflatten: wrong parameter count");
    const std::size_t n = policy.net.weights.size();
    std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n), policy.net.weights.begin());
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(n), flat.end(), policy.log_std.begin());
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw ShapeError("adam_step: shape mismatch between params, grads and optimizer state");
    }
    if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be > 0");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

void adam_step(GaussianPolicy& policy, std::span<const double> flat_grads, PolicyOptimizer& opt, double lr) {
    std::vector<double> flat = flatten(policy);
    adam_step(flat, flat_grads, opt.state, lr);
    unflatten(policy, flat);
}

void soft_update(ParamStore& to, const ParamStore& from, double tau) {
    if (to.weights.size() != from.weights.size()) throw ShapeError("soft_update: architecture mismatch");
    for (std::size_t i = 0; i < to.weights.size(); ++i) {
        to.weights[i] = (1.0 - tau) * to.weights[i] + tau * from.weights[i];
    }
}

}  // namespace gcttt::nn
