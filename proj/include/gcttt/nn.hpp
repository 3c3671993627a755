#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gcttt::nn {

/// Row-major batch matrix: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { tanh = 0 };

/// Parameters of a fully connected network.
///
/// Layout of `weights` is layer-major. Layer l maps fan_in = layer_dims[l] to
/// fan_out = layer_dims[l+1] and occupies a (fan_out x (fan_in + 1)) row-major
/// block: row j holds the fan_in input weights of unit j followed by its bias.
/// Hidden layers use `activation`; the output layer is linear.
struct ParamStore {
    std::vector<std::size_t> layer_dims;
    std::vector<double> weights;
    Activation activation = Activation::tanh;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t num_layers() const { return layer_dims.size() - 1; }
    std::size_t max_hidden_width() const;
    std::size_t hidden_layers() const { return layer_dims.size() - 2; }

    /// Offset of layer l's block inside `weights`.
    std::size_t layer_offset(std::size_t l) const;

    friend bool operator==(const ParamStore& a, const ParamStore& b);
};

/// Sum over layers of (fan_in + 1) * fan_out.
std::size_t weight_count(std::span<const std::size_t> layer_dims);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, deterministic per seed.
ParamStore init_params(std::uint64_t seed, std::vector<std::size_t> layer_dims);

void validate_dims(std::span<const std::size_t> layer_dims);

/// Single-sample forward pass.
std::vector<double> forward(const ParamStore& params, std::span<const double> input);

/// Batched forward pass (rows are samples).
Matrix forward(const ParamStore& params, const Matrix& inputs);
/// Row by row; each output row is bitwise equal to the single-sample forward,
/// whatever the batch size (the blocked batched product is not).
Matrix forward_rows(const ParamStore& params, const Matrix& inputs);

/// Post-activation values of every layer, input included, kept for backprop.
struct ForwardCache {
    std::vector<Matrix> activations;  // activations[0] = input, back() = network output
    const Matrix& output() const { return activations.back(); }
};

ForwardCache forward_cached(const ParamStore& params, const Matrix& inputs);

/// Reverse pass. Accumulates d(loss)/d(weights) into `grad` (same length as
/// params.weights) given d(loss)/d(output). Returns d(loss)/d(input).
Matrix backward(const ParamStore& params, const ForwardCache& cache, const Matrix& grad_output,
                std::span<double> grad);

/// Same as backward() but only propagates to the input; no weight gradient.
Matrix backward_input(const ParamStore& params, const ForwardCache& cache, const Matrix& grad_output);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Gaussian policy with a state-independent, clamped log standard deviation.
struct GaussianPolicy {
    ParamStore net;               // (state, goal) -> action mean
    std::vector<double> log_std;  // raw parameter, clamped to [kLogStdMin, kLogStdMax] on use

    std::size_t action_dim() const { return net.output_dim(); }
    std::size_t parameter_count() const { return net.weights.size() + log_std.size(); }

    friend bool operator==(const GaussianPolicy& a, const GaussianPolicy& b);
};

GaussianPolicy make_policy(std::uint64_t seed, std::vector<std::size_t> layer_dims, double init_log_std = 0.0);

inline double clamped_log_std(double raw) { return raw < kLogStdMin ? kLogStdMin : (raw > kLogStdMax ? kLogStdMax : raw); }

/// log N(action; mean, diag(exp(2 log_std))) summed over dimensions.
double gaussian_log_prob(std::span<const double> mean, std::span<const double> raw_log_std,
                         std::span<const double> action);

/// Flat policy parameter vector: net weights followed by log_std.
std::vector<double> flatten(const GaussianPolicy& policy);
void unflatten(GaussianPolicy& policy, std::span<const double> flat);

/// Adam optimizer state for one parameter vector.
struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// Bias-corrected Adam update, in place. Rejects non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

/// Optimizer for a GaussianPolicy (net and log_std share one step counter).
struct PolicyOptimizer {
    AdamState state;
    explicit PolicyOptimizer(const GaussianPolicy& p) : state(p.parameter_count()) {}
};

void adam_step(GaussianPolicy& policy, std::span<const double> flat_grads, PolicyOptimizer& opt, double lr);

/// Copies `from` into `to` with target tracking: to = (1 - tau) * to + tau * from.
void soft_update(ParamStore& to, const ParamStore& from, double tau);

}  // namespace gcttt::nn
