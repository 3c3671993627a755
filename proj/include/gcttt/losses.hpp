#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "gcttt/nn.hpp"

namespace gcttt::rl {

using nn::Matrix;
using nn::Vector;

/// Rows are samples. States, goals and next states are 2-D positions; actions 2-D.
struct TransitionBatch {
    Matrix states;
    Matrix actions;
    Matrix goals;
    Matrix next_states;
    Vector rewards;

    Eigen::Index size() const { return states.rows(); }
};

/// Q(s, a, g), V(s, g) and their target copies.
struct CriticPair {
    nn::ParamStore q;
    nn::ParamStore v;
    nn::ParamStore q_target;
    nn::ParamStore v_target;

    friend bool operator==(const CriticPair&, const CriticPair&) = default;
};

CriticPair make_critic(std::uint64_t seed, std::size_t state_dim, std::size_t action_dim,
                       const std::vector<std::size_t>& hidden);

enum class LossId : std::uint8_t { bc, iql_q, iql_v, awr, ddpg_bc };

LossId parse_loss_id(std::string_view s);
std::string_view to_string(LossId id);
bool is_policy_loss(LossId id);

struct LossHyper {
    double gamma = 0.99;
    double expectile = 0.9;
    double awr_beta = 3.0;
    double awr_w_max = 100.0;
    double ddpg_beta = 1.0;
    bool use_target_networks = true;
};

/// Batch-mean loss and its gradient w.r.t. the differentiated parameters:
/// for policy losses the flat policy vector (net weights, then log_std); for
/// iql_q the Q weights; for iql_v the V weights. Critic networks entering a
/// policy loss are held constant.
struct LossResult {
    double value = 0.0;
    std::vector<double> grad;
};

/// Expectile loss |alpha - 1{x < 0}| * x^2.
inline double expectile_loss(double x, double alpha) { return (x < 0.0 ? 1.0 - alpha : alpha) * x * x; }

LossResult loss_and_grad(LossId id, const nn::GaussianPolicy* policy, const CriticPair* critic,
                         const TransitionBatch& batch, const LossHyper& hyper);

/// Loss value only (same definitions as loss_and_grad).
double loss_value(LossId id, const nn::GaussianPolicy* policy, const CriticPair* critic, const TransitionBatch& batch,
                  const LossHyper& hyper);

/// Row-wise concatenation helper: [a | b] and [a | b | c].
Matrix hcat(const Matrix& a, const Matrix& b);
Matrix hcat(const Matrix& a, const Matrix& b, const Matrix& c);

}  // namespace gcttt::rl
