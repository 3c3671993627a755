#include "gcttt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gcttt/errors.hpp"
#include "gcttt/rng.hpp"

namespace gcttt::rl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void require_finite(double v, const char* loss, const char* term) {
    if (!std::isfinite(v)) throw NumericError(std::string(loss) + ": non-finite " + term);
}

void require_finite(const Matrix& m, const char* loss, const char* term) {
    if (!m.allFinite()) throw NumericError(std::string(loss) + ": non-finite " + term);
}

void check_batch(const TransitionBatch& b, bool needs_next) {
    const auto n = b.states.rows();
    if (n == 0) throw ShapeError("loss: empty batch");
    if (b.actions.rows() != n || b.goals.rows() != n) throw ShapeError("loss: batch fields disagree in length");
    if (needs_next && (b.next_states.rows() != n || b.rewards.size() != n)) {
        throw ShapeError("loss: batch lacks next states / rewards");
    }
}

const nn::GaussianPolicy& need_policy(const nn::GaussianPolicy* p, LossId id) {
    if (p == nullptr) throw ConfigError(std::string("loss ") + std::string(to_string(id)) + " needs a policy");
    return *p;
}

const CriticPair& need_critic(const CriticPair* c, LossId id) {
    if (c == nullptr) throw ConfigError(std::string("loss ") + std::string(to_string(id)) + " needs a critic");
    return *c;
}

/// Weighted Gaussian NLL: L = -(1/B) sum_b w_b log pi(a_b | s_b, g_b), plus optional
/// extra gradient on the mean. Writes the flat policy gradient into `grad`.
struct PolicyTerms {
    nn::ForwardCache cache;
    Matrix mean;
    Vector log_prob;  // per row
};

PolicyTerms policy_forward(const nn::GaussianPolicy& policy, const TransitionBatch& b) {
    PolicyTerms t;
    t.cache = nn::forward_cached(policy.net, hcat(b.states, b.goals));
    t.mean = t.cache.output();
    if (t.mean.cols() != b.actions.cols()) throw ShapeError("policy output width != action width");
    const auto n = b.states.rows();
    const auto d = b.actions.cols();
    t.log_prob.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double lp = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            const double ls = nn::clamped_log_std(policy.log_std[static_cast<std::size_t>(k)]);
            const double z = (b.actions(i, k) - t.mean(i, k)) * std::exp(-ls);
            lp += -0.5 * z * z - ls - kHalfLog2Pi;
        }
        t.log_prob(i) = lp;
    }
    return t;
}

/// Adds d/dtheta of -(1/B) sum_b w_b log pi_b. `extra_mean_grad` (may be empty) is added
/// to d loss / d mean before backprop.
void policy_backward(const nn::GaussianPolicy& policy, const TransitionBatch& b, const PolicyTerms& t,
                     const Vector& weights, const Matrix* extra_mean_grad, std::vector<double>& grad) {
    const auto n = b.states.rows();
    const auto d = b.actions.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix d_mean(n, d);
    const std::size_t n_net = policy.net.weights.size();
    for (Eigen::Index k = 0; k < d; ++k) {
        const double raw = policy.log_std[static_cast<std::size_t>(k)];
        const double ls = nn::clamped_log_std(raw);
        const double inv_var = std::exp(-2.0 * ls);
        const bool active = raw >= nn::kLogStdMin && raw <= nn::kLogStdMax;
        double g_ls = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double diff = b.actions(i, k) - t.mean(i, k);
            d_mean(i, k) = -weights(i) * inv_n * diff * inv_var;
            g_ls += weights(i) * inv_n * (1.0 - diff * diff * inv_var);
        }
        grad[n_net + static_cast<std::size_t>(k)] += active ? g_ls : 0.0;
    }
    if (extra_mean_grad != nullptr) d_mean += *extra_mean_grad;
    nn::backward(policy.net, t.cache, d_mean, std::span<double>(grad.data(), n_net));
}

LossResult bc_like(LossId id, const nn::GaussianPolicy& policy, const CriticPair* critic, const TransitionBatch& b,
                   const LossHyper& h, bool want_grad) {
    check_batch(b, false);
    const auto n = b.states.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    PolicyTerms t = policy_forward(policy, b);
    require_finite(t.log_prob.sum(), to_string(id).data(), "log-likelihood");

    Vector weights = Vector::Ones(n);
    double extra_value = 0.0;
    Matrix extra_grad;
    bool has_extra = false;

    if (id == LossId::awr) {
        const CriticPair& c = need_critic(critic, id);
        const Matrix q = nn::forward(c.q, hcat(b.states, b.actions, b.goals));
        const Matrix v = nn::forward(c.v, hcat(b.states, b.goals));
        for (Eigen::Index i = 0; i < n; ++i) {
            const double adv = q(i, 0) - v(i, 0);
            weights(i) = std::min(std::exp(h.awr_beta * adv), h.awr_w_max);
        }
        require_finite(weights.sum(), "awr", "advantage weight");
    } else if (id == LossId::ddpg_bc) {
        const CriticPair& c = need_critic(critic, id);
        const auto s_dim = b.states.cols();
        const auto a_dim = b.actions.cols();
        const nn::ForwardCache qc = nn::forward_cached(c.q, hcat(b.states, t.mean, b.goals));
        require_finite(qc.output(), "ddpg_bc", "Q(s, mean action)");
        extra_value = -h.ddpg_beta * qc.output().col(0).sum() * inv_n;
        if (want_grad && h.ddpg_beta != 0.0) {
            const Matrix ones = Matrix::Constant(n, 1, -h.ddpg_beta * inv_n);
            const Matrix d_in = nn::backward_input(c.q, qc, ones);
            extra_grad = d_in.middleCols(s_dim, a_dim);
            has_extra = true;
        }
    }

    LossResult r;
    r.value = -(weights.array() * t.log_prob.array()).sum() * inv_n + extra_value;
    require_finite(r.value, to_string(id).data(), "loss value");
    if (want_grad) {
        r.grad.assign(policy.parameter_count(), 0.0);
        policy_backward(policy, b, t, weights, has_extra ? &extra_grad : nullptr, r.grad);
    }
    return r;
}

LossResult iql_q(const CriticPair& c, const TransitionBatch& b, const LossHyper& h, bool want_grad) {
    check_batch(b, true);
    const auto n = b.states.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    const nn::ParamStore& v_boot = h.use_target_networks ? c.v_target : c.v;
    const Matrix v_next = nn::forward(v_boot, hcat(b.next_states, b.goals));
    Vector target = b.rewards + h.gamma * v_next.col(0);
    require_finite(Matrix(target), "iql_q", "TD target");
    const nn::ForwardCache qc = nn::forward_cached(c.q, hcat(b.states, b.actions, b.goals));
    const Vector td = target - qc.output().col(0);
    LossResult r;
    r.value = td.squaredNorm() * inv_n;
    require_finite(r.value, "iql_q", "TD error");
    if (want_grad) {
        r.grad.assign(c.q.weights.size(), 0.0);
        const Matrix d_out = (-2.0 * inv_n) * td;
        nn::backward(c.q, qc, d_out, r.grad);
    }
    return r;
}

LossResult iql_v(const CriticPair& c, const TransitionBatch& b, const LossHyper& h, bool want_grad) {
    check_batch(b, false);
    const auto n = b.states.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    const nn::ParamStore& q_src = h.use_target_networks ? c.q_target : c.q;
    const Matrix q = nn::forward(q_src, hcat(b.states, b.actions, b.goals));
    require_finite(q, "iql_v", "Q target");
    const nn::ForwardCache vc = nn::forward_cached(c.v, hcat(b.states, b.goals));
    Matrix d_out(n, 1);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = q(i, 0) - vc.output()(i, 0);
        const double w = x < 0.0 ? 1.0 - h.expectile : h.expectile;
        total += w * x * x;
        d_out(i, 0) = -2.0 * w * x * inv_n;
    }
    LossResult r;
    r.value = total * inv_n;
    require_finite(r.value, "iql_v", "expectile residual");
    if (want_grad) {
        r.grad.assign(c.v.weights.size(), 0.0);
        nn::backward(c.v, vc, d_out, r.grad);
    }
    return r;
}

LossResult dispatch(LossId id, const nn::GaussianPolicy* policy, const CriticPair* critic, const TransitionBatch& b,
                    const LossHyper& h, bool want_grad) {
    switch (id) {
        case LossId::bc:
        case LossId::awr:
        case LossId::ddpg_bc: return bc_like(id, need_policy(policy, id), critic, b, h, want_grad);
        case LossId::iql_q: return iql_q(need_critic(critic, id), b, h, want_grad);
        case LossId::iql_v: return iql_v(need_critic(critic, id), b, h, want_grad);
    }
    throw ConfigError("unknown loss id");
}

}  // namespace

CriticPair make_critic(std::uint64_t seed, std::size_t state_dim, std::size_t action_dim,
                       const std::vector<std::size_t>& hidden) {
    std::vector<std::size_t> q_dims{2 * state_dim + action_dim};
    std::vector<std::size_t> v_dims{2 * state_dim};
    for (std::size_t w : hidden) {
        q_dims.push_back(w);
        v_dims.push_back(w);
    }
    q_dims.push_back(1);
    v_dims.push_back(1);
    CriticPair c;
    c.q = nn::init_params(derive_seed(seed, "critic.q"), q_dims);
    c.v = nn::init_params(derive_seed(seed, "critic.v"), v_dims);
    c.q_target = c.q;
    c.v_target = c.v;
    return c;
}

LossId parse_loss_id(std::string_view s) {
    if (s == "bc") return LossId::bc;
    if (s == "iql_q") return LossId::iql_q;
    if (s == "iql_v") return LossId::iql_v;
    if (s == "awr") return LossId::awr;
    if (s == "ddpg_bc") return LossId::ddpg_bc;
    throw ConfigError("unknown loss id '" + std::string(s) + "' (expected bc|iql_q|iql_v|awr|ddpg_bc)");
}

std::string_view to_string(LossId id) {
    switch (id) {
        case LossId::bc: return "bc";
        case LossId::iql_q: return "iql_q";
        case LossId::iql_v: return "iql_v";
        case LossId::awr: return "awr";
        case LossId::ddpg_bc: return "ddpg_bc";
    }
    return "?";
}

bool is_policy_loss(LossId id) { return id == LossId::bc || id == LossId::awr || id == LossId::ddpg_bc; }

LossResult loss_and_grad(LossId id, const nn::GaussianPolicy* policy, const CriticPair* critic,
                         const TransitionBatch& batch, const LossHyper& hyper) {
    return dispatch(id, policy, critic, batch, hyper, true);
}

double loss_value(LossId id, const nn::GaussianPolicy* policy, const CriticPair* critic, const TransitionBatch& batch,
                  const LossHyper& hyper) {
    return dispatch(id, policy, critic, batch, hyper, false).value;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("hcat: row counts differ");
    const auto ca = a.cols(), cb = b.cols();
    Matrix out(a.rows(), ca + cb);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        double* dst = out.data() + r * (ca + cb);
        std::copy_n(a.data() + r * ca, ca, dst);
        std::copy_n(b.data() + r * cb, cb, dst + ca);
    }
    return out;
}

Matrix hcat(const Matrix& a, const Matrix& b, const Matrix& c) { return hcat(hcat(a, b), c); }

}  // namespace gcttt::rl
