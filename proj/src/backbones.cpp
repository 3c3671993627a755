#include "gcttt/backbones.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gcttt/errors.hpp"

namespace gcttt::rl {

void GoalSamplerConfig::validate() const {
    if (p_future < 0.0 || p_random < 0.0 || p_current < 0.0) {
        throw ConfigError("goal sampler: probabilities must be non-negative");
    }
    if (std::abs(p_future + p_random + p_current - 1.0) > 1e-9) {
        throw ConfigError("goal sampler: p_future + p_random + p_current must equal 1");
    }
    if (!(future_discount > 0.0 && future_discount < 1.0)) {
        throw ConfigError("goal sampler: future_discount must lie in (0, 1)");
    }
}

GoalSampler::GoalSampler(const data::OfflineDataset& ds, GoalSamplerConfig cfg, double eps)
    : ds_(&ds), cfg_(cfg), eps_(eps) {
    cfg_.validate();
    if (ds.trajectories.empty()) throw ConfigError("goal sampler: empty dataset");
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        const auto& t = ds.trajectories[i];
        for (std::size_t k = 0; k < t.states.size(); ++k) {
            const data::WindowRef ref{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k)};
            states_.push_back(ref);
            if (k < t.length()) transitions_.push_back(ref);
        }
    }
}

TransitionBatch GoalSampler::sample(std::size_t batch_size, Rng& rng, std::vector<GoalSource>* sources) const {
    const auto n = static_cast<Eigen::Index>(batch_size);
    TransitionBatch b;
    b.states.resize(n, 2);
    b.actions.resize(n, 2);
    b.goals.resize(n, 2);
    b.next_states.resize(n, 2);
    b.rewards.resize(n);
    if (sources != nullptr) sources->assign(batch_size, GoalSource::future);
    const double log_discount = std::log(cfg_.future_discount);
    for (Eigen::Index i = 0; i < n; ++i) {
        const data::WindowRef tr = transitions_[uniform_index(rng, transitions_.size())];
        const auto& traj = ds_->trajectories[tr.traj];
        const env::State& s = traj.states[tr.offset];
        const env::State& s_next = traj.states[tr.offset + 1];
        const env::Action& a = traj.actions[tr.offset];

        const double u = uniform01(rng);
        env::State g;
        GoalSource src;
        if (u < cfg_.p_future) {
            // k >= 1 with P(k) = (1 - d) d^(k-1), clamped to the trajectory end.
            double v = uniform01(rng);
            while (v <= 0.0) v = uniform01(rng);
            const double k = 1.0 + std::floor(std::log(v) / log_discount);
            const double last = static_cast<double>(traj.length());
            const auto idx = static_cast<std::size_t>(std::min(static_cast<double>(tr.offset) + k, last));
            g = traj.states[idx];
            src = GoalSource::future;
        } else if (u < cfg_.p_future + cfg_.p_random) {
            const data::WindowRef r = states_[uniform_index(rng, states_.size())];
            g = ds_->trajectories[r.traj].states[r.offset];
            src = GoalSource::random;
        } else {
            g = s;
            src = GoalSource::current;
        }
        b.states(i, 0) = s.x;
        b.states(i, 1) = s.y;
        b.actions(i, 0) = a.x;
        b.actions(i, 1) = a.y;
        b.goals(i, 0) = g.x;
        b.goals(i, 1) = g.y;
        b.next_states(i, 0) = s_next.x;
        b.next_states(i, 1) = s_next.y;
        b.rewards(i) = env::reward(s_next, g, eps_);
        if (sources != nullptr) (*sources)[static_cast<std::size_t>(i)] = src;
    }
    return b;
}

Algo parse_algo(std::string_view s) {
    if (s == "gcbc") return Algo::gcbc;
    if (s == "gciql_awr") return Algo::gciql_awr;
    if (s == "gciql_ddpgbc") return Algo::gciql_ddpgbc;
    throw ConfigError("unknown backbone '" + std::string(s) + "' (expected gcbc|gciql_awr|gciql_ddpgbc)");
}

std::string_view to_string(Algo a) {
    switch (a) {
        case Algo::gcbc: return "gcbc";
        case Algo::gciql_awr: return "gciql_awr";
        case Algo::gciql_ddpgbc: return "gciql_ddpgbc";
    }
    return "?";
}

LossId policy_loss_of(Algo a) {
    switch (a) {
        case Algo::gcbc: return LossId::bc;
        case Algo::gciql_awr: return LossId::awr;
        case Algo::gciql_ddpgbc: return LossId::ddpg_bc;
    }
    return LossId::bc;
}

void BackboneConfig::validate() const {
    if (!(hyper.gamma > 0.0 && hyper.gamma < 1.0)) throw ConfigError("backbone: gamma must lie in (0, 1)");
    if (!(hyper.expectile > 0.5 && hyper.expectile < 1.0)) throw ConfigError("backbone: expectile must lie in (0.5, 1)");
    if (hyper.awr_beta < 0.0 || hyper.ddpg_beta < 0.0) throw ConfigError("backbone: temperatures must be >= 0");
    if (!(hyper.awr_w_max > 0.0)) throw ConfigError("backbone: awr_w_max must be > 0");
    if (!(lr > 0.0)) throw ConfigError("backbone: lr must be > 0");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("backbone: tau must lie in (0, 1]");
    if (batch_size < 1) throw ConfigError("backbone: batch_size must be >= 1");
    if (pretrain_steps < 1) throw ConfigError("backbone: pretrain_steps must be >= 1");
    if (hidden.empty()) throw ConfigError("backbone: need at least one hidden layer");
    for (std::size_t w : hidden) {
        if (w < 1) throw ConfigError("backbone: hidden widths must be >= 1");
    }
    for (std::size_t s : checkpoint_steps) {
        if (s < 1 || s > pretrain_steps) throw ConfigError("backbone: checkpoint step outside [1, pretrain_steps]");
    }
    if (log_every < 1) throw ConfigError("backbone: log_every must be >= 1");
}

std::vector<nn::Blob> to_blobs(const Checkpoint& ckpt) {
    std::vector<nn::Blob> out{{nn::BlobRole::policy, ckpt.policy.net, ckpt.policy.log_std}};
    if (ckpt.critic) {
        out.push_back({nn::BlobRole::q, ckpt.critic->q, {}});
        out.push_back({nn::BlobRole::v, ckpt.critic->v, {}});
        out.push_back({nn::BlobRole::q_target, ckpt.critic->q_target, {}});
        out.push_back({nn::BlobRole::v_target, ckpt.critic->v_target, {}});
    }
    return out;
}

Checkpoint from_blobs(std::span<const nn::Blob> blobs, std::size_t step) {
    Checkpoint c;
    c.step = step;
    bool have_policy = false;
    CriticPair critic;
    int critic_parts = 0;
    for (const nn::Blob& b : blobs) {
        switch (b.role) {
            case nn::BlobRole::policy:
                if (b.aux.size() != b.params.output_dim()) throw IntegrityError("checkpoint: bad log_std length");
                c.policy = {b.params, b.aux};
                have_policy = true;
                break;
            case nn::BlobRole::q: critic.q = b.params; ++critic_parts; break;
            case nn::BlobRole::v: critic.v = b.params; ++critic_parts; break;
            case nn::BlobRole::q_target: critic.q_target = b.params; ++critic_parts; break;
            case nn::BlobRole::v_target: critic.v_target = b.params; ++critic_parts; break;
        }
    }
    if (!have_policy) throw IntegrityError("checkpoint: no policy blob");
    if (critic_parts == 4) {
        c.critic = std::move(critic);
    } else if (critic_parts != 0) {
        throw IntegrityError("checkpoint: incomplete critic");
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) { nn::write_blobs(path, to_blobs(ckpt)); }

Checkpoint load_checkpoint(const std::string& path, std::size_t step) {
    const auto blobs = nn::load_blobs(path);
    return from_blobs(blobs, step);
}

PretrainResult pretrain(const data::OfflineDataset& ds, double eps, const BackboneConfig& cfg,
                        const GoalSamplerConfig& sampler_cfg, std::uint64_t seed) {
    cfg.validate();
    const GoalSampler sampler(ds, sampler_cfg, eps);
    constexpr std::size_t kStateDim = 2;
    constexpr std::size_t kActionDim = 2;

    std::vector<std::size_t> pi_dims{2 * kStateDim};
    pi_dims.insert(pi_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    pi_dims.push_back(kActionDim);
    nn::GaussianPolicy policy = nn::make_policy(derive_seed(seed, "policy.init"), pi_dims, cfg.init_log_std);
    nn::PolicyOptimizer pi_opt(policy);

    const bool with_critic = cfg.trains_critic();
    std::optional<CriticPair> critic;
    nn::AdamState q_opt, v_opt;
    if (with_critic) {
        critic = make_critic(derive_seed(seed, "critic.init"), kStateDim, kActionDim, cfg.hidden);
        q_opt = nn::AdamState(critic->q.weights.size());
        v_opt = nn::AdamState(critic->v.weights.size());
    }

    const LossId pi_loss = policy_loss_of(cfg.algo);
    Rng rng(derive_seed(seed, "pretrain.batches"));
    std::vector<std::size_t> ckpt_steps = cfg.checkpoint_steps;
    std::sort(ckpt_steps.begin(), ckpt_steps.end());
    ckpt_steps.erase(std::unique(ckpt_steps.begin(), ckpt_steps.end()), ckpt_steps.end());

    PretrainResult result;
    const auto t0 = std::chrono::steady_clock::now();
    auto log = [&](std::size_t step, std::string_view name, double value) {
        double ms = 0.0;
        if (cfg.record_wall_time) {
            ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }
        result.log.push_back({step, std::string(name), value, ms});
    };

    std::size_t next_ckpt = 0;
    for (std::size_t step = 1; step <= cfg.pretrain_steps; ++step) {
        const TransitionBatch batch = sampler.sample(cfg.batch_size, rng);
        const bool log_now = step % cfg.log_every == 0;
        try {
            if (with_critic) {
                const LossResult lq = loss_and_grad(LossId::iql_q, nullptr, &*critic, batch, cfg.hyper);
                nn::adam_step(critic->q.weights, lq.grad, q_opt, cfg.lr);
                const LossResult lv = loss_and_grad(LossId::iql_v, nullptr, &*critic, batch, cfg.hyper);
                nn::adam_step(critic->v.weights, lv.grad, v_opt, cfg.lr);
                nn::soft_update(critic->q_target, critic->q, cfg.tau);
                nn::soft_update(critic->v_target, critic->v, cfg.tau);
                if (log_now) {
                    log(step, "iql_q", lq.value);
                    log(step, "iql_v", lv.value);
                }
            }
            const LossResult lp = loss_and_grad(pi_loss, &policy, critic ? &*critic : nullptr, batch, cfg.hyper);
            nn::adam_step(policy, lp.grad, pi_opt, cfg.lr);
            if (log_now) log(step, to_string(pi_loss), lp.value);
        } catch (const NumericError& e) {
            throw NumericError("pretrain diverged at step " + std::to_string(step) + ": " + e.what());
        }
        while (next_ckpt < ckpt_steps.size() && ckpt_steps[next_ckpt] == step) {
            result.checkpoints.push_back({step, policy, critic});
            ++next_ckpt;
        }
    }
    return result;
}

std::string format_log_csv(const std::vector<LogRow>& rows) {
    std::ostringstream out;
    out << "step,loss,value,wall_ms\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        out << r.step << ',' << r.loss << ',' << buf << ',';
        std::snprintf(buf, sizeof buf, "%.3f", r.wall_ms);
        out << buf << '\n';
    }
    return out.str();
}

}  // namespace gcttt::rl
