#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcttt/checkpoint.hpp"
#include "gcttt/datagen.hpp"
#include "gcttt/index.hpp"
#include "gcttt/losses.hpp"
#include "gcttt/rng.hpp"

namespace gcttt::rl {

/// Goal relabelling mixture p_g(. | s, D).
struct GoalSamplerConfig {
    double p_future = 0.7;
    double p_random = 0.25;
    double p_current = 0.05;
    double future_discount = 0.99;

    void validate() const;
};

enum class GoalSource : std::uint8_t { future = 0, random = 1, current = 2 };

/// Samples (s, a, g, r, s') batches: s uniform over dataset transitions, g from
/// the relabelling mixture, r = R(s', g).
class GoalSampler {
public:
    GoalSampler(const data::OfflineDataset& ds, GoalSamplerConfig cfg, double eps);

    TransitionBatch sample(std::size_t batch_size, Rng& rng, std::vector<GoalSource>* sources = nullptr) const;

    const GoalSamplerConfig& config() const { return cfg_; }

private:
    const data::OfflineDataset* ds_;
    GoalSamplerConfig cfg_;
    double eps_;
    std::vector<data::WindowRef> transitions_;  // (traj, t) with t < T
    std::vector<data::WindowRef> states_;       // every (traj, t)
};

enum class Algo : std::uint8_t { gcbc, gciql_awr, gciql_ddpgbc };

Algo parse_algo(std::string_view s);
std::string_view to_string(Algo a);
/// Policy-extraction loss used by the backbone (and by default at test time).
LossId policy_loss_of(Algo a);

struct BackboneConfig {
    Algo algo = Algo::gcbc;
    LossHyper hyper;
    double lr = 3e-4;
    double tau = 5e-3;
    std::size_t batch_size = 256;
    std::size_t pretrain_steps = 40000;
    std::vector<std::size_t> checkpoint_steps{30000, 35000, 40000};
    std::vector<std::size_t> hidden{64, 64};
    double init_log_std = 0.0;
    /// GC-BC has no critic of its own; an IQL critic is fitted alongside it
    /// so that data selection has a value estimate.
    bool selection_critic = true;
    std::size_t log_every = 1000;
    bool record_wall_time = false;

    bool trains_critic() const { return algo != Algo::gcbc || selection_critic; }
    void validate() const;
};

struct Checkpoint {
    std::size_t step = 0;
    nn::GaussianPolicy policy;
    std::optional<CriticPair> critic;
};

std::vector<nn::Blob> to_blobs(const Checkpoint& ckpt);
Checkpoint from_blobs(std::span<const nn::Blob> blobs, std::size_t step);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, std::size_t step);

struct LogRow {
    std::size_t step = 0;
    std::string loss;
    double value = 0.0;
    double wall_ms = 0.0;
};

struct PretrainResult {
    std::vector<Checkpoint> checkpoints;
    std::vector<LogRow> log;
};

/// Offline pre-training. Per step (IQL / critic runs): Q update, V update,
/// target soft update, then one policy update, all on the same batch.
PretrainResult pretrain(const data::OfflineDataset& ds, double eps, const BackboneConfig& cfg,
                        const GoalSamplerConfig& sampler, std::uint64_t seed);

/// Training-log CSV: step,loss,value,wall_ms
std::string format_log_csv(const std::vector<LogRow>& rows);

}  // namespace gcttt::rl
