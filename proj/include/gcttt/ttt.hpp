#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcttt/backbones.hpp"
#include "gcttt/envs.hpp"
#include "gcttt/flops.hpp"
#include "gcttt/selection.hpp"

namespace gcttt::ttt {

using env::State;

struct TTTConfig {
    std::size_t K = 50;
    std::size_t N = 100;
    double lr = 3e-4;
    sel::SelectionConfig selection;
    /// Defaults to the backbone's policy-extraction loss.
    std::optional<rl::LossId> finetune_loss;
    bool reset_each_cycle = true;
    std::size_t minibatch = 64;
    rl::LossHyper hyper;

    void validate() const;
};

struct CycleStats {
    std::size_t start_step = 0;
    std::size_t n_relevant = 0;
    std::size_t n_selected = 0;
    double threshold = 0.0;
    bool finetuned = false;
    bool aborted = false;
    /// Parameters after the cycle's reset equal the stored snapshot bitwise.
    bool reset_exact = true;
    friend bool operator==(const CycleStats&, const CycleStats&) = default;
};

struct EpisodeRecord {
    State goal;
    std::vector<State> states;
    std::vector<env::Action> actions;
    std::vector<double> rewards;
    std::vector<CycleStats> cycles;
    bool success = false;
    /// Steps taken when the goal was first reached; -1 if never.
    long first_success_step = -1;
    std::uint64_t flops = 0;
    std::uint64_t clipped = 0;

    double mean_n_selected() const;
    friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

/// Cost model of the policy network (width = widest hidden layer).
flops::FlopModel flop_model_of(const nn::GaussianPolicy& policy);

/// Deterministic rollout with the policy mean until success or the episode cap.
EpisodeRecord run_episode_frozen(const env::MazeEnv& env, const nn::GaussianPolicy& policy, const State& goal,
                                 std::uint64_t seed);

struct FinetuneResult {
    std::vector<double> losses;  // minibatch loss before each step
    bool aborted = false;
};

/// N Adam steps (fresh optimizer) on `loss` over uniform minibatches of
/// `pairs`, whose goals are already fixed to g*. Critic is held constant.
/// On numeric divergence the policy is restored and `aborted` is set.
FinetuneResult finetune(nn::GaussianPolicy& policy, const rl::CriticPair* critic, const rl::TransitionBatch& pairs,
                        rl::LossId loss, const rl::LossHyper& hyper, std::size_t N, double lr, std::size_t minibatch,
                        std::uint64_t seed);

struct EpisodeContext {
    const env::MazeEnv* env = nullptr;
    const data::OfflineDataset* dataset = nullptr;
    const data::WindowIndex* index = nullptr;
    const rl::CriticPair* critic = nullptr;
    rl::LossId default_loss = rl::LossId::bc;
    /// Optional sink for per-selection JSON-lines records.
    std::function<void(const std::string&)> debug_sink;
};

/// Receding-horizon test-time training: select, fine-tune, roll out K steps,
/// reset to the stored parameters, repeat until success or the cap.
EpisodeRecord run_episode_ttt(const EpisodeContext& ctx, const nn::GaussianPolicy& policy0, const TTTConfig& cfg,
                              const State& goal, std::uint64_t seed);

enum class EvalMode : std::uint8_t { frozen, full, critic_free, relevant_only, optimal_only, random };

EvalMode parse_eval_mode(std::string_view s);
std::string_view to_string(EvalMode m);
/// "ttt" is accepted as an alias of "full".
std::optional<sel::Mode> selection_mode_of(EvalMode m);

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<rl::Checkpoint> checkpoints;
};

struct Protocol {
    std::string backbone;
    std::string regime;
    std::vector<SeedRun> runs;
    std::vector<State> goals;
    EvalMode mode = EvalMode::full;
    std::size_t workers = 1;
};

struct ResultRow {
    std::string backbone;
    std::string regime;
    std::string mode;
    std::size_t checkpoint_step = 0;
    std::size_t goal_id = 0;
    std::uint64_t seed = 0;
    bool success = false;
    long first_success_step = -1;
    std::uint64_t flops = 0;
    std::size_t n_cycles = 0;
    double mean_n_selected = 0.0;
};

struct Summary {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::vector<double> per_seed;
    double mean_flops = 0.0;
};

/// Episode seed for (pretraining seed, goal id); shared across checkpoints and modes.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t goal_id);

/// One episode per (seed, checkpoint, goal), rows sorted by (seed, checkpoint, goal).
std::vector<ResultRow> evaluate(const EpisodeContext& ctx, const TTTConfig& cfg, const Protocol& protocol);

/// Per-seed success averaged over checkpoints and goals; mean and standard error across seeds.
Summary summarize(const std::vector<ResultRow>& rows);

/// Sample mean and standard error (n - 1 denominator; 0 for n < 2).
std::pair<double, double> mean_stderr(std::span<const double> xs);

std::string format_results_csv(const std::vector<ResultRow>& rows);

struct AblationRow {
    std::string mode;
    Summary summary;
};

std::vector<AblationRow> ablate(const EpisodeContext& ctx, const TTTConfig& cfg, Protocol protocol,
                                const std::vector<EvalMode>& modes, std::vector<ResultRow>* all_rows = nullptr);

struct SweepRow {
    std::size_t K = 0;
    Summary summary;
};

std::vector<SweepRow> freq_sweep(const EpisodeContext& ctx, TTTConfig cfg, const Protocol& protocol,
                                 const std::vector<std::size_t>& ks, std::vector<ResultRow>* all_rows = nullptr);

}  // namespace gcttt::ttt
