#include "gcttt/ttt.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "gcttt/checkpoint.hpp"
#include "gcttt/errors.hpp"

namespace gcttt::ttt {

void TTTConfig::validate() const {
    if (K < 1) throw ConfigError("ttt: K must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("ttt: lr must be a finite value >= 0");
    if (minibatch < 1) throw ConfigError("ttt: minibatch must be >= 1");
    if (finetune_loss && !rl::is_policy_loss(*finetune_loss)) throw ConfigError("ttt: finetune_loss must be a policy loss");
    selection.validate();
}

double EpisodeRecord::mean_n_selected() const {
    if (cycles.empty()) return 0.0;
    double total = 0.0;
    for (const auto& c : cycles) total += static_cast<double>(c.n_selected);
    return total / static_cast<double>(cycles.size());
}

flops::FlopModel flop_model_of(const nn::GaussianPolicy& policy) {
    flops::FlopModel m;
    m.width = policy.net.max_hidden_width();
    m.hidden_layers = std::max<std::size_t>(policy.net.hidden_layers(), 1);
    return m;
}

namespace {

env::Action policy_action(const nn::GaussianPolicy& policy, const State& s, const State& g) {
    const double in[4] = {s.x, s.y, g.x, g.y};
    const std::vector<double> out = nn::forward(policy.net, in);
    return {out[0], out[1]};
}

/// Advances one step; returns true once the goal is reached.
bool advance(const env::MazeEnv& env, const nn::GaussianPolicy& policy, State& s, const State& goal,
             EpisodeRecord& rec, env::StepStats& stats) {
    const env::Action a = policy_action(policy, s, goal);
    s = env.step(s, a, &stats);
    const double r = env::reward(s, goal, env.eps());
    rec.actions.push_back(a);
    rec.states.push_back(s);
    rec.rewards.push_back(r);
    if (r == 0.0) {
        rec.success = true;
        rec.first_success_step = static_cast<long>(rec.actions.size());
        return true;
    }
    return false;
}

EpisodeRecord start_record(const env::MazeEnv& env, const State& goal, std::uint64_t seed) {
    EpisodeRecord rec;
    rec.goal = goal;
    rec.states.push_back(env.reset(seed));
    if (env::is_success(rec.states.back(), goal, env.eps())) {
        rec.success = true;
        rec.first_success_step = 0;
    }
    return rec;
}

}  // namespace

EpisodeRecord run_episode_frozen(const env::MazeEnv& env, const nn::GaussianPolicy& policy, const State& goal,
                                 std::uint64_t seed) {
    EpisodeRecord rec = start_record(env, goal, seed);
    const std::uint64_t c = flops::forward_cost(flop_model_of(policy));
    env::StepStats stats;
    State s = rec.states.back();
    const auto cap = static_cast<std::size_t>(env.params().episode_cap);
    while (!rec.success && rec.actions.size() < cap) advance(env, policy, s, goal, rec, stats);
    rec.flops = c * rec.actions.size();
    rec.clipped = stats.clipped;
    return rec;
}

FinetuneResult finetune(nn::GaussianPolicy& policy, const rl::CriticPair* critic, const rl::TransitionBatch& pairs,
                        rl::LossId loss, const rl::LossHyper& hyper, std::size_t N, double lr, std::size_t minibatch,
                        std::uint64_t seed) {
    FinetuneResult out;
    if (lr < 0.0) throw ConfigError("finetune: lr must be >= 0");
    if (N == 0 || lr == 0.0) return out;
    const auto n = pairs.size();
    if (n == 0) throw ConfigError("finetune: empty selection");
    const nn::GaussianPolicy saved = policy;
    nn::PolicyOptimizer opt(policy);
    Rng rng(seed);
    const auto mb = static_cast<Eigen::Index>(minibatch);
    const bool full_batch = mb >= n;
    rl::TransitionBatch b;
    if (!full_batch) {
        b.states.resize(mb, 2);
        b.actions.resize(mb, 2);
        b.goals.resize(mb, 2);
    }
    try {
        for (std::size_t step = 0; step < N; ++step) {
            if (!full_batch) {
                for (Eigen::Index i = 0; i < mb; ++i) {
                    const auto j = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
                    b.states.row(i) = pairs.states.row(j);
                    b.actions.row(i) = pairs.actions.row(j);
                    b.goals.row(i) = pairs.goals.row(j);
                }
            }
            const rl::LossResult r = rl::loss_and_grad(loss, &policy, critic, full_batch ? pairs : b, hyper);
            out.losses.push_back(r.value);
            nn::adam_step(policy, r.grad, opt, lr);
        }
    } catch (const NumericError&) {
        policy = saved;
        out.aborted = true;
    }
    return out;
}

EpisodeRecord run_episode_ttt(const EpisodeContext& ctx, const nn::GaussianPolicy& policy0, const TTTConfig& cfg,
                              const State& goal, std::uint64_t seed) {
    cfg.validate();
    if (ctx.env == nullptr) throw ConfigError("ttt: no environment");
    const env::MazeEnv& env = *ctx.env;
    EpisodeRecord rec = start_record(env, goal, seed);
    const flops::FlopModel model = flop_model_of(policy0);
    const std::uint64_t c = flops::forward_cost(model);
    const std::uint64_t grad_cost = flops::grad_step_cost(model);
    const auto cap = static_cast<std::size_t>(env.params().episode_cap);

    const bool adapt = cfg.N > 0;
    std::optional<sel::Selector> selector;
    if (adapt) {
        if (ctx.dataset == nullptr || ctx.index == nullptr) throw ConfigError("ttt: no dataset");
        sel::ValueFn vf;
        if (ctx.critic != nullptr) vf = sel::critic_value_fn(*ctx.critic);
        selector.emplace(*ctx.dataset, *ctx.index, cfg.selection, std::move(vf));
    }
    const rl::LossId loss = cfg.finetune_loss.value_or(ctx.default_loss);

    const std::vector<std::uint8_t> stored = nn::snapshot(policy0);
    nn::GaussianPolicy theta = policy0;
    env::StepStats stats;
    State s = rec.states.back();
    std::uint64_t extra = 0;
    for (std::size_t cycle = 0; !rec.success && rec.actions.size() < cap; ++cycle) {
        CycleStats cs;
        cs.start_step = rec.actions.size();
        if (adapt) {
            Rng pick(derive_seed(seed, "ttt.random_select", cycle));
            const sel::SelectionBatch batch = selector->select(s, goal, &pick);
            cs.n_relevant = batch.n_relevant;
            cs.n_selected = batch.n_selected;
            cs.threshold = batch.threshold;
            extra += 1;
            if (ctx.debug_sink) ctx.debug_sink(sel::debug_record(batch, s, goal));
            const rl::TransitionBatch pairs = sel::training_pairs(*ctx.dataset, batch, goal, env.eps());
            if (pairs.size() > 0 && cfg.lr > 0.0) {
                const FinetuneResult ft = finetune(theta, ctx.critic, pairs, loss, cfg.hyper, cfg.N, cfg.lr,
                                                   cfg.minibatch, derive_seed(seed, "ttt.minibatch", cycle));
                cs.aborted = ft.aborted;
                cs.finetuned = !ft.aborted;
                extra += grad_cost * cfg.N;
            }
        }
        for (std::size_t k = 0; k < cfg.K && rec.actions.size() < cap; ++k) {
            if (advance(env, theta, s, goal, rec, stats)) break;
        }
        if (cfg.reset_each_cycle) {
            theta = nn::restore_policy(stored);
            cs.reset_exact = theta == policy0;
        }
        if (adapt) rec.cycles.push_back(cs);
    }
    rec.flops = c * rec.actions.size() + extra;
    rec.clipped = stats.clipped;
    return rec;
}

EvalMode parse_eval_mode(std::string_view s) {
    if (s == "frozen") return EvalMode::frozen;
    if (s == "full" || s == "ttt") return EvalMode::full;
    if (s == "critic_free") return EvalMode::critic_free;
    if (s == "relevant_only") return EvalMode::relevant_only;
    if (s == "optimal_only") return EvalMode::optimal_only;
    if (s == "random") return EvalMode::random;
    throw ConfigError("unknown eval mode '" + std::string(s) +
                      "' (expected frozen|ttt|full|critic_free|relevant_only|optimal_only|random)");
}

std::string_view to_string(EvalMode m) {
    switch (m) {
        case EvalMode::frozen: return "frozen";
        case EvalMode::full: return "full";
        case EvalMode::critic_free: return "critic_free";
        case EvalMode::relevant_only: return "relevant_only";
        case EvalMode::optimal_only: return "optimal_only";
        case EvalMode::random: return "random";
    }
    return "?";
}

std::optional<sel::Mode> selection_mode_of(EvalMode m) {
    switch (m) {
        case EvalMode::frozen: return std::nullopt;
        case EvalMode::full: return sel::Mode::full;
        case EvalMode::critic_free: return sel::Mode::critic_free;
        case EvalMode::relevant_only: return sel::Mode::relevant_only;
        case EvalMode::optimal_only: return sel::Mode::optimal_only;
        case EvalMode::random: return sel::Mode::random;
    }
    return std::nullopt;
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t goal_id) { return derive_seed(seed, "episode", goal_id); }

std::vector<ResultRow> evaluate(const EpisodeContext& ctx, const TTTConfig& cfg, const Protocol& protocol) {
    if (protocol.runs.empty()) throw ConfigError("evaluate: no seeds");
    if (protocol.goals.empty()) throw ConfigError("evaluate: no goals");
    struct Task {
        std::size_t run, ckpt, goal;
    };
    std::vector<Task> tasks;
    for (std::size_t r = 0; r < protocol.runs.size(); ++r) {
        if (protocol.runs[r].checkpoints.empty()) {
            throw ConfigError("evaluate: seed " + std::to_string(protocol.runs[r].seed) + " has no checkpoints");
        }
        for (std::size_t c = 0; c < protocol.runs[r].checkpoints.size(); ++c) {
            for (std::size_t g = 0; g < protocol.goals.size(); ++g) tasks.push_back({r, c, g});
        }
    }
    TTTConfig run_cfg = cfg;
    const std::optional<sel::Mode> smode = selection_mode_of(protocol.mode);
    if (smode) run_cfg.selection.mode = *smode;
    run_cfg.validate();

    std::vector<ResultRow> rows(tasks.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                const Task& t = tasks[i];
                const SeedRun& run = protocol.runs[t.run];
                const rl::Checkpoint& ck = run.checkpoints[t.ckpt];
                const State& goal = protocol.goals[t.goal];
                const std::uint64_t es = episode_seed(run.seed, t.goal);
                EpisodeRecord rec;
                if (!smode) {
                    rec = run_episode_frozen(*ctx.env, ck.policy, goal, es);
                } else {
                    EpisodeContext ectx = ctx;
                    ectx.critic = ck.critic ? &*ck.critic : nullptr;
                    rec = run_episode_ttt(ectx, ck.policy, run_cfg, goal, es);
                }
                ResultRow& row = rows[i];
                row.backbone = protocol.backbone;
                row.regime = protocol.regime;
                row.mode = std::string(to_string(protocol.mode));
                row.checkpoint_step = ck.step;
                row.goal_id = t.goal;
                row.seed = run.seed;
                row.success = rec.success;
                row.first_success_step = rec.first_success_step;
                row.flops = rec.flops;
                row.n_cycles = rec.cycles.size();
                row.mean_n_selected = rec.mean_n_selected();
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next.store(tasks.size());
                return;
            }
        }
    };
    const std::size_t nw = std::clamp<std::size_t>(protocol.workers, 1, std::max<std::size_t>(tasks.size(), 1));
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

std::pair<double, double> mean_stderr(std::span<const double> xs) {
    if (xs.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double n = static_cast<double>(xs.size());
    const double mean = sum / n;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

Summary summarize(const std::vector<ResultRow>& rows) {
    std::map<std::uint64_t, std::pair<double, double>> by_seed;  // seed -> (successes, count)
    double flops_total = 0.0;
    for (const auto& r : rows) {
        auto& acc = by_seed[r.seed];
        acc.first += r.success ? 1.0 : 0.0;
        acc.second += 1.0;
        flops_total += static_cast<double>(r.flops);
    }
    Summary s;
    for (const auto& [seed, acc] : by_seed) s.per_seed.push_back(acc.first / acc.second);
    std::tie(s.mean, s.stderr_) = mean_stderr(s.per_seed);
    if (!rows.empty()) s.mean_flops = flops_total / static_cast<double>(rows.size());
    return s;
}

std::string format_results_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    out << "backbone,dataset_regime,mode,checkpoint_step,goal_id,seed,success,first_success_step,flops,n_cycles,"
           "mean_n_selected\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.mean_n_selected);
        out << r.backbone << ',' << r.regime << ',' << r.mode << ',' << r.checkpoint_step << ',' << r.goal_id << ','
            << r.seed << ',' << (r.success ? 1 : 0) << ',' << r.first_success_step << ',' << r.flops << ','
            << r.n_cycles << ',' << buf << '\n';
    }
    return out.str();
}

std::vector<AblationRow> ablate(const EpisodeContext& ctx, const TTTConfig& cfg, Protocol protocol,
                                const std::vector<EvalMode>& modes, std::vector<ResultRow>* all_rows) {
    std::vector<AblationRow> out;
    for (EvalMode m : modes) {
        protocol.mode = m;
        const std::vector<ResultRow> rows = evaluate(ctx, cfg, protocol);
        out.push_back({std::string(to_string(m)), summarize(rows)});
        if (all_rows != nullptr) all_rows->insert(all_rows->end(), rows.begin(), rows.end());
    }
    return out;
}

std::vector<SweepRow> freq_sweep(const EpisodeContext& ctx, TTTConfig cfg, const Protocol& protocol,
                                 const std::vector<std::size_t>& ks, std::vector<ResultRow>* all_rows) {
    std::vector<SweepRow> out;
    for (std::size_t k : ks) {
        cfg.K = k;
        const std::vector<ResultRow> rows = evaluate(ctx, cfg, protocol);
        out.push_back({k, summarize(rows)});
        if (all_rows != nullptr) all_rows->insert(all_rows->end(), rows.begin(), rows.end());
    }
    return out;
}

}  // namespace gcttt::ttt
