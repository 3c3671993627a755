#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "gcttt/errors.hpp"
#include "gcttt/index.hpp"
#include "gcttt/ttt.hpp"

using namespace gcttt;
using namespace gcttt::ttt;

namespace {

struct Fixture {
    env::EnvParams params;
    env::MazeEnv env;
    data::OfflineDataset ds;
    data::WindowIndex index;
    rl::PretrainResult pre;

    Fixture()
        : params(make_params()),
          env(env::builtin_layout("point-medium"), params),
          ds(data::generate_play(env, 60, 4, 11)),
          index(ds, env.eps()),
          pre(rl::pretrain(ds, env.eps(), backbone(), {}, 5)) {}

    static env::EnvParams make_params() {
        env::EnvParams p;
        p.episode_cap = 120;
        return p;
    }
    static rl::BackboneConfig backbone() {
        rl::BackboneConfig cfg;
        cfg.algo = rl::Algo::gcbc;
        cfg.pretrain_steps = 300;
        cfg.checkpoint_steps = {150, 300};
        cfg.batch_size = 64;
        cfg.hidden = {16, 16};
        cfg.lr = 1e-3;
        cfg.log_every = 300;
        return cfg;
    }
    const rl::Checkpoint& ck() const { return pre.checkpoints.back(); }
    EpisodeContext ctx() const { return {&env, &ds, &index, &*ck().critic, rl::LossId::bc, {}}; }
    std::vector<State> goals() const {
        std::vector<State> g;
        for (const auto& e : env.eval_goals()) g.push_back(e.goal);
        return g;
    }
};

const Fixture& fx() {
    static const Fixture f;
    return f;
}

TTTConfig small_ttt() {
    TTTConfig cfg;
    cfg.K = 20;
    cfg.N = 10;
    cfg.lr = 1e-3;
    cfg.minibatch = 32;
    cfg.selection.horizon = 10;
    return cfg;
}

void check_same_rollout(const EpisodeRecord& a, const EpisodeRecord& b) {
    CHECK(a.states == b.states);
    CHECK(a.actions == b.actions);
    CHECK(a.rewards == b.rewards);
    CHECK(a.success == b.success);
    CHECK(a.first_success_step == b.first_success_step);
}

}  // namespace

TEST_CASE("no gradient steps reproduces the frozen episode bitwise") {
    const Fixture& f = fx();
    TTTConfig cfg = small_ttt();
    cfg.N = 0;
    const auto goals = f.goals();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const State& g = goals[seed % goals.size()];
        const EpisodeRecord frozen = run_episode_frozen(f.env, f.ck().policy, g, seed);
        const EpisodeRecord ttt = run_episode_ttt(f.ctx(), f.ck().policy, cfg, g, seed);
        CHECK(ttt == frozen);
    }
}

TEST_CASE("zero learning rate and empty selections leave the rollout unchanged") {
    const Fixture& f = fx();
    const State g = f.goals()[1];
    const EpisodeRecord frozen = run_episode_frozen(f.env, f.ck().policy, g, 3);

    TTTConfig cfg = small_ttt();
    cfg.lr = 0.0;
    const EpisodeRecord zero_lr = run_episode_ttt(f.ctx(), f.ck().policy, cfg, g, 3);
    check_same_rollout(zero_lr, frozen);
    REQUIRE_FALSE(zero_lr.cycles.empty());
    for (const auto& c : zero_lr.cycles) CHECK_FALSE(c.finetuned);

    cfg = small_ttt();
    cfg.selection.eps = 1e-12;
    const EpisodeRecord empty = run_episode_ttt(f.ctx(), f.ck().policy, cfg, g, 3);
    check_same_rollout(empty, frozen);
    for (const auto& c : empty.cycles) {
        CHECK(c.n_selected == 0);
        CHECK_FALSE(c.finetuned);
    }
}

TEST_CASE("fine-tuning changes the episode after the first cycle and resets exactly") {
    const Fixture& f = fx();
    const TTTConfig cfg = small_ttt();
    bool any_diff = false;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const State g = f.goals()[seed];
        const EpisodeRecord frozen = run_episode_frozen(f.env, f.ck().policy, g, seed);
        const EpisodeRecord ttt = run_episode_ttt(f.ctx(), f.ck().policy, cfg, g, seed);
        CHECK(ttt.states.front() == frozen.states.front());
        any_diff = any_diff || ttt.actions != frozen.actions;
        REQUIRE_FALSE(ttt.cycles.empty());
        for (std::size_t i = 0; i < ttt.cycles.size(); ++i) {
            CHECK(ttt.cycles[i].reset_exact);
            CHECK(ttt.cycles[i].start_step == i * cfg.K);
        }
        CHECK(ttt.success == std::any_of(ttt.rewards.begin(), ttt.rewards.end(), [](double r) { return r == 0.0; }));
        CHECK(ttt == run_episode_ttt(f.ctx(), f.ck().policy, cfg, g, seed));
    }
    CHECK(any_diff);
}

TEST_CASE("frozen episodes are deterministic and charged L C") {
    const Fixture& f = fx();
    const State g = f.goals()[0];
    const EpisodeRecord a = run_episode_frozen(f.env, f.ck().policy, g, 8);
    CHECK(a == run_episode_frozen(f.env, f.ck().policy, g, 8));
    CHECK(a.states.size() == a.actions.size() + 1);
    CHECK(a.actions.size() <= 120);
    if (!a.success) CHECK(a.actions.size() == 120);
    CHECK(a.flops == 2u * 2 * 16 * 16 * a.actions.size());
    flops::FlopModel m = flop_model_of(f.ck().policy);
    m.episode_len = a.actions.size();
    CHECK(a.flops == flops::episode_cost_frozen(m));
}

TEST_CASE("ttt flop charges") {
    const Fixture& f = fx();
    const State g = f.goals()[2];
    const TTTConfig cfg = small_ttt();
    const EpisodeRecord r = run_episode_ttt(f.ctx(), f.ck().policy, cfg, g, 4);
    const flops::FlopModel m = flop_model_of(f.ck().policy);
    std::uint64_t want = flops::forward_cost(m) * r.actions.size();
    for (const auto& c : r.cycles) want += 1 + (c.finetuned ? flops::grad_step_cost(m) * cfg.N : 0);
    CHECK(r.flops == want);
    CHECK(r.flops >= run_episode_frozen(f.env, f.ck().policy, g, 4).flops);

    // Unreachable goal so every episode runs to the cap.
    const State far{-50.0, -50.0};
    auto cost = [&](std::size_t K, std::size_t N) {
        TTTConfig c = small_ttt();
        c.K = K;
        c.N = N;
        return run_episode_ttt(f.ctx(), f.ck().policy, c, far, 1).flops;
    };
    CHECK(cost(20, 10) < cost(20, 20));
    CHECK(cost(40, 10) < cost(20, 10));
}

TEST_CASE("finetune") {
    const Fixture& f = fx();
    const State g = f.goals()[0];
    sel::SelectionConfig sc;
    sc.horizon = 10;
    const sel::Selector selector(f.ds, f.index, sc, sel::critic_value_fn(*f.ck().critic));
    const State s = f.env.reset(2);
    const sel::SelectionBatch batch = selector.select(s, g);
    REQUIRE(batch.n_selected > 0);
    const rl::TransitionBatch pairs = sel::training_pairs(f.ds, batch, g, f.env.eps());
    for (Eigen::Index i = 0; i < pairs.size(); ++i) CHECK(pairs.goals(i, 0) == g.x);

    nn::GaussianPolicy p = f.ck().policy;
    // Full batch: the objective is fixed, so the loss must fall at every step.
    const FinetuneResult r = finetune(p, nullptr, pairs, rl::LossId::bc, {}, 50, 1e-3,
                                      static_cast<std::size_t>(pairs.size()), 1);
    REQUIRE(r.losses.size() == 50);
    for (std::size_t i = 1; i < r.losses.size(); ++i) CHECK(r.losses[i] < r.losses[i - 1]);
    CHECK_FALSE(p == f.ck().policy);

    nn::GaussianPolicy q = f.ck().policy;
    finetune(q, nullptr, pairs, rl::LossId::bc, {}, 0, 1e-3, 32, 1);
    CHECK(q == f.ck().policy);
    finetune(q, nullptr, pairs, rl::LossId::bc, {}, 10, 0.0, 32, 1);
    CHECK(q == f.ck().policy);

    nn::GaussianPolicy a = f.ck().policy, b = f.ck().policy;
    finetune(a, nullptr, pairs, rl::LossId::bc, {}, 10, 1e-3, 8, 42);
    finetune(b, nullptr, pairs, rl::LossId::bc, {}, 10, 1e-3, 8, 42);
    CHECK(a == b);

    nn::GaussianPolicy d = f.ck().policy;
    const FinetuneResult blown = finetune(d, nullptr, pairs, rl::LossId::bc, {}, 20, 1e300, 8, 1);
    CHECK(blown.aborted);
    CHECK(d == f.ck().policy);

    CHECK_THROWS_AS(finetune(d, nullptr, rl::TransitionBatch{}, rl::LossId::bc, {}, 5, 1e-3, 8, 1), ConfigError);
}

TEST_CASE("config validation") {
    TTTConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.K = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TTTConfig{};
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TTTConfig{};
    cfg.finetune_loss = rl::LossId::iql_v;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_eval_mode("ttt") == EvalMode::full);
    CHECK(to_string(parse_eval_mode("optimal_only")) == "optimal_only");
    CHECK_FALSE(selection_mode_of(EvalMode::frozen).has_value());
    CHECK_THROWS_AS(parse_eval_mode("bogus"), ConfigError);
}

TEST_CASE("summary statistics") {
    const std::vector<double> xs{1, 0, 1};
    const auto [m, se] = mean_stderr(xs);
    CHECK(m == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(se == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(mean_stderr(std::vector<double>{0.5}).second == 0.0);

    std::vector<ResultRow> rows;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (std::size_t g = 0; g < 4; ++g) {
            ResultRow r;
            r.seed = seed;
            r.goal_id = g;
            r.success = true;
            r.flops = 10;
            rows.push_back(r);
        }
    }
    Summary s = summarize(rows);
    CHECK(s.mean == 1.0);
    CHECK(s.stderr_ == 0.0);
    CHECK(s.mean_flops == 10.0);
    for (auto& r : rows) r.success = r.seed != 2;
    s = summarize(rows);
    CHECK(s.per_seed == std::vector<double>{1.0, 0.0, 1.0});
    CHECK(s.stderr_ == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("evaluate, ablate and sweep") {
    const Fixture& f = fx();
    Protocol p;
    p.backbone = "gcbc";
    p.regime = "play";
    p.goals = f.goals();
    p.runs = {{5, f.pre.checkpoints}, {6, {f.ck()}}};
    p.mode = EvalMode::full;
    const TTTConfig cfg = small_ttt();
    const std::vector<ResultRow> rows = evaluate(f.ctx(), cfg, p);
    CHECK(rows.size() == (2 + 1) * 4);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& a = rows[i - 1];
        const auto& b = rows[i];
        CHECK(std::tie(a.seed, a.checkpoint_step, a.goal_id) < std::tie(b.seed, b.checkpoint_step, b.goal_id));
    }
    const std::string csv = format_results_csv(rows);
    CHECK(csv.rfind("backbone,dataset_regime,mode,checkpoint_step,goal_id,seed,success,first_success_step,flops,"
                    "n_cycles,mean_n_selected\n",
                    0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(rows.size() + 1));

    Protocol par = p;
    par.workers = 3;
    CHECK(format_results_csv(evaluate(f.ctx(), cfg, par)) == csv);

    std::vector<ResultRow> all;
    const auto table = ablate(f.ctx(), cfg, p, {EvalMode::random, EvalMode::full, EvalMode::frozen}, &all);
    REQUIRE(table.size() == 3);
    CHECK(table[0].mode == "random");
    CHECK(table[1].summary.per_seed == summarize(rows).per_seed);
    CHECK(all.size() == 3 * rows.size());

    const auto sweep = freq_sweep(f.ctx(), cfg, p, {60, 30});
    REQUIRE(sweep.size() == 2);
    CHECK(sweep[0].K == 60);
    CHECK(sweep[1].K == 30);

    Protocol bad = p;
    bad.runs.push_back({7, {}});
    CHECK_THROWS_AS(evaluate(f.ctx(), cfg, bad), ConfigError);
    bad.runs.clear();
    CHECK_THROWS_AS(evaluate(f.ctx(), cfg, bad), ConfigError);
}
