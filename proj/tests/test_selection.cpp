#include <cmath>
#include <limits>

#include "doctest.h"
#include "gcttt/errors.hpp"
#include "gcttt/selection.hpp"
#include "json.hpp"
#include "selection_oracle.hpp"

using namespace gcttt;
using namespace gcttt::sel;
using data::OfflineDataset;

namespace {

const env::MazeEnv& point_env() {
    static const env::MazeEnv env(env::builtin_layout("point-medium"), env::EnvParams{});
    return env;
}

const OfflineDataset& play_data() {
    static const OfflineDataset ds = data::generate_play(point_env(), 30, 4, 77, data::PlayOptions{4, 0.2});
    return ds;
}

// Three straight trajectories along y = 0.5, 1.5, 2.5 with x stepping by 0.5.
OfflineDataset toy_dataset() {
    OfflineDataset ds;
    const int lengths[3] = {4, 6, 3};
    for (int k = 0; k < 3; ++k) {
        data::Trajectory t;
        for (int i = 0; i <= lengths[k]; ++i) t.states.push_back({0.5 + 0.5 * i, 0.5 + k});
        for (int i = 0; i < lengths[k]; ++i) t.actions.push_back({0.5, 0.0});
        ds.trajectories.push_back(t);
    }
    return ds;
}

// Value table: V(s | g) = -|s.x - g.x| - |s.y - g.y|.
std::vector<double> manhattan_value(std::span<const State> s, std::span<const State> g) {
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = -std::abs(s[i].x - g[i].x) - std::abs(s[i].y - g[i].y);
    return out;
}

SelectionConfig config(Mode m, double eps, std::size_t h) {
    SelectionConfig c;
    c.mode = m;
    c.eps = eps;
    c.horizon = h;
    return c;
}

}  // namespace

TEST_CASE("quantile: linear interpolation between order statistics") {
    CHECK(quantile({-5, -4, -3, -2, -1}, 0.2) == doctest::Approx(-4.2));
    CHECK(quantile({3, 1, 2}, 0.0) == 1.0);
    CHECK(quantile({3, 1, 2}, 1.0) == 3.0);
    CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
    CHECK(quantile({7.5}, 0.3) == 7.5);
    CHECK_THROWS_AS(quantile({}, 0.2), ShapeError);
    CHECK_THROWS_AS(quantile({1.0}, 1.5), ConfigError);
}

TEST_CASE("optimality filter hand example") {
    std::vector<Window> ws(5);
    for (std::uint32_t i = 0; i < 5; ++i) ws[i].ref = {0, i};
    const SelectionBatch b = optimality_filter(ws, {-5, -4, -3, -2, -1}, 0.2);
    CHECK(b.threshold == doctest::Approx(-4.2));
    CHECK(b.n_relevant == 5);
    CHECK(b.n_selected == 4);
    CHECK(b.returns == std::vector<double>{-4, -3, -2, -1});
    CHECK(b.windows.front().ref.offset == 1);

    CHECK(optimality_filter(ws, {-5, -4, -3, -2, -1}, 0.0).n_selected == 5);
    CHECK(optimality_filter(ws, {-2, -2, -2, -2, -2}, 0.2).n_selected == 5);
    const SelectionBatch top = optimality_filter(ws, {-5, -4, -3, -2, -1}, 0.2, true);
    CHECK(top.threshold == doctest::Approx(-1.8));
    CHECK(top.n_selected == 1);
    const SelectionBatch none = optimality_filter({}, {}, 0.2);
    CHECK(none.empty());
    CHECK(none.n_relevant == 0);
}

TEST_CASE("retention fraction with distinct returns") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 300);
        std::vector<Window> ws(n);
        std::vector<double> ret(n);
        for (std::size_t i = 0; i < n; ++i) ret[i] = uniform(rng, -50.0, 0.0);
        // Type-7 quantile: exactly ceil(0.2 (n - 1)) order statistics fall strictly below C.
        const std::size_t kept = optimality_filter(ws, ret, 0.2).n_selected;
        const auto below = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(n - 1) - 1e-9));
        CHECK(kept == n - below);
        const double frac = static_cast<double>(kept) / static_cast<double>(n);
        CHECK(frac >= 0.8 - 0.8 / static_cast<double>(n) - 1e-12);
        CHECK(frac <= 0.8 + 0.2 / static_cast<double>(n) + 1e-12);
    }
}

TEST_CASE("hstep return") {
    const State g{10.0, 10.0};
    const std::vector<State> one{{0.0, 0.0}};
    CHECK(hstep_return(one, g, -3.25, 0.99, 0.5) == -3.25);
    const std::vector<State> two{{0.0, 0.0}, {1.0, 0.0}};
    CHECK(hstep_return(two, g, -10.0, 0.99, 0.5) == doctest::Approx(-10.9));
    const std::vector<State> inside{{10.0, 10.0}, {10.1, 10.0}, {10.0, 10.2}};
    CHECK(hstep_return(inside, g, 0.0, 0.99, 0.5) == 0.0);
}

TEST_CASE("critic-free return") {
    const double gamma = 0.9;
    const State g{0.0, 0.0};
    std::vector<State> far(7, State{5.0, 5.0});
    CHECK(critic_free_return(far, g, gamma, 0.5) == doctest::Approx(-(1 - std::pow(gamma, 7)) / (1 - gamma)));
    // Reaches g at step k = 4 and stays.
    const std::vector<State> reach{{3, 0}, {2, 0}, {1, 0}, {0, 0}, {0, 0}, {0, 0}};
    CHECK(critic_free_return(reach, g, gamma, 0.5) == doctest::Approx(-(1 - std::pow(gamma, 3)) / (1 - gamma)));
    // Absorbing extent: short non-reaching windows tie bitwise with full-length ones.
    const std::vector<State> short_far(3, State{5.0, 5.0});
    CHECK(critic_free_return(short_far, g, gamma, 0.5, 7) == critic_free_return(far, g, gamma, 0.5));
    CHECK(critic_free_return(far, g, gamma, 0.5, 3) == critic_free_return(far, g, gamma, 0.5));
    CHECK(critic_free_return(reach, g, gamma, 0.5, 12) == critic_free_return(reach, g, gamma, 0.5));
    const std::vector<State> ends_near{{3, 0}, {2, 0}};
    CHECK(critic_free_return(ends_near, g, gamma, 0.5, 5) == doctest::Approx(-(1 - std::pow(gamma, 5)) / (1 - gamma)));

    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        std::vector<State> w(1 + uniform_index(rng, 20));
        for (auto& s : w) s = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
        const double lhs = critic_free_return(w, g, gamma, 0.5);
        const double rhs = hstep_return(w, g, 0.0, gamma, 0.5) + std::pow(gamma, static_cast<double>(w.size() - 1)) *
                                                                       env::reward(w.back(), g, 0.5);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
    }
}

TEST_CASE("window lengths truncate at the trajectory end") {
    const OfflineDataset ds = toy_dataset();
    CHECK(window_length(ds.trajectories[0], 0, 3) == 3);
    CHECK(window_length(ds.trajectories[0], 3, 3) == 2);
    CHECK(window_length(ds.trajectories[0], 4, 3) == 1);
}

TEST_CASE("toy dataset: full selection against hand enumeration") {
    const OfflineDataset ds = toy_dataset();
    const data::WindowIndex index(ds, 0.5);
    SelectionConfig cfg = config(Mode::full, 0.6, 2);
    cfg.gamma = 0.5;
    const Selector sel(ds, index, cfg, manhattan_value);
    // Relevant to (1.0, 1.5): x in {0.5, 1.0, 1.5} on trajectory 1.
    const State s{1.0, 1.5}, g{3.5, 1.5};
    const auto rel = sel.relevant_windows(s);
    REQUIRE(rel.size() == 3);
    // Window at offset t covers x_t, x_{t+1}; return = -1 + 0.5 * V(x_{t+1}) = -1 - 0.5 * (3.5 - x_{t+1}).
    // Returns: -2.25, -2.0, -1.75; C(0.2) = -2.15 keeps offsets 1, 2.
    const SelectionBatch b = sel.select(s, g);
    CHECK(b.returns == std::vector<double>{-2.0, -1.75});
    CHECK(b.threshold == doctest::Approx(-2.15));
    REQUIRE(b.windows.size() == 2);
    CHECK(b.windows[0].ref == WindowRef{1, 1});
    CHECK(b.windows[1].ref == WindowRef{1, 2});

    const auto pairs = training_pairs(ds, b, g, 0.5);
    CHECK(pairs.size() == 2);
    CHECK(pairs.goals(0, 0) == 3.5);
    CHECK(pairs.actions(1, 0) == 0.5);
    CHECK(pairs.states(1, 0) == 1.5);
}

TEST_CASE("mode relations") {
    const OfflineDataset& ds = play_data();
    const data::WindowIndex index(ds, 0.5);
    const rl::CriticPair critic = rl::make_critic(3, 2, 2, {8, 8});
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const State s = ds.state(uniform_index(rng, ds.trajectories.size()), 0);
        const State g{uniform(rng, 1, 10), uniform(rng, 1, 10)};
        const Selector full(ds, index, config(Mode::full, 0.5, 10), critic_value_fn(critic));
        const Selector rel(ds, index, config(Mode::relevant_only, 0.5, 10), critic_value_fn(critic));
        const Selector wide(ds, index, config(Mode::relevant_only, 0.9, 10));
        const auto f = full.select(s, g), r = rel.select(s, g), w = wide.select(s, g);
        CHECK(r.windows == rel.relevant_windows(s));
        CHECK(r.n_selected == r.windows.size());
        CHECK(std::includes(r.windows.begin(), r.windows.end(), f.windows.begin(), f.windows.end(),
                            [](const Window& a, const Window& b) { return a.ref < b.ref; }));
        CHECK(std::includes(w.windows.begin(), w.windows.end(), r.windows.begin(), r.windows.end(),
                            [](const Window& a, const Window& b) { return a.ref < b.ref; }));
        if (f.n_relevant >= 1) CHECK(f.n_selected >= 1);
        for (double v : f.returns) CHECK(v >= f.threshold);
    }
}

TEST_CASE("value relevance with the -inf sentinel keeps every window") {
    const OfflineDataset ds = toy_dataset();
    const data::WindowIndex index(ds, 0.5);
    SelectionConfig cfg = config(Mode::relevant_only, 0.5, 3);
    cfg.relevance = Relevance::value;
    const Selector sel(ds, index, cfg, manhattan_value);
    CHECK(sel.relevant_windows({1.0, 1.0}).size() == ds.num_states());
    cfg.c_rel = -1.0;
    const Selector near(ds, index, cfg, manhattan_value);
    for (const Window& w : near.relevant_windows({1.0, 1.5})) {
        const State st = ds.state(w.ref.traj, w.ref.offset);
        CHECK(std::abs(st.x - 1.0) + std::abs(st.y - 1.5) < 1.0);
    }
    CHECK_THROWS_AS(Selector(ds, index, cfg), ConfigError);
}

TEST_CASE("tiny eps keeps only windows starting at s") {
    const OfflineDataset& ds = play_data();
    const data::WindowIndex index(ds, 0.5);
    const Selector sel(ds, index, config(Mode::relevant_only, 1e-12, 5));
    const State s = ds.state(4, 3);
    for (const Window& w : sel.relevant_windows(s)) CHECK(ds.state(w.ref.traj, w.ref.offset) == s);
    CHECK_FALSE(sel.relevant_windows(s).empty());
}

TEST_CASE("critics are required where scoring needs them") {
    const OfflineDataset ds = toy_dataset();
    const data::WindowIndex index(ds, 0.5);
    CHECK_THROWS_AS(Selector(ds, index, config(Mode::full, 0.5, 3)), ConfigError);
    CHECK_THROWS_AS(Selector(ds, index, config(Mode::optimal_only, 0.5, 3)), ConfigError);
    CHECK_THROWS_AS(Selector(ds, index, config(Mode::random, 0.5, 3)), ConfigError);
    CHECK_NOTHROW(Selector(ds, index, config(Mode::critic_free, 0.5, 3)));
    SelectionConfig bad = config(Mode::critic_free, 0.0, 3);
    CHECK_THROWS_AS(Selector(ds, index, bad), ConfigError);
    bad = config(Mode::critic_free, 0.5, 0);
    CHECK_THROWS_AS(Selector(ds, index, bad), ConfigError);
    bad = config(Mode::critic_free, 0.5, 3);
    bad.q = 1.0;
    CHECK_THROWS_AS(Selector(ds, index, bad), ConfigError);
    CHECK(parse_mode("optimal_only") == Mode::optimal_only);
    CHECK_THROWS_AS(parse_mode("both"), ConfigError);
}

TEST_CASE("critic-free windows extend past the horizon") {
    const OfflineDataset ds = toy_dataset();
    const data::WindowIndex index(ds, 0.5);
    const Selector sel(ds, index, config(Mode::critic_free, 0.3, 2));
    const auto ws = sel.relevant_windows({0.5, 1.5});
    REQUIRE(ws.size() == 1);
    CHECK(ws[0].length == 4);
    CHECK(ws[0].train_length == 2);
}

TEST_CASE("random mode matches full-mode counts and is reproducible") {
    const OfflineDataset& ds = play_data();
    const data::WindowIndex index(ds, 0.5);
    const rl::CriticPair critic = rl::make_critic(4, 2, 2, {8, 8});
    const Selector full(ds, index, config(Mode::full, 0.5, 10), critic_value_fn(critic));
    const Selector rnd(ds, index, config(Mode::random, 0.5, 10), critic_value_fn(critic));
    const State s = ds.state(2, 5), g{9.5, 9.5};
    Rng a(11), b(11);
    const auto x = rnd.select(s, g, &a), y = rnd.select(s, g, &b);
    CHECK(x.windows == y.windows);
    CHECK(x.n_selected == full.select(s, g).n_selected);
    CHECK_THROWS_AS(rnd.select(s, g), ConfigError);
}

TEST_CASE("select equals brute force on random probes") {
    const OfflineDataset& ds = play_data();
    REQUIRE(ds.num_transitions() <= 10000);
    const auto failures = oracle::random_probes(ds, rl::make_critic(21, 2, 2, {8, 8}), 1000, 2024);
    CHECK(failures.empty());
    if (!failures.empty()) MESSAGE(failures.front());
}

TEST_CASE("debug record") {
    std::vector<Window> ws(2);
    ws[1].ref = {3, 4};
    SelectionBatch b = optimality_filter(ws, {-1.0, -0.5}, 0.2);
    const auto j = nlohmann::json::parse(debug_record(b, {1.0, 2.0}, {3.0, 4.0}));
    CHECK(j["n_relevant"] == 2);
    CHECK(j["n_selected"] == 1);
    CHECK(j["retained"][0][0] == 3);
    CHECK(j["retained"][0][1] == 4);
    CHECK(j["goal"][1] == 4.0);
    SelectionBatch empty;
    CHECK(nlohmann::json::parse(debug_record(empty, {0, 0}, {0, 0}))["C"].is_null());
}
