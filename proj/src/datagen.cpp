#include "gcttt/datagen.hpp"

#include <algorithm>

#include "gcttt/binio.hpp"
#include "gcttt/errors.hpp"
#include "gcttt/rng.hpp"

namespace gcttt::data {

using env::Cell;
using env::EnvKind;
using env::MazeEnv;
using env::Vec2;

namespace {

constexpr std::array<Cell, 4> kMoves{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};  // N, E, S, W
constexpr std::array<env::GridMove, 4> kGridOf{env::GridMove::north, env::GridMove::east, env::GridMove::south,
                                               env::GridMove::west};

/// Next cell on a shortest path toward the source of `dist` (first in N, E, S, W order).
Cell next_cell(const env::MazeLayout& layout, const std::vector<int>& dist, Cell cur) {
    const int d = dist[layout.cell_index(cur)];
    for (Cell m : kMoves) {
        const Cell n{cur.r + m.r, cur.c + m.c};
        if (!layout.is_wall(n) && dist[layout.cell_index(n)] == d - 1) return n;
    }
    return cur;
}

Action random_action(const MazeEnv& env, const State& s, Rng& rng) {
    if (env.kind() == EnvKind::grid) {
        const Cell cur = env.layout().cell_of(s);
        std::vector<std::size_t> feasible;
        for (std::size_t i = 0; i < kMoves.size(); ++i) {
            if (!env.layout().is_wall(cur.r + kMoves[i].r, cur.c + kMoves[i].c)) feasible.push_back(i);
        }
        return env::grid_action(kGridOf[feasible[uniform_index(rng, feasible.size())]]);
    }
    const double b = env.action_bound();
    return {uniform(rng, -b, b), uniform(rng, -b, b)};
}

/// Shortest-path follower toward `goal_cell`; `dist` is the BFS field of that cell.
Action greedy_action(const MazeEnv& env, const State& s, Cell goal_cell, const std::vector<int>& dist) {
    const auto& layout = env.layout();
    const Cell cur = layout.cell_of(s);
    if (env.kind() == EnvKind::grid) {
        const Cell n = next_cell(layout, dist, cur);
        return {static_cast<double>(n.c - cur.c), static_cast<double>(n.r - cur.r)};
    }
    // Head for the centre of the next cell on the path; union of two adjacent
    // cells is convex, so the straight segment never meets a wall.
    const Vec2 target = cur == goal_cell ? layout.center(goal_cell) : layout.center(next_cell(layout, dist, cur));
    Vec2 a{target.x - s.x, target.y - s.y};
    const double inf_norm = std::max(std::abs(a.x), std::abs(a.y));
    const double bound = env.action_bound();
    if (inf_norm > bound) {
        a.x *= bound / inf_norm;
        a.y *= bound / inf_norm;
    }
    return a;
}

Cell random_free_cell(const std::vector<Cell>& free, Rng& rng) { return free[uniform_index(rng, free.size())]; }

State cell_state(const MazeEnv& env, Cell c) { return env.layout().center(c); }

/// Follow a shortest path to `goal_cell` until inside its success ball or `max_steps` elapse.
void follow_leg(const MazeEnv& env, Trajectory& traj, Cell goal_cell, double noise, std::size_t max_steps, Rng& rng) {
    const auto dist = env::bfs_distances(env.layout(), goal_cell);
    const State goal = env.layout().center(goal_cell);
    for (std::size_t k = 0; k < max_steps; ++k) {
        const State& s = traj.states.back();
        if (env::is_success(s, goal, env.eps())) return;
        const bool explore = noise > 0.0 && uniform01(rng) < noise;
        const Action a = explore ? random_action(env, s, rng) : greedy_action(env, s, goal_cell, dist);
        traj.actions.push_back(a);
        traj.states.push_back(env.step(s, a));
    }
}

DatasetMeta base_meta(const MazeEnv& env, Regime regime, std::uint64_t seed, double noise) {
    DatasetMeta m;
    m.layout_name = env.layout().name;
    m.env_kind = env.kind();
    m.regime = regime;
    m.seed = seed;
    m.noise = noise;
    m.a_max = env.params().a_max;
    m.contact_margin = env.params().contact_margin;
    return m;
}

/// Steps a leg of `cells` path length may take before it is cut off.
std::size_t leg_step_budget(const MazeEnv& env, std::size_t cells) {
    if (env.kind() == EnvKind::grid) return 4 * cells + 4;
    const double per_cell = env.layout().cell_size / env.params().a_max;
    return static_cast<std::size_t>(std::ceil(3.0 * per_cell * static_cast<double>(cells + 1)));
}

}  // namespace

Regime parse_regime(std::string_view s) {
    if (s == "expert") return Regime::expert;
    if (s == "play") return Regime::play;
    throw ConfigError("unknown dataset regime '" + std::string(s) + "' (expected expert|play)");
}

std::string_view to_string(Regime r) { return r == Regime::expert ? "expert" : "play"; }

std::size_t OfflineDataset::num_transitions() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.length();
    return n;
}

std::size_t OfflineDataset::num_states() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.states.size();
    return n;
}

OfflineDataset generate_expert(const MazeEnv& env, std::size_t n_traj, double noise, std::uint64_t seed) {
    if (n_traj < 1) throw ConfigError("generate_expert: n_traj must be >= 1");
    if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("generate_expert: noise must lie in [0, 1)");
    const auto free = env.layout().free_cells();
    OfflineDataset ds;
    ds.meta = base_meta(env, Regime::expert, seed, noise);
    ds.trajectories.reserve(n_traj);
    for (std::size_t i = 0; i < n_traj; ++i) {
        Rng rng(derive_seed(seed, "datagen.expert", i));
        Trajectory traj;
        traj.tag = Regime::expert;
        // A trajectory that never moves (noise-frozen or start == goal) is resampled.
        while (traj.actions.empty()) {
            const Cell start = random_free_cell(free, rng);
            Cell goal = random_free_cell(free, rng);
            while (goal == start) goal = random_free_cell(free, rng);
            traj.states = {cell_state(env, start)};
            follow_leg(env, traj, goal, noise, static_cast<std::size_t>(env.params().episode_cap), rng);
        }
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

OfflineDataset generate_play(const MazeEnv& env, std::size_t n_traj, std::size_t n_waypoints, std::uint64_t seed,
                             PlayOptions options) {
    if (n_traj < 1) throw ConfigError("generate_play: n_traj must be >= 1");
    if (n_waypoints < 2) throw ConfigError("generate_play: n_waypoints must be >= 2");
    if (options.leg_cap < 1) throw ConfigError("generate_play: leg_cap must be >= 1");
    if (!(options.noise >= 0.0 && options.noise < 1.0)) throw ConfigError("generate_play: noise must lie in [0, 1)");
    const auto& layout = env.layout();
    const auto free = layout.free_cells();
    OfflineDataset ds;
    ds.meta = base_meta(env, Regime::play, seed, options.noise);
    ds.meta.n_waypoints = static_cast<std::uint32_t>(n_waypoints);
    ds.meta.leg_cap = static_cast<std::uint32_t>(options.leg_cap);
    ds.trajectories.reserve(n_traj);
    for (std::size_t i = 0; i < n_traj; ++i) {
        Rng rng(derive_seed(seed, "datagen.play", i));
        Trajectory traj;
        traj.tag = Regime::play;
        while (traj.actions.empty()) {
            Cell waypoint = random_free_cell(free, rng);
            traj.states = {cell_state(env, waypoint)};
            for (std::size_t k = 0; k < n_waypoints; ++k) {
                const auto dist = env::bfs_distances(layout, waypoint);
                std::vector<Cell> candidates;
                for (Cell c : free) {
                    const int d = dist[layout.cell_index(c)];
                    if (d >= 1 && d <= static_cast<int>(options.leg_cap)) candidates.push_back(c);
                }
                const Cell next = candidates[uniform_index(rng, candidates.size())];
                const auto cells = static_cast<std::size_t>(dist[layout.cell_index(next)]);
                follow_leg(env, traj, next, options.noise, leg_step_budget(env, cells), rng);
                waypoint = next;
            }
        }
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

bool replay_consistent(const MazeEnv& env, const Trajectory& traj) {
    if (traj.actions.empty() || traj.states.size() != traj.actions.size() + 1) return false;
    State s = traj.states.front();
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
        s = env.step(s, traj.actions[t]);
        if (!(s == traj.states[t + 1])) return false;
    }
    return true;
}

std::vector<std::uint8_t> encode_dataset(const OfflineDataset& ds) {
    if (ds.trajectories.empty()) throw ConfigError("save_dataset: refusing to save an empty dataset");
    binio::Writer w;
    w.bytes("GCTTDS");
    w.u16(1);
    w.str(ds.meta.layout_name);
    w.u8(static_cast<std::uint8_t>(ds.meta.regime));
    w.u8(static_cast<std::uint8_t>(ds.meta.env_kind));
    w.u64(ds.meta.seed);
    w.f64(ds.meta.noise);
    w.u32(ds.meta.n_waypoints);
    w.u32(ds.meta.leg_cap);
    w.f64(ds.meta.a_max);
    w.f64(ds.meta.contact_margin);
    w.u32(static_cast<std::uint32_t>(ds.trajectories.size()));
    for (const auto& t : ds.trajectories) {
        if (t.actions.empty() || t.states.size() != t.actions.size() + 1) {
            throw ConfigError("save_dataset: malformed trajectory (need T >= 1 and T + 1 states)");
        }
        w.u8(static_cast<std::uint8_t>(t.tag));
        w.u32(static_cast<std::uint32_t>(t.length()));
        for (const auto& s : t.states) {
            w.f64(s.x);
            w.f64(s.y);
        }
        for (const auto& a : t.actions) {
            w.f64(a.x);
            w.f64(a.y);
        }
    }
    w.seal();
    return w.take();
}

OfflineDataset decode_dataset(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12) throw IntegrityError("dataset: truncated");
    const auto body = bytes.first(bytes.size() - 4);
    binio::Reader crc_reader(bytes.last(4));
    if (crc_reader.u32() != binio::crc32(body)) throw IntegrityError("dataset: checksum mismatch");
    binio::Reader r(body);
    if (r.remaining() < 6 || r.bytes(6) != "GCTTDS") throw IntegrityError("dataset: bad magic");
    const std::uint16_t version = r.u16();
    if (version != 1) throw IntegrityError("dataset: unsupported version " + std::to_string(version));
    OfflineDataset ds;
    ds.meta.layout_name = r.str();
    const std::uint8_t regime = r.u8();
    const std::uint8_t kind = r.u8();
    if (regime > 1 || kind > 1) throw IntegrityError("dataset: bad regime/env tag");
    ds.meta.regime = static_cast<Regime>(regime);
    ds.meta.env_kind = static_cast<EnvKind>(kind);
    ds.meta.seed = r.u64();
    ds.meta.noise = r.f64();
    ds.meta.n_waypoints = r.u32();
    ds.meta.leg_cap = r.u32();
    ds.meta.a_max = r.f64();
    ds.meta.contact_margin = r.f64();
    const std::uint32_t n = r.u32();
    if (n == 0) throw IntegrityError("dataset: no trajectories");
    ds.trajectories.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Trajectory t;
        const std::uint8_t tag = r.u8();
        if (tag > 1) throw IntegrityError("dataset: bad trajectory tag");
        t.tag = static_cast<Regime>(tag);
        const std::uint32_t len = r.u32();
        if (len == 0 || static_cast<std::size_t>(len) * 32 > r.remaining()) throw IntegrityError("dataset: bad length");
        t.states.resize(len + 1);
        t.actions.resize(len);
        for (auto& s : t.states) {
            s.x = r.f64();
            s.y = r.f64();
        }
        for (auto& a : t.actions) {
            a.x = r.f64();
            a.y = r.f64();
        }
        ds.trajectories.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw IntegrityError("dataset: trailing bytes");
    return ds;
}

void save_dataset(const OfflineDataset& ds, const std::string& path) { binio::write_file(path, encode_dataset(ds)); }

OfflineDataset load_dataset(const std::string& path) { return decode_dataset(binio::read_file(path)); }

}  // namespace gcttt::data
