#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcttt/envs.hpp"

namespace gcttt::data {

using env::Action;
using env::State;

enum class Regime : std::uint8_t { expert = 0, play = 1 };

Regime parse_regime(std::string_view s);
std::string_view to_string(Regime r);

/// states has length T + 1, actions length T, T >= 1.
struct Trajectory {
    std::vector<State> states;
    std::vector<Action> actions;
    Regime tag = Regime::expert;

    std::size_t length() const { return actions.size(); }
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct DatasetMeta {
    std::string layout_name;
    env::EnvKind env_kind = env::EnvKind::point;
    Regime regime = Regime::expert;
    std::uint64_t seed = 0;
    double noise = 0.0;
    std::uint32_t n_waypoints = 0;  // play only
    std::uint32_t leg_cap = 0;      // play only: max BFS length of one leg, in cells
    double a_max = 0.0;
    double contact_margin = 0.0;
    friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct OfflineDataset {
    DatasetMeta meta;
    std::vector<Trajectory> trajectories;

    std::size_t num_transitions() const;
    std::size_t num_states() const;
    const State& state(std::size_t traj, std::size_t t) const { return trajectories[traj].states[t]; }
    friend bool operator==(const OfflineDataset&, const OfflineDataset&) = default;
};

/// Goal-directed demonstrations: random free start and goal, shortest-path
/// follower; with probability `noise` per step a random feasible action.
/// Each trajectory ends on goal achievement or at the env's episode cap.
OfflineDataset generate_expert(const env::MazeEnv& env, std::size_t n_traj, double noise, std::uint64_t seed);

struct PlayOptions {
    std::size_t leg_cap = 4;  // cells
    double noise = 0.0;
};

/// Task-agnostic play: each trajectory chains `n_waypoints` shortest-path legs,
/// every waypoint within `leg_cap` BFS cells of the previous one.
OfflineDataset generate_play(const env::MazeEnv& env, std::size_t n_traj, std::size_t n_waypoints, std::uint64_t seed,
                             PlayOptions options = {});

/// True iff re-simulating `traj.actions` from its first state reproduces every state exactly.
bool replay_consistent(const env::MazeEnv& env, const Trajectory& traj);

/// Dataset file:
///
///   "GCTTDS" | u16 version(=1) | str layout_name | u8 regime | u8 env_kind | u64 seed | f64 noise
///   | u32 n_waypoints | u32 leg_cap | f64 a_max | f64 contact_margin | u32 n_traj
///   | per trajectory: u8 tag | u32 T | f64 states[2(T+1)] | f64 actions[2T]
///   | u32 crc32
///
/// Strings are u32 length + bytes; everything little-endian.
std::vector<std::uint8_t> encode_dataset(const OfflineDataset& ds);
OfflineDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const OfflineDataset& ds, const std::string& path);
OfflineDataset load_dataset(const std::string& path);

}  // namespace gcttt::data
