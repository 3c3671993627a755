#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "gcttt/backbones.hpp"
#include "gcttt/datagen.hpp"
#include "gcttt/envs.hpp"
#include "gcttt/flops.hpp"
#include "gcttt/ttt.hpp"

namespace gcttt::cli {

struct DatasetConfig {
    std::string regime = "play";
    std::size_t n_traj = 1000;
    std::size_t n_waypoints = 8;  // play
    std::size_t leg_cap = 4;      // play
    double noise = 0.0;
};

struct ProtocolConfig {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    /// Empty: the layout's annotated evaluation goals.
    std::vector<env::State> goals;
};

struct FlopsConfig {
    std::vector<std::uint64_t> widths{512};
    std::uint64_t hidden_layers = 2;
    std::uint64_t episode_len = 1000;
    std::uint64_t grad_steps = 100;
    std::vector<std::uint64_t> periods{1000, 500, 200};  // f = 1 / period
    /// Rounded budgets to invert alongside the exact ones.
    std::vector<double> rounded_targets{1.6e9, 2.2e9, 4.0e9};
};

struct RunConfig {
    std::string layout = "point-medium";
    env::EnvParams env;
    DatasetConfig dataset;
    rl::BackboneConfig backbone;
    rl::GoalSamplerConfig sampler;
    /// Negative: use the environment's success radius.
    double selection_eps = -1.0;
    ttt::TTTConfig ttt;
    ProtocolConfig protocol;
    std::vector<std::string> ablate_modes{"random", "relevant_only", "optimal_only", "full"};
    std::vector<std::size_t> sweep_ks{300, 100, 50};
    FlopsConfig flops;
    std::string out = "out";
    std::uint64_t seed = 0;
    /// Write one JSON line per selection to selections_<mode>.jsonl.
    bool log_selections = false;

    void validate() const;
};

/// Strict parse: unknown keys and wrong types are configuration errors.
RunConfig config_from_json(const nlohmann::json& j);
/// Fully resolved config, every field present.
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

/// FNV-1a 64 of the canonical (sorted-key, compact) serialization, as hex.
std::string config_hash(const nlohmann::json& resolved);

}  // namespace gcttt::cli
