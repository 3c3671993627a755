#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "gcttt/index.hpp"

namespace gcttt::cli {

struct Invocation {
    std::string command;  // gen-data | pretrain | eval | ablate | freq-sweep | flops
    std::string mode = "full";     // eval
    std::vector<std::size_t> ks;   // freq-sweep; empty = config.sweep_ks
    std::string out;               // empty = config.out
};

/// Runs one command and writes its manifest. Throws gcttt::Error subclasses.
void run(const RunConfig& cfg, Invocation inv);

/// Re-runs the command recorded in a manifest; `out` overrides its output directory.
void rerun(const std::string& manifest_path, const std::string& out = "");

/// Maps an exception onto the documented exit codes and prints a diagnostic.
int exit_code_of(const std::exception& e);

/// Command-line entry point (argv[0] ignored).
int main(int argc, char** argv);

// Pipeline pieces shared with the acceptance harness.

env::MazeEnv make_env(const RunConfig& cfg);
data::OfflineDataset make_dataset(const RunConfig& cfg, const env::MazeEnv& env);
double selection_eps(const RunConfig& cfg, const env::MazeEnv& env);
std::uint64_t dataset_seed(const RunConfig& cfg);
std::uint64_t pretrain_seed(const RunConfig& cfg, std::uint64_t protocol_seed);
std::vector<env::State> eval_goals(const RunConfig& cfg, const env::MazeEnv& env);

std::string dataset_path(const std::string& out);
std::string checkpoint_path(const std::string& out, std::uint64_t protocol_seed, std::size_t step);

/// Everything an evaluation needs, loaded from `out`.
struct Workspace {
    env::MazeEnv env;
    data::OfflineDataset dataset;
    data::WindowIndex index;
    ttt::Protocol protocol;

    Workspace(const RunConfig& cfg, const std::string& out);
    ttt::EpisodeContext context(const RunConfig& cfg) const;
    ttt::TTTConfig ttt_config(const RunConfig& cfg) const;
};

std::string format_summary_csv(const std::string& backbone, const std::string& regime,
                               const std::vector<std::pair<std::string, ttt::Summary>>& rows);

}  // namespace gcttt::cli
