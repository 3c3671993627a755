#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcttt/datagen.hpp"
#include "gcttt/index.hpp"
#include "gcttt/losses.hpp"
#include "gcttt/rng.hpp"

namespace gcttt::sel {

using data::WindowRef;
using env::State;

enum class Mode : std::uint8_t { full, critic_free, relevant_only, optimal_only, random };
enum class Relevance : std::uint8_t { distance, value };

Mode parse_mode(std::string_view s);
std::string_view to_string(Mode m);
Relevance parse_relevance(std::string_view s);
std::string_view to_string(Relevance r);
/// Modes whose scoring needs a critic.
bool needs_critic(Mode m, Relevance r);

struct SelectionConfig {
    double eps = 0.5;
    std::size_t horizon = 25;
    double q = 0.2;
    Mode mode = Mode::full;
    Relevance relevance = Relevance::distance;
    /// Value-relevance threshold: windows with V(s, s_1) > c_rel.
    double c_rel = -std::numeric_limits<double>::infinity();
    double gamma = 0.99;
    /// Off: keep V >= q-th percentile (top 1-q). On: keep the top q fraction.
    bool keep_top_fraction = false;
    /// Critic-free scoring extent, as a multiple of the horizon.
    std::size_t critic_free_extent = 2;
    /// Score windows cut short by the trajectory end as if the last state
    /// repeated for the full extent, so non-reaching windows tie exactly.
    bool critic_free_absorbing = false;

    void validate() const;
};

/// Batched value oracle: out[i] = V(states[i] | goals[i]).
using ValueFn = std::function<std::vector<double>(std::span<const State> states, std::span<const State> goals)>;

/// V(s | g) from the backbone's online value network.
ValueFn critic_value_fn(const rl::CriticPair& critic);

/// One candidate sub-trajectory. `length` states (s_1..s_H') enter scoring;
/// the first `train_length` of them (and their actions) are fine-tuning data.
struct Window {
    WindowRef ref;
    std::uint32_t length = 1;
    std::uint32_t train_length = 1;
    friend bool operator==(const Window&, const Window&) = default;
};

/// Number of states from `offset` to the trajectory end, capped at `cap`.
std::uint32_t window_length(const data::Trajectory& t, std::uint32_t offset, std::size_t cap);

/// sum_{i=1}^{H'-1} gamma^(i-1) R(s_i, g) + gamma^(H'-1) v_last.
double hstep_return(std::span<const State> states, const State& goal, double v_last, double gamma, double eps);

/// sum_{i=1}^{H'} gamma^(i-1) R(s_i, g). With extent > H' the last state is
/// repeated until `extent` rewards have been summed.
double critic_free_return(std::span<const State> states, const State& goal, double gamma, double eps,
                          std::size_t extent = 0);

/// Linear interpolation between order statistics at level q in [0, 1].
double quantile(std::vector<double> values, double q);

struct SelectionBatch {
    std::vector<Window> windows;
    std::vector<double> returns;  // aligned with windows; empty when no scoring was done
    double threshold = -std::numeric_limits<double>::infinity();
    std::size_t n_relevant = 0;
    std::size_t n_selected = 0;

    bool empty() const { return windows.empty(); }
};

/// Retain {w : returns[w] >= C}, C the quantile of `returns` at level q
/// (or 1 - q under keep_top_fraction). Order is preserved.
SelectionBatch optimality_filter(std::vector<Window> windows, std::vector<double> returns, double q,
                                 bool keep_top_fraction = false);

/// Data selection for one (state, goal). Holds a per-goal cache of
/// whole-dataset window returns for optimal_only scoring.
class Selector {
public:
    Selector(const data::OfflineDataset& ds, const data::WindowIndex& index, SelectionConfig cfg,
             ValueFn value = nullptr);

    /// Relevance filter in the configured mode; windows in (traj, offset) order.
    std::vector<Window> relevant_windows(const State& s) const;

    std::vector<double> score(std::span<const Window> windows, const State& goal, bool critic_free) const;

    /// `rng` is consumed only in random mode.
    SelectionBatch select(const State& s, const State& goal, Rng* rng = nullptr) const;

    const SelectionConfig& config() const { return cfg_; }
    const data::OfflineDataset& dataset() const { return *ds_; }

    /// Every window of the dataset, in (traj, offset) order.
    std::vector<Window> all_windows() const;

private:
    Window make_window(WindowRef ref, bool critic_free) const;
    const std::vector<double>& all_returns(const State& goal) const;

    const data::OfflineDataset* ds_;
    const data::WindowIndex* index_;
    SelectionConfig cfg_;
    ValueFn value_;
    mutable std::optional<State> cached_goal_;
    mutable std::vector<double> cached_returns_;
};

/// Uniform draw of `k` distinct windows out of `pool` by partial Fisher-Yates,
/// returned in (traj, offset) order.
std::vector<Window> sample_windows(std::vector<Window> pool, std::size_t k, Rng& rng);

/// (state, action) fine-tuning pairs of the selected windows, goal fixed to g.
rl::TransitionBatch training_pairs(const data::OfflineDataset& ds, const SelectionBatch& batch, const State& goal,
                                   double eps);

/// One JSON-lines debug record.
std::string debug_record(const SelectionBatch& batch, const State& s, const State& goal);

}  // namespace gcttt::sel
