#include "gcttt/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "gcttt/errors.hpp"

namespace gcttt::sel {

Mode parse_mode(std::string_view s) {
    if (s == "full") return Mode::full;
    if (s == "critic_free") return Mode::critic_free;
    if (s == "relevant_only") return Mode::relevant_only;
    if (s == "optimal_only") return Mode::optimal_only;
    if (s == "random") return Mode::random;
    throw ConfigError("unknown selection mode '" + std::string(s) +
                      "' (expected full|critic_free|relevant_only|optimal_only|random)");
}

std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::full: return "full";
        case Mode::critic_free: return "critic_free";
        case Mode::relevant_only: return "relevant_only";
        case Mode::optimal_only: return "optimal_only";
        case Mode::random: return "random";
    }
    return "?";
}

Relevance parse_relevance(std::string_view s) {
    if (s == "distance") return Relevance::distance;
    if (s == "value") return Relevance::value;
    throw ConfigError("unknown relevance '" + std::string(s) + "' (expected distance|value)");
}

std::string_view to_string(Relevance r) { return r == Relevance::distance ? "distance" : "value"; }

bool needs_critic(Mode m, Relevance r) {
    if (r == Relevance::value) return true;
    return m == Mode::full || m == Mode::optimal_only || m == Mode::random;
}

void SelectionConfig::validate() const {
    if (!(eps > 0.0)) throw ConfigError("selection: eps must be > 0");
    if (horizon < 1) throw ConfigError("selection: horizon must be >= 1");
    if (!(q >= 0.0 && q < 1.0)) throw ConfigError("selection: q must lie in [0, 1)");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("selection: gamma must lie in (0, 1)");
    if (critic_free_extent < 1) throw ConfigError("selection: critic_free_extent must be >= 1");
    if (std::isnan(c_rel)) throw ConfigError("selection: c_rel is NaN");
}

ValueFn critic_value_fn(const rl::CriticPair& critic) {
    const nn::ParamStore* v = &critic.v;
    return [v](std::span<const State> states, std::span<const State> goals) {
        if (states.size() != goals.size()) throw ShapeError("value fn: states/goals length mismatch");
        std::vector<double> out(states.size());
        constexpr std::size_t kChunk = 4096;
        for (std::size_t lo = 0; lo < states.size(); lo += kChunk) {
            const std::size_t n = std::min(kChunk, states.size() - lo);
            nn::Matrix in(static_cast<Eigen::Index>(n), 4);
            for (std::size_t i = 0; i < n; ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                in(r, 0) = states[lo + i].x;
                in(r, 1) = states[lo + i].y;
                in(r, 2) = goals[lo + i].x;
                in(r, 3) = goals[lo + i].y;
            }
            const nn::Matrix y = nn::forward_rows(*v, in);
            for (std::size_t i = 0; i < n; ++i) out[lo + i] = y(static_cast<Eigen::Index>(i), 0);
        }
        return out;
    };
}

std::uint32_t window_length(const data::Trajectory& t, std::uint32_t offset, std::size_t cap) {
    const std::size_t remaining = t.states.size() - offset;
    return static_cast<std::uint32_t>(std::min(remaining, cap));
}

double hstep_return(std::span<const State> states, const State& goal, double v_last, double gamma, double eps) {
    if (states.empty()) throw ShapeError("hstep_return: empty window");
    double total = 0.0;
    double disc = 1.0;
    for (std::size_t i = 0; i + 1 < states.size(); ++i) {
        total += disc * env::reward(states[i], goal, eps);
        disc *= gamma;
    }
    return total + disc * v_last;
}

double critic_free_return(std::span<const State> states, const State& goal, double gamma, double eps,
                          std::size_t extent) {
    if (states.empty()) throw ShapeError("critic_free_return: empty window");
    double total = 0.0;
    double disc = 1.0;
    const std::size_t n = std::max(extent, states.size());
    for (std::size_t i = 0; i < n; ++i) {
        total += disc * env::reward(states[std::min(i, states.size() - 1)], goal, eps);
        disc *= gamma;
    }
    return total;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ShapeError("quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto f = static_cast<std::size_t>(std::floor(h));
    if (f + 1 >= values.size()) return values.back();
    const double lo = values[f];
    const double hi = values[f + 1];
    const double c = lo + (h - static_cast<double>(f)) * (hi - lo);
    return std::clamp(c, lo, hi);
}

SelectionBatch optimality_filter(std::vector<Window> windows, std::vector<double> returns, double q,
                                 bool keep_top_fraction) {
    if (windows.size() != returns.size()) throw ShapeError("optimality_filter: windows/returns length mismatch");
    SelectionBatch out;
    out.n_relevant = windows.size();
    if (windows.empty()) return out;
    out.threshold = quantile(returns, keep_top_fraction ? 1.0 - q : q);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (returns[i] >= out.threshold) {
            out.windows.push_back(windows[i]);
            out.returns.push_back(returns[i]);
        }
    }
    out.n_selected = out.windows.size();
    return out;
}

Selector::Selector(const data::OfflineDataset& ds, const data::WindowIndex& index, SelectionConfig cfg, ValueFn value)
    : ds_(&ds), index_(&index), cfg_(cfg), value_(std::move(value)) {
    cfg_.validate();
    if (needs_critic(cfg_.mode, cfg_.relevance) && !value_) {
        throw ConfigError("selection mode '" + std::string(to_string(cfg_.mode)) + "' with relevance '" +
                          std::string(to_string(cfg_.relevance)) + "' needs a critic");
    }
}

Window Selector::make_window(WindowRef ref, bool critic_free) const {
    const auto& t = ds_->trajectories[ref.traj];
    Window w;
    w.ref = ref;
    w.train_length = window_length(t, ref.offset, cfg_.horizon);
    w.length = critic_free ? window_length(t, ref.offset, cfg_.critic_free_extent * cfg_.horizon) : w.train_length;
    return w;
}

std::vector<Window> Selector::all_windows() const {
    std::vector<Window> out;
    const bool cf = cfg_.mode == Mode::critic_free;
    for (std::size_t i = 0; i < ds_->trajectories.size(); ++i) {
        const auto n = ds_->trajectories[i].states.size();
        for (std::size_t t = 0; t < n; ++t) {
            out.push_back(make_window({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t)}, cf));
        }
    }
    return out;
}

std::vector<Window> Selector::relevant_windows(const State& s) const {
    const bool cf = cfg_.mode == Mode::critic_free;
    std::vector<Window> out;
    if (cfg_.relevance == Relevance::distance) {
        for (const WindowRef& r : index_->query_ball(s, cfg_.eps)) out.push_back(make_window(r, cf));
        return out;
    }
    if (!value_) throw ConfigError("value relevance needs a critic");
    std::vector<Window> all = all_windows();
    std::vector<State> starts;
    starts.reserve(all.size());
    for (const Window& w : all) starts.push_back(ds_->state(w.ref.traj, w.ref.offset));
    const std::vector<State> from(all.size(), s);
    const std::vector<double> v = value_(from, starts);
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (v[i] > cfg_.c_rel) out.push_back(all[i]);
    }
    return out;
}

std::vector<double> Selector::score(std::span<const Window> windows, const State& goal, bool critic_free) const {
    std::vector<double> out(windows.size());
    if (critic_free) {
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const auto& st = ds_->trajectories[windows[i].ref.traj].states;
            out[i] = critic_free_return(std::span<const State>(st).subspan(windows[i].ref.offset, windows[i].length),
                                        goal, cfg_.gamma, cfg_.eps,
                                        cfg_.critic_free_absorbing ? cfg_.critic_free_extent * cfg_.horizon : 0);
        }
        return out;
    }
    if (!value_) throw ConfigError("H-step scoring needs a critic");
    std::vector<State> last;
    last.reserve(windows.size());
    for (const Window& w : windows) last.push_back(ds_->state(w.ref.traj, w.ref.offset + w.length - 1));
    const std::vector<State> goals(windows.size(), goal);
    const std::vector<double> v = value_(last, goals);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& st = ds_->trajectories[windows[i].ref.traj].states;
        out[i] = hstep_return(std::span<const State>(st).subspan(windows[i].ref.offset, windows[i].length), goal, v[i],
                              cfg_.gamma, cfg_.eps);
    }
    return out;
}

const std::vector<double>& Selector::all_returns(const State& goal) const {
    if (!cached_goal_ || cached_goal_->x != goal.x || cached_goal_->y != goal.y) {
        const std::vector<Window> all = all_windows();
        cached_returns_ = score(all, goal, false);
        cached_goal_ = goal;
    }
    return cached_returns_;
}

std::vector<Window> sample_windows(std::vector<Window> pool, std::size_t k, Rng& rng) {
    k = std::min(k, pool.size());
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_index(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end(), [](const Window& a, const Window& b) { return a.ref < b.ref; });
    return pool;
}

SelectionBatch Selector::select(const State& s, const State& goal, Rng* rng) const {
    switch (cfg_.mode) {
        case Mode::full:
        case Mode::critic_free: {
            std::vector<Window> rel = relevant_windows(s);
            std::vector<double> ret = score(rel, goal, cfg_.mode == Mode::critic_free);
            return optimality_filter(std::move(rel), std::move(ret), cfg_.q, cfg_.keep_top_fraction);
        }
        case Mode::relevant_only: {
            SelectionBatch b;
            b.windows = relevant_windows(s);
            b.n_relevant = b.n_selected = b.windows.size();
            return b;
        }
        case Mode::optimal_only: {
            const std::vector<double>& ret = all_returns(goal);
            SelectionBatch b = optimality_filter(all_windows(), ret, cfg_.q, cfg_.keep_top_fraction);
            b.n_relevant = relevant_windows(s).size();
            return b;
        }
        case Mode::random: {
            if (rng == nullptr) throw ConfigError("random selection needs an rng");
            std::vector<Window> rel = relevant_windows(s);
            std::vector<double> ret = score(rel, goal, false);
            const SelectionBatch full = optimality_filter(std::move(rel), std::move(ret), cfg_.q, cfg_.keep_top_fraction);
            SelectionBatch b;
            b.n_relevant = full.n_relevant;
            b.windows = sample_windows(all_windows(), full.n_selected, *rng);
            b.n_selected = b.windows.size();
            return b;
        }
    }
    throw ConfigError("unknown selection mode");
}

rl::TransitionBatch training_pairs(const data::OfflineDataset& ds, const SelectionBatch& batch, const State& goal,
                                   double eps) {
    std::size_t n = 0;
    for (const Window& w : batch.windows) n += w.train_length - 1;
    rl::TransitionBatch b;
    const auto rows = static_cast<Eigen::Index>(n);
    b.states.resize(rows, 2);
    b.actions.resize(rows, 2);
    b.goals.resize(rows, 2);
    b.next_states.resize(rows, 2);
    b.rewards.resize(rows);
    Eigen::Index r = 0;
    for (const Window& w : batch.windows) {
        const auto& t = ds.trajectories[w.ref.traj];
        for (std::uint32_t i = 0; i + 1 < w.train_length; ++i, ++r) {
            const std::size_t k = w.ref.offset + i;
            b.states(r, 0) = t.states[k].x;
            b.states(r, 1) = t.states[k].y;
            b.actions(r, 0) = t.actions[k].x;
            b.actions(r, 1) = t.actions[k].y;
            b.goals(r, 0) = goal.x;
            b.goals(r, 1) = goal.y;
            b.next_states(r, 0) = t.states[k + 1].x;
            b.next_states(r, 1) = t.states[k + 1].y;
            b.rewards(r) = env::reward(t.states[k + 1], goal, eps);
        }
    }
    return b;
}

std::string debug_record(const SelectionBatch& batch, const State& s, const State& goal) {
    nlohmann::json j;
    j["state"] = {s.x, s.y};
    j["goal"] = {goal.x, goal.y};
    j["n_relevant"] = batch.n_relevant;
    j["n_selected"] = batch.n_selected;
    if (std::isfinite(batch.threshold)) {
        j["C"] = batch.threshold;
    } else {
        j["C"] = nullptr;
    }
    nlohmann::json ids = nlohmann::json::array();
    for (const Window& w : batch.windows) ids.push_back({w.ref.traj, w.ref.offset});
    j["retained"] = std::move(ids);
    return j.dump();
}

}  // namespace gcttt::sel
