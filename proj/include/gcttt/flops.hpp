#pragma once

#include <cstdint>

namespace gcttt::flops {

/// TTT frequency as a rational number of cycles per environment step.
struct Frequency {
    std::uint64_t num = 0;
    std::uint64_t den = 1;
    static Frequency every(std::uint64_t k) { return {1, k}; }
};

/// Analytic inference-compute model. All counts are exact integers.
struct FlopModel {
    std::uint64_t width = 512;
    std::uint64_t hidden_layers = 2;
    std::uint64_t episode_len = 1000;
    std::uint64_t grad_steps = 100;  // m
    Frequency freq{1, 200};          // f
    std::uint64_t backward_multiplier = 2;
    bool critic_same_size = true;

    void validate() const;
};

/// C = 2 n w^2.
std::uint64_t forward_cost(const FlopModel& m);

/// L * C.
std::uint64_t episode_cost_frozen(const FlopModel& m);

/// Cost of one gradient step: (1 + backward_multiplier) * C, doubled when the
/// critic is counted at policy size. 6C with defaults.
std::uint64_t grad_step_cost(const FlopModel& m);

/// Cost of one TTT cycle: one selection forward plus m gradient steps (1 + 6Cm).
std::uint64_t cycle_cost(const FlopModel& m);

/// Number of TTT cycles in an episode, L * f rounded to nearest (ties up).
std::uint64_t cycles_per_episode(const FlopModel& m);

/// L f (1 + 6 C m) + L C.
std::uint64_t episode_cost_ttt(const FlopModel& m);

/// Width whose frozen episode cost is nearest `target`: round(sqrt(target / (2 n L))).
std::uint64_t matched_width(std::uint64_t target_flops, const FlopModel& m);

}  // namespace gcttt::flops
