#include "gcttt/flops.hpp"

#include <cmath>
#include <limits>

#include "gcttt/errors.hpp"

namespace gcttt::flops {

namespace {

using u128 = unsigned __int128;

std::uint64_t narrow(u128 v, const char* what) {
    if (v > std::numeric_limits<std::uint64_t>::max()) throw NumericError(std::string("flop count overflow: ") + what);
    return static_cast<std::uint64_t>(v);
}

}  // namespace

void FlopModel::validate() const {
    if (width < 1 || hidden_layers < 1 || episode_len < 1) throw ConfigError("flops: width, layers, episode_len must be >= 1");
    if (freq.den == 0) throw ConfigError("flops: frequency denominator is zero");
    if (freq.num > freq.den) throw ConfigError("flops: frequency must be <= 1");
}

std::uint64_t forward_cost(const FlopModel& m) {
    m.validate();
    return narrow(u128{2} * m.hidden_layers * m.width * m.width, "forward");
}

std::uint64_t episode_cost_frozen(const FlopModel& m) {
    return narrow(u128{m.episode_len} * forward_cost(m), "frozen episode");
}

std::uint64_t grad_step_cost(const FlopModel& m) {
    const u128 per_net = u128{1 + m.backward_multiplier} * forward_cost(m);
    return narrow(per_net * (m.critic_same_size ? 2 : 1), "gradient step");
}

std::uint64_t cycle_cost(const FlopModel& m) {
    return narrow(u128{1} + u128{grad_step_cost(m)} * m.grad_steps, "cycle");
}

std::uint64_t cycles_per_episode(const FlopModel& m) {
    m.validate();
    const u128 scaled = u128{m.episode_len} * m.freq.num;
    return narrow((2 * scaled + m.freq.den) / (2 * u128{m.freq.den}), "cycles");
}

std::uint64_t episode_cost_ttt(const FlopModel& m) {
    return narrow(u128{cycles_per_episode(m)} * cycle_cost(m) + episode_cost_frozen(m), "ttt episode");
}

std::uint64_t matched_width(std::uint64_t target_flops, const FlopModel& m) {
    m.validate();
    // Nearest integer w to sqrt(y), y = target / (2 n L): w + 1 is nearer iff
    // (2w + 1)^2 * 2nL < 4 target.
    const u128 denom = u128{2} * m.hidden_layers * m.episode_len;
    auto w = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(target_flops) / static_cast<long double>(denom)));
    const auto nearer_up = [&](std::uint64_t v) {
        const u128 t = u128{2} * v + 1;
        return t * t * denom < u128{4} * target_flops;
    };
    while (w > 0 && !nearer_up(w - 1)) --w;
    while (nearer_up(w)) ++w;
    return w;
}

}  // namespace gcttt::flops
