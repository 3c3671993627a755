#include <cmath>

#include "doctest.h"
#include "gcttt/errors.hpp"
#include "gcttt/flops.hpp"

using namespace gcttt::flops;

namespace {

FlopModel model(std::uint64_t w, std::uint64_t m = 100, Frequency f = {1, 200}) {
    FlopModel fm;
    fm.width = w;
    fm.grad_steps = m;
    fm.freq = f;
    return fm;
}

// The closed form evaluated term by term in long double.
long double ttt_formula(std::uint64_t w, std::uint64_t m, long double f, std::uint64_t len = 1000) {
    const long double c = 4.0L * w * w;
    return len * f * (1.0L + 6.0L * c * m) + len * c;
}

}  // namespace

TEST_CASE("forward cost") {
    CHECK(forward_cost(model(512)) == 1048576u);
    CHECK(forward_cost(model(1)) == 4u);
    for (std::uint64_t w : {3u, 17u, 100u, 512u}) CHECK(forward_cost(model(2 * w)) == 4 * forward_cost(model(w)));
    FlopModel three = model(10);
    three.hidden_layers = 3;
    CHECK(forward_cost(three) == 600u);
}

TEST_CASE("frozen episode cost") {
    CHECK(episode_cost_frozen(model(512)) == 1048576000u);
    CHECK(episode_cost_frozen(model(624)) == 1557504000u);
    FlopModel one = model(512);
    one.episode_len = 1;
    CHECK(episode_cost_frozen(one) == forward_cost(one));
}

TEST_CASE("ttt episode cost at the reference frequencies") {
    CHECK(episode_cost_ttt(model(512, 100, {1, 1000})) == 1677721601u);
    CHECK(episode_cost_ttt(model(512, 100, {1, 500})) == 2306867202u);
    CHECK(episode_cost_ttt(model(512, 100, {1, 200})) == 4194304005u);
    CHECK(grad_step_cost(model(512)) == 6 * forward_cost(model(512)));
    CHECK(cycle_cost(model(512)) == 1 + 600 * forward_cost(model(512)));
    CHECK(cycles_per_episode(model(512, 100, {1, 200})) == 5u);
    CHECK(episode_cost_ttt(model(512, 100, {0, 1})) == episode_cost_frozen(model(512)));
}

TEST_CASE("ttt cost agrees with the closed form whenever 1000 f is whole") {
    for (std::uint64_t w : {8u, 64u, 300u, 512u, 1024u}) {
        for (std::uint64_t m : {1u, 50u, 200u}) {
            for (std::uint64_t k : {1u, 2u, 4u, 8u, 50u, 125u, 1000u}) {
                const long double want = ttt_formula(w, m, 1.0L / k);
                const auto got = static_cast<long double>(episode_cost_ttt(model(w, m, {1, k})));
                CHECK(std::fabs(got - want) <= 1e-9L * want);
            }
        }
    }
}

TEST_CASE("cost is monotone in every parameter") {
    const FlopModel base = model(64, 10, {1, 100});
    const std::uint64_t c = episode_cost_ttt(base);
    FlopModel m = base;
    m.width += 1;
    CHECK(episode_cost_ttt(m) > c);
    m = base;
    m.hidden_layers += 1;
    CHECK(episode_cost_ttt(m) > c);
    m = base;
    m.grad_steps += 1;
    CHECK(episode_cost_ttt(m) > c);
    m = base;
    m.freq = {1, 50};
    CHECK(episode_cost_ttt(m) > c);
    m = base;
    m.episode_len += 100;
    CHECK(episode_cost_ttt(m) > c);
    CHECK(episode_cost_ttt(base) >= episode_cost_frozen(base));
}

TEST_CASE("matched width") {
    const FlopModel plain = model(512);
    CHECK(matched_width(4000ull * 512 * 512, plain) == 512u);
    CHECK(matched_width(4194304005ull, plain) == 1024u);
    CHECK(matched_width(1677721601ull, plain) == 648u);
    CHECK(matched_width(2306867202ull, plain) == 759u);
    CHECK(matched_width(0, plain) == 0u);
    for (std::uint64_t w = 1; w < 3000; w += 7) CHECK(matched_width(episode_cost_frozen(model(w)), plain) == w);
    // Brute-force nearest integer for odd targets.
    for (std::uint64_t t : {1ull, 999ull, 123456789ull, 1600000000ull, 2200000000ull, 4000000000ull}) {
        std::uint64_t best = 0;
        long double err = 1e300L;
        for (std::uint64_t w = 0; w < 2000; ++w) {
            const long double e = std::fabs(std::sqrt(static_cast<long double>(t) / 4000.0L) - w);
            if (e < err) err = e, best = w;
        }
        CHECK(matched_width(t, plain) == best);
    }
}

TEST_CASE("rounded targets give widths near the reported ones") {
    const FlopModel plain = model(512);
    const std::uint64_t targets[3] = {1600000000ull, 2200000000ull, 4000000000ull};
    const double reported[3] = {624, 732, 992};
    for (int i = 0; i < 3; ++i) {
        const double w = static_cast<double>(matched_width(targets[i], plain));
        CHECK(std::abs(w - reported[i]) / reported[i] <= 0.05);
    }
}

TEST_CASE("invalid models") {
    CHECK_THROWS_AS(forward_cost(model(0)), gcttt::ConfigError);
    CHECK_THROWS_AS(cycles_per_episode(model(4, 1, {2, 1})), gcttt::ConfigError);
    CHECK_THROWS_AS(cycles_per_episode(model(4, 1, {1, 0})), gcttt::ConfigError);
    CHECK_THROWS_AS(forward_cost(model(1ull << 40)), gcttt::NumericError);
}
