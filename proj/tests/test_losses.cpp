#include <cmath>
#include <vector>

#include "doctest.h"
#include "gcttt/errors.hpp"
#include "gcttt/losses.hpp"
#include "gcttt/rng.hpp"
#include "loss_oracle.hpp"

using namespace gcttt;
using namespace gcttt::rl;
using nn::GaussianPolicy;
using namespace loss_oracle;

namespace {

std::vector<double> row(const Matrix& m, Eigen::Index i) { return {m(i, 0), m(i, 1)}; }

double log_prob_row(const Instance& in, Eigen::Index i) {
    std::vector<double> x{in.batch.states(i, 0), in.batch.states(i, 1), in.batch.goals(i, 0), in.batch.goals(i, 1)};
    const auto mean = nn::forward(in.policy.net, x);
    return nn::gaussian_log_prob(mean, in.policy.log_std, row(in.batch.actions, i));
}

}  // namespace

TEST_CASE("analytic gradients match central differences for every loss") {
    const LossId ids[] = {LossId::bc, LossId::iql_q, LossId::iql_v, LossId::awr, LossId::ddpg_bc};
    for (LossId id : ids) {
        for (std::uint64_t s = 0; s < 20; ++s) {
            Instance in = random_instance(1000 + s);
            LossHyper h;
            h.use_target_networks = s % 2 == 0;
            h.awr_beta = 0.5;
            h.ddpg_beta = 0.7;
            const LossResult r = loss_and_grad(id, &in.policy, &in.critic, in.batch, h);
            CHECK(r.value == doctest::Approx(loss_value(id, &in.policy, &in.critic, in.batch, h)).epsilon(1e-14));
            const auto fd = numeric_grad(id, in, h);
            REQUIRE(fd.size() == r.grad.size());
            INFO(to_string(id), " seed ", s);
            CHECK(relative_error(r.grad, fd) < 1e-5);
        }
    }
}

TEST_CASE("bc loss equals mean negative log likelihood") {
    Instance in = random_instance(7);
    double nll = 0.0;
    for (Eigen::Index i = 0; i < in.batch.size(); ++i) nll -= log_prob_row(in, i);
    nll /= static_cast<double>(in.batch.size());
    CHECK(loss_value(LossId::bc, &in.policy, nullptr, in.batch, {}) == doctest::Approx(nll).epsilon(1e-12));
}

TEST_CASE("awr loss equals clipped exp-advantage weighted NLL") {
    Instance in = random_instance(8);
    LossHyper h;
    h.awr_beta = 2.0;
    h.awr_w_max = 1.5;
    double expect = 0.0;
    for (Eigen::Index i = 0; i < in.batch.size(); ++i) {
        const std::vector<double> sag{in.batch.states(i, 0), in.batch.states(i, 1), in.batch.actions(i, 0),
                                      in.batch.actions(i, 1), in.batch.goals(i, 0),  in.batch.goals(i, 1)};
        const std::vector<double> sg{in.batch.states(i, 0), in.batch.states(i, 1), in.batch.goals(i, 0),
                                     in.batch.goals(i, 1)};
        const double adv = nn::forward(in.critic.q, sag)[0] - nn::forward(in.critic.v, sg)[0];
        expect -= std::min(std::exp(h.awr_beta * adv), h.awr_w_max) * log_prob_row(in, i);
    }
    expect /= static_cast<double>(in.batch.size());
    CHECK(loss_value(LossId::awr, &in.policy, &in.critic, in.batch, h) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ddpg+bc loss uses Q at the policy mean") {
    Instance in = random_instance(9);
    LossHyper h;
    h.ddpg_beta = 0.3;
    double expect = 0.0;
    for (Eigen::Index i = 0; i < in.batch.size(); ++i) {
        const std::vector<double> sg{in.batch.states(i, 0), in.batch.states(i, 1), in.batch.goals(i, 0),
                                     in.batch.goals(i, 1)};
        const auto mean = nn::forward(in.policy.net, sg);
        const std::vector<double> sag{sg[0], sg[1], mean[0], mean[1], sg[2], sg[3]};
        expect -= h.ddpg_beta * nn::forward(in.critic.q, sag)[0] + log_prob_row(in, i);
    }
    expect /= static_cast<double>(in.batch.size());
    CHECK(loss_value(LossId::ddpg_bc, &in.policy, &in.critic, in.batch, h) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("iql losses against per-row formulas") {
    Instance in = random_instance(10);
    LossHyper h;
    h.expectile = 0.8;
    double q_expect = 0.0, v_expect = 0.0;
    for (Eigen::Index i = 0; i < in.batch.size(); ++i) {
        const std::vector<double> sag{in.batch.states(i, 0), in.batch.states(i, 1), in.batch.actions(i, 0),
                                      in.batch.actions(i, 1), in.batch.goals(i, 0),  in.batch.goals(i, 1)};
        const std::vector<double> sg{in.batch.states(i, 0), in.batch.states(i, 1), in.batch.goals(i, 0),
                                     in.batch.goals(i, 1)};
        const std::vector<double> ng{in.batch.next_states(i, 0), in.batch.next_states(i, 1), in.batch.goals(i, 0),
                                     in.batch.goals(i, 1)};
        const double td = in.batch.rewards(i) + h.gamma * nn::forward(in.critic.v_target, ng)[0] -
                          nn::forward(in.critic.q, sag)[0];
        q_expect += td * td;
        const double x = nn::forward(in.critic.q_target, sag)[0] - nn::forward(in.critic.v, sg)[0];
        v_expect += expectile_loss(x, h.expectile);
    }
    const double n = static_cast<double>(in.batch.size());
    CHECK(loss_value(LossId::iql_q, nullptr, &in.critic, in.batch, h) == doctest::Approx(q_expect / n).epsilon(1e-12));
    CHECK(loss_value(LossId::iql_v, nullptr, &in.critic, in.batch, h) == doctest::Approx(v_expect / n).epsilon(1e-12));
}

TEST_CASE("expectile loss weights") {
    CHECK(expectile_loss(2.0, 0.9) == doctest::Approx(0.9 * 4.0));
    CHECK(expectile_loss(-2.0, 0.9) == doctest::Approx(0.1 * 4.0));
    CHECK(expectile_loss(0.0, 0.9) == 0.0);
}

TEST_CASE("scalar expectile regression: alpha 0.5 is least squares") {
    const std::vector<double> y{1.0, -2.0, 4.5, 0.25, 3.0};
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    CHECK(std::abs(fit_expectile(y, 0.5) - mean) < 1e-6);
}

TEST_CASE("scalar expectile regression: alpha 0.99 on {0, -10}") {
    // Stationarity 0.99 * (0 - v) = 0.01 * (v + 10) gives v = -0.1.
    const double v = fit_expectile({0.0, -10.0}, 0.99);
    CHECK(std::abs(v - (-0.1)) < 1e-6);
    CHECK(std::abs(v - 0.0) < 0.6);
}

TEST_CASE("losses reject bad inputs") {
    Instance in = random_instance(3);
    CHECK_THROWS_AS(loss_value(LossId::awr, &in.policy, nullptr, in.batch, {}), ConfigError);
    CHECK_THROWS_AS(loss_value(LossId::bc, nullptr, nullptr, in.batch, {}), ConfigError);
    TransitionBatch empty;
    CHECK_THROWS_AS(loss_value(LossId::bc, &in.policy, nullptr, empty, {}), ShapeError);
    TransitionBatch bad = in.batch;
    bad.actions(0, 0) = std::nan("");
    CHECK_THROWS_AS(loss_value(LossId::bc, &in.policy, nullptr, bad, {}), NumericError);
    TransitionBatch ragged = in.batch;
    ragged.goals = Matrix::Zero(1, 2);
    CHECK_THROWS_AS(loss_value(LossId::bc, &in.policy, nullptr, ragged, {}), ShapeError);
    CHECK(parse_loss_id("ddpg_bc") == LossId::ddpg_bc);
    CHECK_THROWS_AS(parse_loss_id("sac"), ConfigError);
}

TEST_CASE("hcat") {
    Matrix a(2, 1), b(2, 2), c(2, 1);
    a << 1, 2;
    b << 3, 4, 5, 6;
    c << 7, 8;
    Matrix want(2, 4);
    want << 1, 3, 4, 7, 2, 5, 6, 8;
    CHECK(hcat(a, b, c) == want);
    CHECK_THROWS_AS(hcat(a, Matrix(3, 1)), ShapeError);
}
