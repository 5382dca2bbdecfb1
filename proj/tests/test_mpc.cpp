#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rnnmpc/errors.hpp"
#include "rnnmpc/mpc.hpp"

using namespace rnnmpc;

namespace {

HistoryBuffer steady_history(const Plant& plant, const PlantState& x, const ControlInput& u, int p)
{
    HistoryBuffer h(p);
    for (int i = 0; i < p; ++i) {
        h.push_measurement(x);
        h.push_input(u);
    }
    (void)plant;
    return h;
}

std::vector<ControlInput> random_moves(std::mt19937_64& rng, int m, double scale)
{
    std::uniform_real_distribution<double> U(-scale, scale);
    std::vector<ControlInput> du;
    for (int i = 0; i < m; ++i) du.push_back({U(rng), U(rng)});
    return du;
}

double dot(const std::vector<ControlInput>& a, const std::vector<ControlInput>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i].q * b[i].q + a[i].T * b[i].T;
    return s;
}

std::vector<ControlInput> minus(const std::vector<ControlInput>& a, const std::vector<ControlInput>& b)
{
    std::vector<ControlInput> d;
    for (std::size_t i = 0; i < a.size(); ++i) d.push_back({a[i].q - b[i].q, a[i].T - b[i].T});
    return d;
}

} // namespace

TEST_CASE("settings validation")
{
    MpcSettings s;
    CHECK_NOTHROW(s.validate());
    s.m = 11;
    CHECK_THROWS_AS(s.validate(), DomainError);
    s = {};
    s.Qu(1) = -1.0;
    CHECK_THROWS_AS(s.validate(), DomainError);
    s = {};
    s.u_min.T = 1.2;
    CHECK_THROWS_AS(s.validate(), DomainError);
    s = {};
    s.du_min.q = 0.01;
    CHECK_THROWS_AS(s.validate(), DomainError);
}

TEST_CASE("history buffer keeps the last p entries")
{
    HistoryBuffer h(3);
    CHECK_FALSE(h.full());
    CHECK_THROWS_AS(h.latest_measurement(), DomainError);
    for (int i = 0; i < 5; ++i) {
        h.push_measurement({double(i), 0.0});
        h.push_input({0.0, double(i)});
    }
    CHECK(h.full());
    REQUIRE(h.measurements().size() == 3);
    CHECK(h.measurements().front().cA == 2.0);
    CHECK(h.latest_measurement().cA == 4.0);
    CHECK(h.last_input().T == 4.0);
    CHECK_THROWS_AS(HistoryBuffer(0), DomainError);
}

TEST_CASE("expand_moves")
{
    const auto u = expand_moves({{0.01, 0.1}, {0.02, -0.05}}, {0.8, 0.9}, 4);
    REQUIRE(u.size() == 4);
    CHECK(u[0].q == doctest::Approx(0.81));
    CHECK(u[0].T == doctest::Approx(1.0));
    CHECK(u[1].q == doctest::Approx(0.83));
    CHECK(u[1].T == doctest::Approx(0.95));
    CHECK(u[3] == u[1]);
}

TEST_CASE("costs")
{
    const MpcSettings s;
    // 2.4 * 0.1^2 + 5.67 * 0.2^2 = 0.024 + 0.2268
    CHECK(tracking_cost({0.424, 0.606}, s) == doctest::Approx(0.2508));
    CHECK(tracking_cost(s.y_star, s) == 0.0);
    CHECK(move_cost({0.1, -0.2}, s) == doctest::Approx(25.0 * 0.01 + 25.0 * 0.04));
    CHECK(stage_cost({{0.424, 0.606}, s.y_star}, {{0.1, -0.2}}, s) == doctest::Approx(0.2508 + 1.25));
}

TEST_CASE("constraint_violation")
{
    const MpcSettings s;
    CHECK(constraint_violation({{0.0, 0.0}}, {0.8, 0.8}, s) <= 0.0);
    CHECK(constraint_violation({{0.15, 0.0}}, {0.75, 0.8}, s) == doctest::Approx(0.05));
    CHECK(constraint_violation({{0.15, 0.0}}, {0.8, 0.8}, s) == doctest::Approx(0.1));
    // two admissible moves that together overshoot T_max = 1.1 by 0.05
    CHECK(constraint_violation({{0.0, 0.1}, {0.0, 0.1}}, {0.8, 0.95}, s) == doctest::Approx(0.05));
}

TEST_CASE("project_moves")
{
    const MpcSettings s;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> Uq(0.75, 0.85), UT(0.5, 1.1);

    SUBCASE("feasible input is unchanged")
    {
        const std::vector<ControlInput> du{{0.01, 0.02}, {-0.03, 0.05}};
        const auto pr = project_moves(du, {0.8, 0.9}, s);
        for (std::size_t i = 0; i < du.size(); ++i) {
            CHECK(std::abs(pr[i].q - du[i].q) < 1e-12);
            CHECK(std::abs(pr[i].T - du[i].T) < 1e-12);
        }
    }
    SUBCASE("single move reduces to clamping")
    {
        const ControlInput u_prev{0.84, 0.55};
        const auto pr = project_moves({{0.05, -0.2}}, u_prev, s);
        CHECK(pr[0].q == doctest::Approx(0.01).epsilon(1e-9));
        CHECK(pr[0].T == doctest::Approx(-0.05).epsilon(1e-9));
    }
    SUBCASE("random points: feasible and the variational inequality holds")
    {
        for (int trial = 0; trial < 50; ++trial) {
            const ControlInput u_prev{Uq(rng), UT(rng)};
            const auto x = random_moves(rng, 10, 0.3);
            const auto px = project_moves(x, u_prev, s);
            REQUIRE(constraint_violation(px, u_prev, s) <= 1e-12);
            // <x - P(x), z - P(x)> <= 0 for every feasible z
            for (int k = 0; k < 20; ++k) {
                const auto z = project_moves(random_moves(rng, 10, 0.1), u_prev, s);
                REQUIRE(constraint_violation(z, u_prev, s) <= 1e-12);
                CHECK(dot(minus(x, px), minus(z, px)) <= 1e-8);
            }
        }
    }
    SUBCASE("previous input outside the box")
    {
        CHECK_THROWS_AS(project_moves({{0.0, 0.0}}, {0.9, 0.8}, s), DomainError);
    }
}

TEST_CASE("apply_first_move")
{
    const MpcSettings s;
    const auto u = apply_first_move({{0.01, -0.05}}, {0.8, 0.9}, s);
    CHECK(u.q == doctest::Approx(0.81));
    CHECK(u.T == doctest::Approx(0.85));
    CHECK_THROWS_AS(apply_first_move({{0.0, 0.2}}, {0.8, 0.9}, s), ConstraintViolation);
    CHECK_THROWS_AS(apply_first_move({{0.0, 0.1}}, {0.8, 1.05}, s), ConstraintViolation);
    CHECK_THROWS_AS(apply_first_move({}, {0.8, 0.9}, s), DomainError);
}

TEST_CASE("shift_warm_start")
{
    const auto w = shift_warm_start({{1, 2}, {3, 4}, {5, 6}});
    REQUIRE(w.size() == 3);
    CHECK(w[0] == ControlInput{3, 4});
    CHECK(w[1] == ControlInput{5, 6});
    CHECK(w[2] == ControlInput{0, 0});
}

TEST_CASE("true-plant prediction matches stepping the plant")
{
    const Plant plant;
    const ControlInput u{0.8, 0.9};
    const auto x = steady_state(u, plant.kinetics());
    const auto h = steady_history(plant, x, u, 10);
    const TruePlantModel model(plant, 10);
    const std::vector<ControlInput> du{{0.0, 0.1}, {0.02, 0.0}};
    const auto pred = predict_horizon(model, h, du);
    const auto useq = expand_moves(du, u, 10);
    PlantState y = x;
    REQUIRE(pred.size() == 10);
    for (int j = 0; j < 10; ++j) {
        y = plant.step(y, useq[j]);
        CHECK(pred[j] == y);
    }
    CHECK_THROWS_AS(model.predict(h, std::vector<ControlInput>(9, u)), ShapeError);
}

TEST_CASE("RNN model windows slide over history and candidate")
{
    NetworkShape shape;
    shape.horizon = 4;
    shape.hidden = {3};
    const RnnModel model(LstmNetwork::initialized(shape, 1), Normalization{});
    HistoryBuffer h(4);
    for (int i = 0; i < 4; ++i) {
        h.push_measurement({double(i), -double(i)});
        h.push_input({0.0, double(i)}); // u_{k-4} .. u_{k-1} carry T = 0..3
    }
    std::vector<ControlInput> fut;
    for (int i = 0; i < 4; ++i) fut.push_back({1.0, 4.0 + i}); // u_k .. u_{k+3}
    for (int j = 1; j <= 4; ++j) {
        const auto w = model.window(h, fut, j);
        CHECK(w.y0.cA == double(j - 1));
        REQUIRE(w.u_seq.size() == 4);
        for (int i = 0; i < 4; ++i) CHECK(w.u_seq[i].T == double(j + i));
    }
    // predictions equal one network evaluation per window
    const auto pred = model.predict(h, fut);
    for (int j = 1; j <= 4; ++j) {
        const auto y = forward(model.network(), model.window(h, fut, j));
        CHECK(std::abs(pred[j - 1].cA - y.cA) < 1e-12);
        CHECK(std::abs(pred[j - 1].cR - y.cR) < 1e-12);
    }
    CHECK_THROWS_AS(model.predict(HistoryBuffer(4), fut), DomainError);
}

TEST_CASE("solve_rhc")
{
    const Plant plant;
    MpcSettings s;
    const TruePlantModel model(plant, s.p);

    SUBCASE("single-move solve matches a grid search")
    {
        s.m = 1;
        const ControlInput u{0.78, 0.85};
        const PlantState x{0.45, 0.35};
        const auto h = steady_history(plant, x, u, s.p);
        const auto sol = solve_rhc(model, h, s);
        REQUIRE(sol.du.size() == 1);
        CHECK(constraint_violation(sol.du, u, s) <= 1e-12);
        double best = std::numeric_limits<double>::infinity();
        const int n = 41;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                const ControlInput du{-0.1 + 0.2 * a / (n - 1), -0.1 + 0.2 * b / (n - 1)};
                if (constraint_violation({du}, u, s) > 0.0) continue;
                best = std::min(best, stage_cost(predict_horizon(model, h, {du}), {du}, s));
            }
        CHECK(sol.cost <= best + 1e-6 * best);
        CHECK(std::abs(sol.cost - stage_cost(predict_horizon(model, h, sol.du), sol.du, s)) < 1e-12);
    }
    SUBCASE("never worse than zero move or warm start; feasible")
    {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> Uq(0.75, 0.85), UT(0.5, 1.1), Ux(0.1, 0.7);
        for (int trial = 0; trial < 5; ++trial) {
            const ControlInput u{Uq(rng), UT(rng)};
            const auto h = steady_history(plant, {Ux(rng), Ux(rng) * 0.6}, u, s.p);
            const auto warm = project_moves(random_moves(rng, s.m, 0.1), u, s);
            const auto sol = solve_rhc(model, h, s, warm);
            CHECK(sol.cost <= sol.cost_zero);
            CHECK(sol.cost <= sol.cost_warm);
            CHECK(constraint_violation(sol.du, u, s) <= 1e-12);
            CHECK(sol.constraint_residual <= 1e-12);
            CHECK_NOTHROW(apply_first_move(sol.du, u, s));
        }
    }
    SUBCASE("at the optimum the zero move is optimal")
    {
        const ControlInput u{0.8, 1.0432};
        const auto x = steady_state(u, plant.kinetics());
        const auto h = steady_history(plant, x, u, s.p);
        const auto sol = solve_rhc(model, h, s);
        CHECK(std::abs(sol.du.front().q) < 1e-3);
        CHECK(std::abs(sol.du.front().T) < 1e-3);
    }
    SUBCASE("shape errors")
    {
        CHECK_THROWS_AS(solve_rhc(model, HistoryBuffer(s.p), s), DomainError);
        const TruePlantModel short_model(plant, 5);
        CHECK_THROWS_AS(solve_rhc(short_model, steady_history(plant, {0.5, 0.3}, {0.8, 0.8}, s.p), s), ShapeError);
    }
}
