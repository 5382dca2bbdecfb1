#include "doctest.h"

#include <cmath>
#include <random>

#include "rnnmpc/errors.hpp"
#include "rnnmpc/plant.hpp"

using namespace rnnmpc;

namespace {

// Independent right-hand side, written out from the balance equations.
void rhs(double cA, double cR, double q, double T, double& dA, double& dR)
{
    const double k1 = 1.0 * std::exp(-8.33 * (1.0 / T - 1.0));
    const double k2 = 0.7 * std::exp(-10.0 * (1.0 / T - 1.0));
    const double k3 = 0.1 * std::exp(-50.0 * (1.0 / T - 1.0));
    const double k4 = 0.006 * std::exp(-83.3 * (1.0 / T - 1.0));
    dA = q * (0.8 - cA) - k1 * cA + k4 * cR;
    dR = q * (0.2 - cR) + k1 * cA + k3 * (1.0 - cA - cR) - (k2 + k4) * cR;
}

PlantState euler(PlantState x, ControlInput u, double dt, double h)
{
    const int n = static_cast<int>(std::lround(dt / h));
    for (int i = 0; i < n; ++i) {
        double dA, dR;
        rhs(x.cA, x.cR, u.q, u.T, dA, dR);
        x.cA += h * dA;
        x.cR += h * dR;
    }
    return x;
}

} // namespace

TEST_CASE("rate constants")
{
    KineticParameters kin;
    const auto k = rate_constants(kin, 1.0);
    CHECK(k[0] == 1.0);
    CHECK(k[1] == 0.7);
    CHECK(k[2] == 0.1);
    CHECK(k[3] == 0.006);
    // Evaluated separately with a calculator.
    CHECK(rate_constants(kin, 1.1)[0] == doctest::Approx(2.132452503119811).epsilon(1e-14));
    CHECK(rate_constants(kin, 0.8)[3] == doctest::Approx(5.419617853190789e-12).epsilon(1e-12));
    CHECK_THROWS_AS(rate_constants(kin, 0.0), DomainError);
    CHECK_THROWS_AS(rate_constants(kin, -1.0), DomainError);
}

TEST_CASE("kinetic parameter validation")
{
    KineticParameters kin;
    CHECK_NOTHROW(kin.validate());
    kin.cA0 = 0.0;
    CHECK_THROWS_AS(kin.validate(), DomainError);
    kin = {};
    kin.k0[2] = -0.1;
    CHECK_THROWS_AS(kin.validate(), DomainError);
}

TEST_CASE("state derivative")
{
    KineticParameters kin;
    SUBCASE("pure flow equilibrium")
    {
        KineticParameters none = kin;
        none.k0 = {1e-300, 1e-300, 1e-300, 1e-300};
        const auto d = state_derivative({0.8, 0.2}, {0.8, 0.9}, none);
        CHECK(std::abs(d.cA) < 1e-15);
        CHECK(std::abs(d.cR) < 1e-15);
    }
    SUBCASE("reference operating points are near equilibrium")
    {
        for (auto [x, u] : {std::pair{PlantState{0.324, 0.406}, ControlInput{0.8, 1.043}},
                            std::pair{PlantState{0.692, 0.287}, ControlInput{0.8, 0.8}}}) {
            const auto d = state_derivative(x, u, kin);
            CHECK(std::abs(d.cA) < 5e-3);
            CHECK(std::abs(d.cR) < 5e-3);
        }
    }
    SUBCASE("matches the written-out balance")
    {
        double dA, dR;
        rhs(0.3, 0.5, 0.77, 0.93, dA, dR);
        const auto d = state_derivative({0.3, 0.5}, {0.77, 0.93}, kin);
        CHECK(d.cA == doctest::Approx(dA).epsilon(1e-14));
        CHECK(d.cR == doctest::Approx(dR).epsilon(1e-14));
    }
    SUBCASE("affine in the state")
    {
        const PlantState a{0.1, 0.7}, b{0.6, 0.2};
        const ControlInput u{0.8, 1.02};
        const double alpha = 0.37;
        const auto fm = state_derivative({alpha * a.cA + (1 - alpha) * b.cA, alpha * a.cR + (1 - alpha) * b.cR}, u, kin);
        const auto fa = state_derivative(a, u, kin), fb = state_derivative(b, u, kin);
        CHECK(fm.cA == doctest::Approx(alpha * fa.cA + (1 - alpha) * fb.cA).epsilon(1e-13));
        CHECK(fm.cR == doctest::Approx(alpha * fa.cR + (1 - alpha) * fb.cR).epsilon(1e-13));
    }
}

TEST_CASE("steady states reproduce the reference operating points")
{
    KineticParameters kin;
    struct Row {
        double T, cA, cR;
    };
    for (const Row& r : {Row{0.8, 0.692, 0.287}, Row{1.1, 0.822, 0.152}, Row{1.043, 0.324, 0.406}}) {
        CAPTURE(r.T);
        const auto x = steady_state({0.8, r.T}, kin);
        CHECK(std::abs(x.cA - r.cA) <= 5e-3);
        CHECK(std::abs(x.cR - r.cR) <= 5e-3);
        const auto d = state_derivative(x, {0.8, r.T}, kin);
        CHECK(std::hypot(d.cA, d.cR) < 1e-10);
    }
}

TEST_CASE("steady state agrees with long Euler integration")
{
    // Independent oracle: integrate the written-out balance to rest.
    const ControlInput u{0.8, 0.95};
    PlantState x{0.5, 0.3};
    x = euler(x, u, 200.0, 1e-3);
    const auto ss = steady_state(u, KineticParameters{});
    CHECK(ss.cA == doctest::Approx(x.cA).epsilon(1e-8));
    CHECK(ss.cR == doctest::Approx(x.cR).epsilon(1e-8));
}

TEST_CASE("step")
{
    const Plant plant;
    SUBCASE("steady state is a fixed point")
    {
        for (double q : {0.75, 0.8, 0.85})
            for (double T = 0.5; T <= 1.1 + 1e-12; T += 0.05) {
                const ControlInput u{q, T};
                const auto x = steady_state(u, plant.kinetics());
                const auto y = plant.step(x, u);
                CHECK(std::abs(y.cA - x.cA) < 1e-9);
                CHECK(std::abs(y.cR - x.cR) < 1e-9);
            }
    }
    SUBCASE("fine-step Euler oracle")
    {
        const PlantState x{0.692, 0.287};
        const ControlInput u{0.8, 1.043};
        const auto y = plant.step(x, u);
        const auto ref = euler(x, u, 0.1, 1e-5);
        CHECK(std::abs(y.cA - ref.cA) < 1e-6);
        CHECK(std::abs(y.cR - ref.cR) < 1e-6);
        CHECK(y.cR > x.cR);
    }
    SUBCASE("simplex invariance over 40 time units")
    {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (int trial = 0; trial < 20; ++trial) {
            double a = U(rng), r = U(rng);
            if (a + r > 1.0) {
                a = 1.0 - a;
                r = 1.0 - r;
            }
            PlantState x{a, r};
            const ControlInput u{0.75 + 0.1 * U(rng), 0.5 + 0.6 * U(rng)};
            for (int k = 0; k < 400; ++k) {
                x = plant.step(x, u);
                REQUIRE(simplex_violation(x) <= 1e-9);
            }
        }
    }
    SUBCASE("RK4 order")
    {
        const PlantState x{0.2, 0.3};
        const ControlInput u{0.8, 0.9};
        // Successive differences at 2, 4, 8 substeps shrink by 2^order.
        auto at = [&](int n) { return Integrator{n}.step(x, u, plant.kinetics(), 0.5); };
        const auto a = at(2), b = at(4), c = at(8);
        const double e1 = std::hypot(a.cA - b.cA, a.cR - b.cR);
        const double e2 = std::hypot(b.cA - c.cA, b.cR - c.cR);
        const double order = std::log2(e1 / e2);
        CHECK(std::abs(order - 4.0) < 0.5);
    }
    SUBCASE("non-finite state raises")
    {
        CHECK_THROWS_AS(plant.step({std::nan(""), 0.1}, {0.8, 1.0}), IntegratorError);
    }
}

TEST_CASE("sweep")
{
    KineticParameters kin;
    SUBCASE("peak and ratio maximum")
    {
        const auto rows = sweep_steady_states(0.8, linspace(0.5, 1.1, 121), kin);
        REQUIRE(rows.size() == 121);
        std::size_t peak = 0, ratio = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].x.cR > rows[peak].x.cR) peak = i;
            if (rows[i].x.cR / rows[i].x.cA > rows[ratio].x.cR / rows[ratio].x.cA) ratio = i;
        }
        CHECK(peak > 0);
        CHECK(peak < rows.size() - 1);
        CHECK(std::abs(rows[ratio].T - 1.043) <= 0.005 + 1e-12);
        CHECK(steady_state({0.8, 1.1}, kin).cR < steady_state({0.8, 1.043}, kin).cR);
    }
    SUBCASE("single point")
    {
        const auto rows = sweep_steady_states(0.8, {0.9}, kin);
        CHECK(rows.size() == 1);
        CHECK(sweep_to_csv(rows).rfind("T,C_A,C_R,C_S\n", 0) == 0);
    }
    SUBCASE("bad grids")
    {
        CHECK_THROWS(sweep_steady_states(0.8, {}, kin));
        CHECK_THROWS(sweep_steady_states(0.8, {1.0, 0.9}, kin));
        CHECK_THROWS_WITH(sweep_steady_states(0.8, {-0.1, 0.9}, kin), doctest::Contains("-0.1"));
    }
}
