#include "rnnmpc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rnnmpc/csv.hpp"
#include "rnnmpc/errors.hpp"

namespace rnnmpc {

void KineticParameters::validate() const
{
    if (!(cA0 > 0.0 && cA0 <= 1.0)) throw DomainError("cA0 must lie in (0, 1]");
    for (std::size_t j = 0; j < 4; ++j) {
        if (!(k0[j] > 0.0)) throw DomainError("k0[" + std::to_string(j) + "] must be positive");
        if (!(e_over_rt0[j] > 0.0))
            throw DomainError("e_over_rt0[" + std::to_string(j) + "] must be positive");
    }
}

double simplex_violation(const PlantState& x)
{
    return std::max({0.0, -x.cA, -x.cR, x.cA + x.cR - 1.0});
}

std::array<double, 4> rate_constants(const KineticParameters& kin, double T)
{
    if (!(T > 0.0)) throw DomainError("temperature must be positive");
    std::array<double, 4> k{};
    const double inv = 1.0 / T - 1.0;
    for (std::size_t j = 0; j < 4; ++j) k[j] = kin.k0[j] * std::exp(-kin.e_over_rt0[j] * inv);
    return k;
}

PlantState state_derivative(const PlantState& x, const ControlInput& u, const KineticParameters& kin)
{
    const auto k = rate_constants(kin, u.T);
    const double cS = 1.0 - x.cA - x.cR;
    return {u.q * (kin.cA0 - x.cA) - k[0] * x.cA + k[3] * x.cR,
            u.q * (1.0 - kin.cA0 - x.cR) + k[0] * x.cA + k[2] * cS - (k[1] + k[3]) * x.cR};
}

PlantState Integrator::step(const PlantState& x, const ControlInput& u, const KineticParameters& kin,
                            double dt) const
{
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    if (substeps < 1) throw DomainError("substeps must be >= 1");
    const auto k = rate_constants(kin, u.T);
    // The rates are constant over the sample (zero-order hold on T).
    auto f = [&](double a, double r) -> PlantState {
        const double s = 1.0 - a - r;
        return {u.q * (kin.cA0 - a) - k[0] * a + k[3] * r,
                u.q * (1.0 - kin.cA0 - r) + k[0] * a + k[2] * s - (k[1] + k[3]) * r};
    };
    const double h = dt / substeps;
    double a = x.cA, r = x.cR;
    for (int i = 0; i < substeps; ++i) {
        const auto d1 = f(a, r);
        const auto d2 = f(a + 0.5 * h * d1.cA, r + 0.5 * h * d1.cR);
        const auto d3 = f(a + 0.5 * h * d2.cA, r + 0.5 * h * d2.cR);
        const auto d4 = f(a + h * d3.cA, r + h * d3.cR);
        a += h / 6.0 * (d1.cA + 2.0 * d2.cA + 2.0 * d3.cA + d4.cA);
        r += h / 6.0 * (d1.cR + 2.0 * d2.cR + 2.0 * d3.cR + d4.cR);
    }
    if (!std::isfinite(a) || !std::isfinite(r))
        throw IntegratorError("non-finite state after RK4 step");
    return {a, r};
}

Plant::Plant(KineticParameters kin, double dt, Integrator integrator)
    : kin_(kin), dt_(dt), integrator_(integrator)
{
    kin_.validate();
    if (!(dt_ > 0.0)) throw DomainError("dt must be positive");
}

PlantState Plant::step(const PlantState& x, const ControlInput& u) const
{
    return integrator_.step(x, u, kin_, dt_);
}

PlantState steady_state(const ControlInput& u, const KineticParameters& kin, const PlantState& /*guess*/)
{
    if (!(u.q > 0.0)) throw DomainError("flow rate must be positive");
    const auto k = rate_constants(kin, u.T);
    // [a11 a12; a21 a22] [cA; cR] = [b1; b2]
    const double a11 = u.q + k[0];
    const double a12 = -k[3];
    const double a21 = k[2] - k[0];
    const double a22 = u.q + k[1] + k[2] + k[3];
    const double b1 = u.q * kin.cA0;
    const double b2 = u.q * (1.0 - kin.cA0) + k[2];
    const double det = a11 * a22 - a12 * a21;
    const double scale = std::abs(a11 * a22) + std::abs(a12 * a21);
    if (std::abs(det) <= 1e-14 * scale) {
        std::ostringstream msg;
        msg << "singular steady-state system at q=" << u.q << ", T=" << u.T << " (det=" << det << ")";
        throw DomainError(msg.str());
    }
    return {(b1 * a22 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det};
}

std::vector<SweepRow> sweep_steady_states(double q, const std::vector<double>& T_grid,
                                          const KineticParameters& kin)
{
    if (T_grid.empty()) throw DomainError("temperature grid is empty");
    for (std::size_t i = 1; i < T_grid.size(); ++i)
        if (!(T_grid[i] > T_grid[i - 1])) throw DomainError("temperature grid must be ascending");

    std::vector<SweepRow> rows(T_grid.size());
    std::vector<std::string> errors(T_grid.size());
    const auto n = static_cast<std::ptrdiff_t>(T_grid.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            rows[i] = {T_grid[i], steady_state({q, T_grid[i]}, kin)};
        } catch (const std::exception& e) {
            errors[i] = "T=" + csv::format_double(T_grid[i]) + ": " + e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw DomainError(e);
    return rows;
}

std::vector<double> linspace(double lo, double hi, int n)
{
    if (n < 1) throw DomainError("linspace needs n >= 1");
    std::vector<double> out(static_cast<std::size_t>(n));
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
    out.back() = hi;
    return out;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows)
{
    std::string s = "T,C_A,C_R,C_S\n";
    for (const auto& r : rows) {
        s += csv::format_double(r.T) + ',' + csv::format_double(r.x.cA) + ',' +
             csv::format_double(r.x.cR) + ',' + csv::format_double(r.x.cS()) + '\n';
    }
    return s;
}

} // namespace rnnmpc
