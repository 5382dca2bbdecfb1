#pragma once

// Reversible A <-> R <-> S kinetics in a single isothermal CSTR, in
// normalized dimensionless units. The state is (C_A, C_R); C_S is always
// 1 - C_A - C_R and never stored.

#include <array>
#include <string>
#include <vector>

namespace rnnmpc {

struct KineticParameters {
    double cA0 = 0.8;
    std::array<double, 4> k0{1.0, 0.7, 0.1, 0.006};
    std::array<double, 4> e_over_rt0{8.33, 10.0, 50.0, 83.3};

    /// Throws DomainError if cA0 is outside (0, 1] or any k0/E is non-positive.
    void validate() const;
};

struct PlantState {
    double cA = 0.0;
    double cR = 0.0;

    double cS() const { return 1.0 - cA - cR; }
    bool operator==(const PlantState&) const = default;
};

struct ControlInput {
    double q = 0.0;
    double T = 0.0;

    bool operator==(const ControlInput&) const = default;
};

/// Largest violation of {cA >= 0, cR >= 0, cA + cR <= 1}; 0 when inside.
double simplex_violation(const PlantState& x);

std::array<double, 4> rate_constants(const KineticParameters& kin, double T);

PlantState state_derivative(const PlantState& x, const ControlInput& u, const KineticParameters& kin);

/// Fixed-step classical RK4 with zero-order hold on u.
struct Integrator {
    int substeps = 10;

    PlantState step(const PlantState& x, const ControlInput& u, const KineticParameters& kin,
                    double dt) const;
};

/// Discrete plant map x_{k+1} = Phi(x_k, u_k) at a fixed sampling time.
class Plant {
public:
    explicit Plant(KineticParameters kin = {}, double dt = 0.1, Integrator integrator = {});

    PlantState step(const PlantState& x, const ControlInput& u) const;

    const KineticParameters& kinetics() const { return kin_; }
    double dt() const { return dt_; }
    const Integrator& integrator() const { return integrator_; }

private:
    KineticParameters kin_;
    double dt_;
    Integrator integrator_;
};

/// Exact steady state at fixed u. The balance is affine in (C_A, C_R), so
/// this is a direct 2x2 solve; the guess is accepted for interface symmetry
/// and ignored.
PlantState steady_state(const ControlInput& u, const KineticParameters& kin,
                        const PlantState& guess = {});

struct SweepRow {
    double T;
    PlantState x;
};

/// Steady states across an ascending temperature grid at flow rate q.
std::vector<SweepRow> sweep_steady_states(double q, const std::vector<double>& T_grid,
                                          const KineticParameters& kin = {});

/// `n` evenly spaced points in [lo, hi] inclusive (n == 1 gives {lo}).
std::vector<double> linspace(double lo, double hi, int n);

/// CSV with header `T,C_A,C_R,C_S`.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

} // namespace rnnmpc
