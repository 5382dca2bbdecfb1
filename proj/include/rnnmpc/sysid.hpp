#pragma once

// Excitation design, plant simulation, regressor windowing and per-channel
// normalization for identifying the p-step-ahead model.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "rnnmpc/plant.hpp"

namespace rnnmpc {

struct Trajectory {
    double dt = 0.1;
    std::vector<double> times;
    std::vector<ControlInput> inputs;
    std::vector<PlantState> outputs;

    std::size_t size() const { return outputs.size(); }
};

/// Temperature staircase repeated per flow-rate level. T steps up from
/// t_min to t_max, then back down, each level held `dwell` samples. The
/// first `ramp` samples of every level move linearly from the previous
/// level, and each level is offset by a seeded uniform jitter in
/// [-jitter, +jitter] (clipped to the range).
struct StaircaseSpec {
    std::vector<double> q_levels{0.75, 0.80, 0.85};
    double t_min = 0.5;
    double t_max = 1.1;
    double t_step = 0.05;
    int dwell = 20;
    int ramp = 3;
    double jitter = 0.01;
    std::uint64_t seed = 1;
};

/// Nominal staircase temperatures for one sweep (up then down, no repeat at the top).
std::vector<double> staircase_levels(const StaircaseSpec& spec);

std::vector<ControlInput> generate_excitation(const StaircaseSpec& spec);

/// y_0 = x0, y_{k+1} = plant.step(y_k, u_k). The final input is recorded but
/// has no effect inside the trajectory.
Trajectory simulate_trajectory(const Plant& plant, const std::vector<ControlInput>& profile,
                               const PlantState& x0);

struct RegressorWindow {
    PlantState y0;
    std::vector<ControlInput> u_seq;
    PlantState target;
};

/// All windows (y_k, u_k..u_{k+p-1}) -> y_{k+p}; yields size() - p windows.
std::vector<RegressorWindow> make_windows(const Trajectory& traj, int p);

struct ChannelScale {
    double offset = 0.0;
    double scale = 1.0;

    double apply(double v) const { return (v - offset) / scale; }
    double invert(double v) const { return v * scale + offset; }
    bool operator==(const ChannelScale&) const = default;
};

/// Affine maps for the four channels C_A, C_R, q, T.
struct Normalization {
    ChannelScale cA, cR, q, T;

    PlantState apply(const PlantState& x) const { return {cA.apply(x.cA), cR.apply(x.cR)}; }
    PlantState invert(const PlantState& x) const { return {cA.invert(x.cA), cR.invert(x.cR)}; }
    ControlInput apply(const ControlInput& u) const { return {q.apply(u.q), T.apply(u.T)}; }
    ControlInput invert(const ControlInput& u) const { return {q.invert(u.q), T.invert(u.T)}; }
    bool operator==(const Normalization&) const = default;
};

enum class Split { train, test };

struct Dataset {
    Split split = Split::train;
    std::vector<RegressorWindow> windows;
    bool normalized = false;
    Normalization normalization;
};

/// Min-max to [-1, 1] per channel over every value in the windows. A
/// constant channel gets offset = value, scale = 1 and a warning.
Normalization fit_normalization(const std::vector<RegressorWindow>& windows,
                                std::vector<std::string>* warnings = nullptr);

/// Maps a physical-unit dataset with the given record (typically the
/// training split's).
Dataset normalize(const Dataset& ds, const Normalization& norm);

/// Fits on `ds` itself, then maps it.
Dataset normalize(const Dataset& ds, std::vector<std::string>* warnings = nullptr);

Dataset denormalize(const Dataset& ds);

RegressorWindow normalize_window(const RegressorWindow& w, const Normalization& norm);

/// CSV `k,C_A,C_R,q,T`, one row per sample.
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& text, double dt);

nlohmann::json normalization_to_json(const Normalization& norm);
Normalization normalization_from_json(const nlohmann::json& j);

} // namespace rnnmpc
