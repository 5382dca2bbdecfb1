#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnnmpc/mpc.hpp"
#include "rnnmpc/plant.hpp"

namespace rnnmpc {

struct Scenario {
    std::string name;
    PlantState x0;
    ControlInput u0;
    int steps = 400;
    int warmup = 10;

    /// x0 must be a steady state of u0 (derivative norm < 1e-6) and the
    /// warm-up must fill a history of `p` entries.
    void validate(const KineticParameters& kin, int p) const;
};

/// Scenario starting at the exact steady state of u0.
Scenario make_scenario(std::string name, const ControlInput& u0, const KineticParameters& kin, int steps = 400,
                       int warmup = 10);

/// Start-up (T = 0.8) and upset recovery (T = 1.1) at q = 0.8.
std::vector<Scenario> default_scenarios(const KineticParameters& kin, int steps = 400, int warmup = 10);

struct StepRecord {
    int k = 0;
    double t = 0.0;
    PlantState y;
    ControlInput u;  // input applied over [k, k+1)
    ControlInput du; // zero during warm-up
    double stage_cost = 0.0;
    bool controlled = false;
    // solver diagnostics (controlled steps only)
    int iterations = 0;
    int evaluations = 0;
    bool converged = true;
    double solver_cost = 0.0;
    double constraint_residual = 0.0;
};

struct SolverStats {
    int solves = 0;
    int total_iterations = 0;
    int max_iterations = 0;
    int not_converged = 0;
    double max_constraint_residual = 0.0;
};

struct ClosedLoopRecord {
    std::string scenario;
    std::vector<StepRecord> steps;
    double J = 0.0;
    SolverStats stats;
};

/// Holds u0 for `warmup` steps while the history fills, then applies the
/// first move of each receding-horizon solve. Warm-up rows carry zero stage
/// cost; J sums the stage-cost column.
ClosedLoopRecord run_scenario(const Plant& plant, const Scenario& scenario, const PredictiveModel& model,
                              const MpcSettings& settings);

/// (1 - (J_rnn - J_star) / J_star) * 100. Throws DomainError when J_star <= 0.
double performance_index(double J_rnn, double J_star);

struct OffsetVerdict {
    PlantState mean_abs_error;
    bool offset = false;
};

/// Mean |y - y*| per channel over the last `window_steps` samples; offset
/// when either channel exceeds `threshold`.
OffsetVerdict offset_verdict(const ClosedLoopRecord& rec, const PlantState& y_star, int window_steps = 50,
                             double threshold = 0.01);

/// `k,t,C_A,C_R,q,T,dq,dT,stage_cost`
std::string record_to_csv(const ClosedLoopRecord& rec);

/// Per-solve diagnostics: `k,iterations,evaluations,converged,cost,constraint_residual`
std::string diagnostics_to_csv(const ClosedLoopRecord& rec);

/// Minimal static plot of outputs and inputs.
std::string record_to_svg(const ClosedLoopRecord& rec, const PlantState& y_star);

nlohmann::json stats_to_json(const SolverStats& s);

struct Architecture {
    int layers = 2;
    int nodes = 64;
    std::uint64_t seed = 0;
    std::shared_ptr<const PredictiveModel> model;
};

struct ReportRow {
    int layers = 0;
    int nodes = 0;
    std::uint64_t seed = 0;
    std::vector<double> index; // per scenario, in scenario order
    double index_avg = 0.0;
    bool offset = false;
    std::vector<ClosedLoopRecord> runs;
};

struct BenchmarkReport {
    std::vector<ClosedLoopRecord> reference; // true-plant NMPC, one per scenario
    std::vector<ReportRow> rows;
};

/// Runs the true-model controller once per scenario and every architecture
/// on every scenario. Independent runs execute concurrently; the report is
/// assembled in input order.
BenchmarkReport benchmark_suite(const Plant& plant, const std::vector<Scenario>& scenarios,
                                const MpcSettings& settings, const std::vector<Architecture>& architectures,
                                int offset_window_steps = 50, double offset_threshold = 0.01);

/// `layers,nodes,seed,I_<scenario>...,I_avg,offset`
std::string report_to_csv(const BenchmarkReport& report, const std::vector<Scenario>& scenarios);

} // namespace rnnmpc
