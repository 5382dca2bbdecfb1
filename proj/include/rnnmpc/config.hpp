#pragma once

// Experiment configuration: one JSON document with an explicit schema
// version describing a full run from plant constants to benchmark table.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnnmpc/closed_loop.hpp"
#include "rnnmpc/mpc.hpp"
#include "rnnmpc/plant.hpp"
#include "rnnmpc/sysid.hpp"
#include "rnnmpc/train.hpp"

namespace rnnmpc {

inline constexpr int kSchemaVersion = 1;

struct PlantConfig {
    KineticParameters kinetics;
    double dt = 0.1;
    int substeps = 10;
};

struct ExcitationConfig {
    StaircaseSpec train;
    StaircaseSpec test = default_test();

    static StaircaseSpec default_test()
    {
        StaircaseSpec s;
        s.q_levels = {0.77, 0.83};
        s.t_step = 0.07;
        s.dwell = 15;
        s.seed = 2;
        return s;
    }
};

struct ArchitectureSpec {
    int layers = 2;
    int nodes = 64;
    bool operator==(const ArchitectureSpec&) const = default;
};

struct ModelConfig {
    ArchitectureSpec arch;
    int epochs = 300;
    int batch_size = 64;
    std::uint64_t seed = 0;
    AdamHyper adam;
    int chunk = 32;
    int threads = 0;
};

struct ScenarioConfig {
    std::string name;
    ControlInput u0;
    std::optional<PlantState> x0; // steady state of u0 when absent
    int steps = 400;
    int warmup = 10;
};

struct BenchmarkConfig {
    /// Closed-loop table: one row per (architecture, seed).
    std::vector<ArchitectureSpec> architectures{{1, 16}, {2, 16}, {2, 64}};
    /// Test-RMSE study, median over the same seeds.
    std::vector<ArchitectureSpec> study_architectures{{1, 16}, {2, 64}};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int offset_window = 50;
    double offset_threshold = 0.01;
};

struct PathsConfig {
    std::string data = "data";
    std::string models = "models";
    std::string results = "results";
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    PlantConfig plant;
    ExcitationConfig excitation;
    ModelConfig model;
    MpcSettings mpc;
    std::vector<ScenarioConfig> scenarios{{"startup", {0.8, 0.8}, std::nullopt, 400, 10},
                                          {"recovery", {0.8, 1.1}, std::nullopt, 400, 10}};
    BenchmarkConfig benchmark;
    PathsConfig paths;

    Plant make_plant() const;
    std::vector<Scenario> make_scenarios() const;
    NetworkShape shape(const ArchitectureSpec& a) const;
    TrainOptions train_options(std::uint64_t seed) const;
    KernelOptions kernel() const;
};

/// Fills defaults, range-checks every field and rejects unknown keys.
/// Throws ConfigError; the message lists every violation with its JSON path
/// and the expected range, path() names the first.
ExperimentConfig validate_config(const nlohmann::json& document);

ExperimentConfig load_config(const std::string& path);

/// Complete document; validate_config(serialize_config(c)) reproduces c.
nlohmann::json serialize_config(const ExperimentConfig& config);

/// SHA-256 (hex) of the canonical serialization, excluding `paths` and the
/// per-artifact choices model.{layers, nodes, seed, threads}.
std::string config_digest(const ExperimentConfig& config);

} // namespace rnnmpc
