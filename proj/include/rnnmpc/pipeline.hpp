#pragma once

// Stages behind the command-line subcommands. Every stage reads and writes
// artifacts below a workspace root; each artifact carries the digest of the
// configuration that produced it (embedded for JSON, in a `<file>.meta.json`
// sidecar for CSV).

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnnmpc/config.hpp"

namespace rnnmpc {

/// Environment variable overriding the workspace root.
inline constexpr const char* kRootEnvVar = "RNNMPC_RESULTS_ROOT";

class Workspace {
public:
    /// `root` is used unless the environment override is set.
    Workspace(ExperimentConfig config, std::filesystem::path root = ".");

    const ExperimentConfig& config() const { return config_; }
    const std::string& digest() const { return digest_; }
    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path data_dir() const;
    std::filesystem::path models_dir() const;
    std::filesystem::path results_dir() const;

    std::filesystem::path train_data() const { return data_dir() / "train.csv"; }
    std::filesystem::path test_data() const { return data_dir() / "test.csv"; }
    std::filesystem::path model_path(const ArchitectureSpec& a, std::uint64_t seed) const;

    /// Progress messages (stderr in the CLI, silent by default).
    std::function<void(const std::string&)> log = [](const std::string&) {};

private:
    ExperimentConfig config_;
    std::string digest_;
    std::filesystem::path root_;
};

/// Writes `<path>.partial`, then renames over `path`; a failed stage leaves
/// only `.partial` files behind.
void write_artifact(const std::filesystem::path& path, const std::string& content);

/// CSV plus its digest sidecar.
void write_csv_artifact(const Workspace& ws, const std::filesystem::path& path, const std::string& content);

/// Digest recorded for an artifact (JSON field or CSV sidecar); empty if none.
std::string artifact_digest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct SweepRequest {
    double q = 0.8;
    double t_min = 0.5;
    double t_max = 1.1;
    int n = 121;
    std::optional<std::filesystem::path> out;
};

std::vector<SweepRow> run_sweep(const Workspace& ws, const SweepRequest& req);

struct OperatingPointRow {
    double T;
    PlantState reference;
    PlantState computed;
    bool pass;
};

/// Steady states at q = 0.8 and T in {0.8, 1.1, 1.043} against the reference
/// values, tolerance 0.005 per channel.
std::vector<OperatingPointRow> check_operating_points(const Workspace& ws);

struct DataSplit {
    Trajectory train, test;
};

DataSplit gen_data(const Workspace& ws);

/// Reads both splits; a missing file raises DataError naming it and the
/// command that produces it.
DataSplit load_data(const Workspace& ws);

struct PreparedData {
    Dataset train, test; // both normalized with the training record
    WindowBatch batch;    // encoded training windows with targets
};

PreparedData prepare_data(const Workspace& ws, const DataSplit& data);

struct TrainReport {
    ArchitectureSpec arch;
    std::uint64_t seed = 0;
    std::filesystem::path model_path;
    double train_rmse = 0.0;
    double test_rmse = 0.0;
    std::vector<double> loss_history;
};

struct TrainRequest {
    ArchitectureSpec arch;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out;
};

TrainReport train_model(const Workspace& ws, const PreparedData& data, const TrainRequest& req);

struct EvaluateReport {
    double train_rmse = 0.0;
    double test_rmse = 0.0;
    std::string model_digest;
};

EvaluateReport evaluate_model(const Workspace& ws, const DataSplit& data, const std::filesystem::path& model);

struct ClosedLoopRequest {
    std::optional<std::filesystem::path> model; // true-plant controller when absent
    std::vector<std::string> scenarios;         // all when empty
    bool svg = false;
};

struct ClosedLoopSummary {
    std::string scenario;
    double J = 0.0;
    double J_star = 0.0;
    double index = 0.0;
    OffsetVerdict verdict;
    SolverStats stats;
};

std::vector<ClosedLoopSummary> run_closed_loop(const Workspace& ws, const ClosedLoopRequest& req);

/// Loads each configured architecture's model; refuses any whose digest
/// differs from the workspace's.
BenchmarkReport run_benchmark(const Workspace& ws);

struct StudyRow {
    ArchitectureSpec arch;
    std::uint64_t seed;
    double train_rmse, test_rmse;
};

/// Every stage in order; writes `report.json` summarizing the acceptance
/// quantities.
nlohmann::json reproduce_all(const Workspace& ws);

double median(std::vector<double> v);

} // namespace rnnmpc
