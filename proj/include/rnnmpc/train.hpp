#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "rnnmpc/lstm.hpp"
#include "rnnmpc/sysid.hpp"

namespace rnnmpc {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamHyper hyper;
    Eigen::VectorXd m, v;
    long step = 0;

    AdamState() = default;
    AdamState(AdamHyper h, Eigen::Index size)
        : hyper(h), m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size))
    {
    }
};

/// Bias-corrected ADAM update of `params` in place.
void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad);

struct TrainOptions {
    int epochs = 300;
    int batch_size = 64;
    std::uint64_t seed = 0;
    AdamHyper adam;
    KernelOptions kernel;
    /// Called after every epoch with (epoch index, mean training loss).
    std::function<void(int, double)> on_epoch;
};

struct TrainResult {
    LstmNetwork net;
    std::vector<double> loss_history;
};

/// Shuffled mini-batch ADAM on the MAE loss. `data` must be normalized.
/// Throws DivergenceError on a non-finite loss.
TrainResult train(LstmNetwork net, const WindowBatch& data, const TrainOptions& opts);

/// Physical-unit predictions for normalized windows.
std::vector<PlantState> predict(const LstmNetwork& net, const Dataset& ds, const KernelOptions& kernel = {});

/// Root-mean-square p-step prediction error in physical units, computed per
/// output channel and averaged over the two channels.
double rmse(const std::vector<PlantState>& predictions, const std::vector<PlantState>& targets);

/// RMSE of the network over a dataset (normalized or not; reported in
/// physical units using the dataset's normalization record).
double evaluate_rmse(const LstmNetwork& net, const Dataset& ds, const Normalization& norm,
                     const KernelOptions& kernel = {});

// ---------------------------------------------------------------------------
// Model files

struct ModelFile {
    LstmNetwork net;
    Normalization normalization;
    nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json model_to_json(const ModelFile& model);

/// Validates shapes; errors name the offending layer.
ModelFile model_from_json(const nlohmann::json& j);

void save_model(const ModelFile& model, const std::string& path);
ModelFile load_model(const std::string& path);

} // namespace rnnmpc
