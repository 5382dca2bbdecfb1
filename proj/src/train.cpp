#include "rnnmpc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rnnmpc/csv.hpp"
#include "rnnmpc/errors.hpp"

namespace rnnmpc {

void adam_step(AdamState& s, Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad)
{
    if (params.size() != grad.size() || s.m.size() != params.size() || s.v.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
    const auto& h = s.hyper;
    ++s.step;
    s.m = h.beta1 * s.m + (1.0 - h.beta1) * grad;
    s.v = h.beta2 * s.v + (1.0 - h.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.step));
    params.array() -= h.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + h.eps);
}

TrainResult train(LstmNetwork net, const WindowBatch& data, const TrainOptions& opts)
{
    if (opts.epochs < 1) throw DomainError("train: epochs must be >= 1");
    if (opts.batch_size < 1) throw DomainError("train: batch size must be >= 1");
    const Eigen::Index n = data.size();
    if (n == 0) throw DataError("train: empty dataset");
    if (data.targets.cols() != n) throw ShapeError("train: dataset has no targets");

    std::mt19937_64 rng(opts.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    AdamState adam(opts.adam, net.parameters().size());

    TrainResult result{net, {}};
    result.loss_history.reserve(static_cast<std::size_t>(opts.epochs));
    WindowBatch batch;
    batch.horizon = data.horizon;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < n; start += opts.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(opts.batch_size, n - start);
            batch.inputs.resize(data.inputs.rows(), len);
            batch.targets.resize(data.targets.rows(), len);
            for (Eigen::Index j = 0; j < len; ++j) {
                batch.inputs.col(j) = data.inputs.col(order[start + j]);
                batch.targets.col(j) = data.targets.col(order[start + j]);
            }
            const auto lg = backward(result.net, batch, opts.kernel);
            if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                                      " (non-finite loss or gradient)");
            epoch_loss += lg.loss * static_cast<double>(len);
            adam_step(adam, result.net.parameters(), lg.gradient);
        }
        epoch_loss /= static_cast<double>(n);
        result.loss_history.push_back(epoch_loss);
        if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss);
    }
    return result;
}

std::vector<PlantState> predict(const LstmNetwork& net, const Dataset& ds, const KernelOptions& kernel)
{
    if (!ds.normalized) throw DataError("predict: dataset must be normalized");
    const auto batch = encode_windows(ds.windows, net.horizon());
    const Eigen::MatrixXd y = forward_batch(net, batch.inputs, kernel);
    std::vector<PlantState> out;
    out.reserve(ds.windows.size());
    for (Eigen::Index k = 0; k < y.cols(); ++k) out.push_back(ds.normalization.invert(PlantState{y(0, k), y(1, k)}));
    return out;
}

double rmse(const std::vector<PlantState>& predictions, const std::vector<PlantState>& targets)
{
    if (predictions.empty()) throw DataError("rmse: empty input");
    if (predictions.size() != targets.size()) throw ShapeError("rmse: length mismatch");
    double sa = 0.0, sr = 0.0;
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        sa += std::pow(predictions[k].cA - targets[k].cA, 2);
        sr += std::pow(predictions[k].cR - targets[k].cR, 2);
    }
    const auto n = static_cast<double>(predictions.size());
    return 0.5 * (std::sqrt(sa / n) + std::sqrt(sr / n));
}

double evaluate_rmse(const LstmNetwork& net, const Dataset& ds, const Normalization& norm, const KernelOptions& kernel)
{
    const Dataset normalized = ds.normalized ? ds : normalize(ds, norm);
    const auto preds = predict(net, normalized, kernel);
    std::vector<PlantState> targets;
    targets.reserve(normalized.windows.size());
    for (const auto& w : normalized.windows) targets.push_back(normalized.normalization.invert(w.target));
    return rmse(preds, targets);
}

// ---------------------------------------------------------------------------
// Model files

namespace {

nlohmann::json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v)
{
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

void matrix_from_json(const nlohmann::json& j, Eigen::Ref<Eigen::MatrixXd> m, const std::string& where)
{
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != m.rows())
        throw ShapeError(where + ": expected " + std::to_string(m.rows()) + " rows");
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
            throw ShapeError(where + ": row " + std::to_string(r) + " should have " + std::to_string(m.cols()) +
                             " columns");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
}

void vector_from_json(const nlohmann::json& j, Eigen::Ref<Eigen::VectorXd> v, const std::string& where)
{
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != v.size())
        throw ShapeError(where + ": expected " + std::to_string(v.size()) + " entries");
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
}

constexpr const char* kGateWeight[] = {"W_i", "W_f", "W_o", "W_C"};
constexpr const char* kGateBias[] = {"b_i", "b_f", "b_o", "b_c"};

} // namespace

nlohmann::json model_to_json(const ModelFile& model)
{
    const auto& net = model.net;
    nlohmann::json j;
    j["p"] = net.horizon();
    j["input_size"] = net.shape().input_size;
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const int H = net.layout().hidden(l);
        const auto W = net.weights(l);
        const auto b = net.bias(l);
        nlohmann::json layer;
        layer["hidden"] = H;
        layer["input"] = net.layout().layer_input(l);
        for (int g = 0; g < 4; ++g) {
            layer[kGateWeight[g]] = matrix_to_json(W.middleRows(g * H, H));
            layer[kGateBias[g]] = vector_to_json(b.segment(g * H, H));
        }
        layers.push_back(std::move(layer));
    }
    j["layers"] = std::move(layers);
    j["readout"] = {{"W", matrix_to_json(net.readout_weights())}, {"b", vector_to_json(net.readout_bias())}};
    j["normalization"] = normalization_to_json(model.normalization);
    j["metadata"] = model.metadata;
    return j;
}

ModelFile model_from_json(const nlohmann::json& j)
{
    try {
        NetworkShape shape;
        shape.horizon = j.at("p").get<int>();
        shape.input_size = j.value("input_size", kSlotWidth);
        shape.hidden.clear();
        const auto& layers = j.at("layers");
        if (!layers.is_array() || layers.empty()) throw ShapeError("model has no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const int H = layers[l].at("hidden").get<int>();
            const int expected_in = l == 0 ? shape.input_size : shape.hidden.back();
            if (layers[l].contains("input") && layers[l]["input"].get<int>() != expected_in)
                throw ShapeError("layer " + std::to_string(l) + ": input size " +
                                 std::to_string(layers[l]["input"].get<int>()) + " does not match " +
                                 std::to_string(expected_in));
            shape.hidden.push_back(H);
        }
        ModelFile model{LstmNetwork(shape), normalization_from_json(j.at("normalization")),
                        j.value("metadata", nlohmann::json::object())};
        auto& net = model.net;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const int H = shape.hidden[l];
            auto W = net.weights(l);
            auto b = net.bias(l);
            const std::string where = "layer " + std::to_string(l);
            for (int g = 0; g < 4; ++g) {
                matrix_from_json(layers[l].at(kGateWeight[g]), W.middleRows(g * H, H), where + " " + kGateWeight[g]);
                vector_from_json(layers[l].at(kGateBias[g]), b.segment(g * H, H), where + " " + kGateBias[g]);
            }
        }
        matrix_from_json(j.at("readout").at("W"), net.readout_weights(), "readout W");
        vector_from_json(j.at("readout").at("b"), net.readout_bias(), "readout b");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const ModelFile& model, const std::string& path)
{
    csv::write_file(path, model_to_json(model).dump(1) + "\n");
}

ModelFile load_model(const std::string& path)
{
    const auto text = csv::read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

} // namespace rnnmpc
