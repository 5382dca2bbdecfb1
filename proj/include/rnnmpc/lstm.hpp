#pragma once

// Stacked LSTM with an affine read-out for p-step-ahead prediction.
//
// Every window is fed as a sequence of p slots of width 4 laid out as
// [C_A, C_R, q, T] in normalized units. Slot 0 carries y_k; later slots
// carry zeros in the C_A/C_R positions. Hidden and cell states start at
// zero for each window and the read-out acts on the top layer's hidden
// state after the last slot.
//
// All parameters live in one flat vector; ParameterLayout maps views onto
// it so that gradients and optimizer moments share the same layout.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "rnnmpc/sysid.hpp"

namespace rnnmpc {

inline constexpr int kSlotWidth = 4;
inline constexpr int kOutputSize = 2;

/// Row blocks of the stacked gate matrix, in storage order.
enum class Gate : int { input = 0, forget = 1, output = 2, candidate = 3 };

struct NetworkShape {
    int horizon = 10;
    int input_size = kSlotWidth;
    int output_size = kOutputSize;
    std::vector<int> hidden{64, 64};

    bool operator==(const NetworkShape&) const = default;
};

class ParameterLayout {
public:
    using Map = Eigen::Map<Eigen::MatrixXd>;
    using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
    using VecMap = Eigen::Map<Eigen::VectorXd>;
    using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

    explicit ParameterLayout(NetworkShape shape);

    const NetworkShape& shape() const { return shape_; }
    std::size_t size() const { return total_; }
    std::size_t num_layers() const { return shape_.hidden.size(); }
    int hidden(std::size_t layer) const { return shape_.hidden[layer]; }
    int layer_input(std::size_t layer) const;
    int top_hidden() const { return shape_.hidden.back(); }

    /// Stacked gate weights, 4H x (H + I), acting on [h_{t-1}; x_t].
    Map weights(Eigen::VectorXd& flat, std::size_t layer) const;
    ConstMap weights(const Eigen::VectorXd& flat, std::size_t layer) const;
    /// Stacked gate biases, 4H.
    VecMap bias(Eigen::VectorXd& flat, std::size_t layer) const;
    ConstVecMap bias(const Eigen::VectorXd& flat, std::size_t layer) const;
    Map readout_weights(Eigen::VectorXd& flat) const;
    ConstMap readout_weights(const Eigen::VectorXd& flat) const;
    VecMap readout_bias(Eigen::VectorXd& flat) const;
    ConstVecMap readout_bias(const Eigen::VectorXd& flat) const;

private:
    NetworkShape shape_;
    std::vector<std::size_t> w_offset_, b_offset_;
    std::size_t rw_offset_ = 0, rb_offset_ = 0, total_ = 0;
};

class LstmNetwork {
public:
    /// All parameters zero.
    explicit LstmNetwork(NetworkShape shape);

    /// Weights uniform in +-1/sqrt(fan_in), biases zero except the forget
    /// gate bias which is 1.
    static LstmNetwork initialized(NetworkShape shape, std::uint64_t seed);

    const ParameterLayout& layout() const { return layout_; }
    const NetworkShape& shape() const { return layout_.shape(); }
    int horizon() const { return shape().horizon; }
    std::size_t num_layers() const { return layout_.num_layers(); }

    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }

    auto weights(std::size_t l) { return layout_.weights(params_, l); }
    auto weights(std::size_t l) const { return layout_.weights(params_, l); }
    auto bias(std::size_t l) { return layout_.bias(params_, l); }
    auto bias(std::size_t l) const { return layout_.bias(params_, l); }
    auto readout_weights() { return layout_.readout_weights(params_); }
    auto readout_weights() const { return layout_.readout_weights(params_); }
    auto readout_bias() { return layout_.readout_bias(params_); }
    auto readout_bias() const { return layout_.readout_bias(params_); }

    bool operator==(const LstmNetwork& o) const
    {
        return shape() == o.shape() && params_.size() == o.params_.size() && params_ == o.params_;
    }

private:
    ParameterLayout layout_;
    Eigen::VectorXd params_;
};

// ---------------------------------------------------------------------------
// Single cell

struct CellOutput {
    Eigen::VectorXd h, c;
    Eigen::VectorXd i, f, o, candidate;
};

/// One LSTM step: i, f, o = sigmoid(.), C~ = tanh(.), c = f*c_prev + i*C~,
/// h = o*tanh(c). `weights` is 4H x (H + I) in Gate order.
CellOutput cell_step(const Eigen::Ref<const Eigen::MatrixXd>& weights,
                     const Eigen::Ref<const Eigen::VectorXd>& bias,
                     const Eigen::Ref<const Eigen::VectorXd>& h_prev,
                     const Eigen::Ref<const Eigen::VectorXd>& c_prev,
                     const Eigen::Ref<const Eigen::VectorXd>& input);

// ---------------------------------------------------------------------------
// Encoded windows

/// Windows packed column-wise: column n holds the p slots of window n
/// stacked (slot t occupies rows [4t, 4t + 4)).
struct WindowBatch {
    int horizon = 0;
    Eigen::MatrixXd inputs;  // (4 * horizon) x n
    Eigen::MatrixXd targets; // 2 x n, or empty when unknown

    Eigen::Index size() const { return inputs.cols(); }
};

/// Encodes already-normalized windows. Throws ShapeError on a horizon mismatch.
WindowBatch encode_windows(const std::vector<RegressorWindow>& windows, int horizon);

/// Writes the slot layout of one window into `column` (size 4 * horizon).
void encode_window(const RegressorWindow& w, Eigen::Ref<Eigen::VectorXd> column);

/// Single-window prediction in normalized space.
PlantState forward(const LstmNetwork& net, const RegressorWindow& window);

/// Mean over windows and output channels of |prediction - target|.
double loss_mae(const std::vector<PlantState>& predictions, const std::vector<PlantState>& targets);

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient; // flat, same layout as the network parameters
};

/// Threading for the batched kernels. Windows are processed in fixed
/// chunks and per-chunk gradients are summed in chunk order, so results do
/// not depend on the thread count.
struct KernelOptions {
    int chunk = 32;
    int threads = 0; // 0: OpenMP default
};

/// Batched forward; returns 2 x n predictions in normalized space.
Eigen::MatrixXd forward_batch(const LstmNetwork& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              const KernelOptions& opts = {});

/// MAE loss and its exact BPTT gradient over every column of `batch`.
/// The subgradient of |e| at e = 0 is taken as 0.
LossAndGradient backward(const LstmNetwork& net, const WindowBatch& batch, const KernelOptions& opts = {});

/// Serial per-window implementation kept as the test oracle for the
/// batched kernels.
namespace reference {

Eigen::Vector2d forward(const LstmNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& column);

LossAndGradient backward(const LstmNetwork& net, const WindowBatch& batch);

} // namespace reference

} // namespace rnnmpc
