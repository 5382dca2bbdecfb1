#include "rnnmpc/lstm.hpp"

#include <cmath>
#include <random>
#include <string>

#include "rnnmpc/errors.hpp"

namespace rnnmpc {

ParameterLayout::ParameterLayout(NetworkShape shape) : shape_(std::move(shape))
{
    if (shape_.horizon < 1) throw ShapeError("network horizon must be >= 1");
    if (shape_.input_size < 1 || shape_.output_size < 1) throw ShapeError("network input/output size must be >= 1");
    if (shape_.hidden.empty()) throw ShapeError("network needs at least one LSTM layer");
    std::size_t off = 0;
    for (std::size_t l = 0; l < shape_.hidden.size(); ++l) {
        const int H = shape_.hidden[l];
        if (H < 1) throw ShapeError("layer " + std::to_string(l) + " has no hidden units");
        const int I = layer_input(l);
        w_offset_.push_back(off);
        off += static_cast<std::size_t>(4 * H) * static_cast<std::size_t>(H + I);
        b_offset_.push_back(off);
        off += static_cast<std::size_t>(4 * H);
    }
    rw_offset_ = off;
    off += static_cast<std::size_t>(shape_.output_size) * static_cast<std::size_t>(top_hidden());
    rb_offset_ = off;
    off += static_cast<std::size_t>(shape_.output_size);
    total_ = off;
}

int ParameterLayout::layer_input(std::size_t layer) const
{
    return layer == 0 ? shape_.input_size : shape_.hidden[layer - 1];
}

namespace {

void check_flat(const Eigen::VectorXd& flat, std::size_t expected)
{
    if (static_cast<std::size_t>(flat.size()) != expected)
        throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                         std::to_string(expected));
}

} // namespace

ParameterLayout::Map ParameterLayout::weights(Eigen::VectorXd& flat, std::size_t l) const
{
    check_flat(flat, total_);
    return Map(flat.data() + w_offset_[l], 4 * hidden(l), hidden(l) + layer_input(l));
}

ParameterLayout::ConstMap ParameterLayout::weights(const Eigen::VectorXd& flat, std::size_t l) const
{
    check_flat(flat, total_);
    return ConstMap(flat.data() + w_offset_[l], 4 * hidden(l), hidden(l) + layer_input(l));
}

ParameterLayout::VecMap ParameterLayout::bias(Eigen::VectorXd& flat, std::size_t l) const
{
    check_flat(flat, total_);
    return VecMap(flat.data() + b_offset_[l], 4 * hidden(l));
}

ParameterLayout::ConstVecMap ParameterLayout::bias(const Eigen::VectorXd& flat, std::size_t l) const
{
    check_flat(flat, total_);
    return ConstVecMap(flat.data() + b_offset_[l], 4 * hidden(l));
}

ParameterLayout::Map ParameterLayout::readout_weights(Eigen::VectorXd& flat) const
{
    check_flat(flat, total_);
    return Map(flat.data() + rw_offset_, shape_.output_size, top_hidden());
}

ParameterLayout::ConstMap ParameterLayout::readout_weights(const Eigen::VectorXd& flat) const
{
    check_flat(flat, total_);
    return ConstMap(flat.data() + rw_offset_, shape_.output_size, top_hidden());
}

ParameterLayout::VecMap ParameterLayout::readout_bias(Eigen::VectorXd& flat) const
{
    check_flat(flat, total_);
    return VecMap(flat.data() + rb_offset_, shape_.output_size);
}

ParameterLayout::ConstVecMap ParameterLayout::readout_bias(const Eigen::VectorXd& flat) const
{
    check_flat(flat, total_);
    return ConstVecMap(flat.data() + rb_offset_, shape_.output_size);
}

LstmNetwork::LstmNetwork(NetworkShape shape)
    : layout_(std::move(shape)), params_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.size())))
{
}

LstmNetwork LstmNetwork::initialized(NetworkShape shape, std::uint64_t seed)
{
    LstmNetwork net(std::move(shape));
    std::mt19937_64 rng(seed);
    auto fill = [&rng](auto&& m, double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        // column-major traversal keeps the draw order fixed
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
    };
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const int H = net.layout().hidden(l);
        auto W = net.weights(l);
        fill(W, 1.0 / std::sqrt(static_cast<double>(W.cols())));
        auto b = net.bias(l);
        b.setZero();
        b.segment(static_cast<int>(Gate::forget) * H, H).setConstant(1.0);
    }
    auto R = net.readout_weights();
    fill(R, 1.0 / std::sqrt(static_cast<double>(R.cols())));
    net.readout_bias().setZero();
    return net;
}

CellOutput cell_step(const Eigen::Ref<const Eigen::MatrixXd>& weights, const Eigen::Ref<const Eigen::VectorXd>& bias,
                     const Eigen::Ref<const Eigen::VectorXd>& h_prev, const Eigen::Ref<const Eigen::VectorXd>& c_prev,
                     const Eigen::Ref<const Eigen::VectorXd>& input)
{
    const auto H = h_prev.size();
    if (c_prev.size() != H || weights.rows() != 4 * H || bias.size() != 4 * H ||
        weights.cols() != H + input.size())
        throw ShapeError("cell_step: weights " + std::to_string(weights.rows()) + "x" +
                         std::to_string(weights.cols()) + " do not match hidden " + std::to_string(H) +
                         " and input " + std::to_string(input.size()));

    Eigen::VectorXd concat(H + input.size());
    concat << h_prev, input;
    const Eigen::VectorXd z = weights * concat + bias;
    auto sigmoid = [](const auto& v) -> Eigen::VectorXd { return (1.0 + (-v.array()).exp()).inverse().matrix(); };

    CellOutput out;
    out.i = sigmoid(z.segment(0, H));
    out.f = sigmoid(z.segment(H, H));
    out.o = sigmoid(z.segment(2 * H, H));
    out.candidate = z.segment(3 * H, H).array().tanh().matrix();
    out.c = out.f.cwiseProduct(c_prev) + out.i.cwiseProduct(out.candidate);
    out.h = out.o.cwiseProduct(out.c.array().tanh().matrix());
    return out;
}

void encode_window(const RegressorWindow& w, Eigen::Ref<Eigen::VectorXd> column)
{
    const auto p = static_cast<Eigen::Index>(w.u_seq.size());
    if (column.size() != kSlotWidth * p) throw ShapeError("encode_window: column size mismatch");
    column.setZero();
    column(0) = w.y0.cA;
    column(1) = w.y0.cR;
    for (Eigen::Index t = 0; t < p; ++t) {
        column(kSlotWidth * t + 2) = w.u_seq[t].q;
        column(kSlotWidth * t + 3) = w.u_seq[t].T;
    }
}

WindowBatch encode_windows(const std::vector<RegressorWindow>& windows, int horizon)
{
    WindowBatch b;
    b.horizon = horizon;
    const auto n = static_cast<Eigen::Index>(windows.size());
    b.inputs.resize(kSlotWidth * horizon, n);
    b.targets.resize(kOutputSize, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& w = windows[k];
        if (static_cast<int>(w.u_seq.size()) != horizon)
            throw ShapeError("window " + std::to_string(k) + " has " + std::to_string(w.u_seq.size()) +
                             " inputs, network horizon is " + std::to_string(horizon));
        encode_window(w, b.inputs.col(k));
        b.targets(0, k) = w.target.cA;
        b.targets(1, k) = w.target.cR;
    }
    return b;
}

PlantState forward(const LstmNetwork& net, const RegressorWindow& window)
{
    if (static_cast<int>(window.u_seq.size()) != net.horizon())
        throw ShapeError("window horizon " + std::to_string(window.u_seq.size()) + " does not match network horizon " +
                         std::to_string(net.horizon()));
    Eigen::VectorXd col(kSlotWidth * net.horizon());
    encode_window(window, col);
    const Eigen::Vector2d y = reference::forward(net, col);
    return {y(0), y(1)};
}

double loss_mae(const std::vector<PlantState>& predictions, const std::vector<PlantState>& targets)
{
    if (predictions.empty()) throw DataError("loss_mae: empty input");
    if (predictions.size() != targets.size()) throw ShapeError("loss_mae: length mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < predictions.size(); ++k)
        s += std::abs(predictions[k].cA - targets[k].cA) + std::abs(predictions[k].cR - targets[k].cR);
    return s / (2.0 * static_cast<double>(predictions.size()));
}

namespace reference {

namespace {

void check_input(const LstmNetwork& net, Eigen::Index rows)
{
    if (rows != static_cast<Eigen::Index>(net.shape().input_size) * net.horizon())
        throw ShapeError("input column has " + std::to_string(rows) + " rows, network expects " +
                         std::to_string(net.shape().input_size * net.horizon()));
}

struct WindowTrace {
    // [layer][slot]
    std::vector<std::vector<CellOutput>> cells;
    std::vector<std::vector<Eigen::VectorXd>> concat;
};

Eigen::VectorXd run(const LstmNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& column, WindowTrace* trace)
{
    const auto& L = net.layout();
    const int p = net.horizon();
    const int I0 = net.shape().input_size;
    std::vector<Eigen::VectorXd> inputs(p);
    for (int t = 0; t < p; ++t) inputs[t] = column.segment(static_cast<Eigen::Index>(I0) * t, I0);
    if (trace) {
        trace->cells.assign(L.num_layers(), {});
        trace->concat.assign(L.num_layers(), {});
    }
    for (std::size_t l = 0; l < L.num_layers(); ++l) {
        const int H = L.hidden(l);
        Eigen::VectorXd h = Eigen::VectorXd::Zero(H), c = Eigen::VectorXd::Zero(H);
        for (int t = 0; t < p; ++t) {
            auto cell = cell_step(net.weights(l), net.bias(l), h, c, inputs[t]);
            if (trace) {
                Eigen::VectorXd cat(H + inputs[t].size());
                cat << h, inputs[t];
                trace->concat[l].push_back(std::move(cat));
            }
            h = cell.h;
            c = cell.c;
            inputs[t] = cell.h;
            if (trace) trace->cells[l].push_back(std::move(cell));
        }
    }
    return inputs[p - 1];
}

double sign(double e) { return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0); }

} // namespace

Eigen::Vector2d forward(const LstmNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& column)
{
    check_input(net, column.size());
    const Eigen::VectorXd h = run(net, column, nullptr);
    return net.readout_weights() * h + net.readout_bias();
}

LossAndGradient backward(const LstmNetwork& net, const WindowBatch& batch)
{
    const auto n = batch.size();
    if (n == 0) throw DataError("backward: empty batch");
    check_input(net, batch.inputs.rows());
    if (batch.targets.rows() != kOutputSize || batch.targets.cols() != n)
        throw ShapeError("backward: targets must be 2 x n");

    const auto& L = net.layout();
    const int p = net.horizon();
    LossAndGradient out;
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size()));
    const double denom = static_cast<double>(kOutputSize) * static_cast<double>(n);

    for (Eigen::Index k = 0; k < n; ++k) {
        WindowTrace tr;
        const Eigen::VectorXd h_top = run(net, batch.inputs.col(k), &tr);
        const Eigen::Vector2d pred = net.readout_weights() * h_top + net.readout_bias();
        const Eigen::Vector2d err = pred - batch.targets.col(k);
        out.loss += err.cwiseAbs().sum() / denom;
        const Eigen::Vector2d dy(sign(err(0)) / denom, sign(err(1)) / denom);

        L.readout_weights(out.gradient) += dy * h_top.transpose();
        L.readout_bias(out.gradient) += dy;

        std::vector<Eigen::VectorXd> dh_in(p, Eigen::VectorXd::Zero(L.top_hidden()));
        dh_in[p - 1] = net.readout_weights().transpose() * dy;

        for (std::size_t l = L.num_layers(); l-- > 0;) {
            const int H = L.hidden(l);
            const int I = L.layer_input(l);
            auto gW = L.weights(out.gradient, l);
            auto gb = L.bias(out.gradient, l);
            const auto W = net.weights(l);
            Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H), dc_next = Eigen::VectorXd::Zero(H);
            std::vector<Eigen::VectorXd> dx(p);
            for (int t = p - 1; t >= 0; --t) {
                const auto& s = tr.cells[l][t];
                const Eigen::VectorXd c_prev = t > 0 ? tr.cells[l][t - 1].c : Eigen::VectorXd::Zero(H);
                const Eigen::ArrayXd tc = s.c.array().tanh();
                const Eigen::ArrayXd dh = (dh_in[t] + dh_next).array();
                const Eigen::ArrayXd d_o = dh * tc;
                const Eigen::ArrayXd dc = dc_next.array() + dh * s.o.array() * (1.0 - tc * tc);
                const Eigen::ArrayXd di = dc * s.candidate.array();
                const Eigen::ArrayXd dg = dc * s.i.array();
                const Eigen::ArrayXd df = dc * c_prev.array();
                dc_next = (dc * s.f.array()).matrix();

                Eigen::VectorXd dz(4 * H);
                dz.segment(0, H) = (di * s.i.array() * (1.0 - s.i.array())).matrix();
                dz.segment(H, H) = (df * s.f.array() * (1.0 - s.f.array())).matrix();
                dz.segment(2 * H, H) = (d_o * s.o.array() * (1.0 - s.o.array())).matrix();
                dz.segment(3 * H, H) = (dg * (1.0 - s.candidate.array().square())).matrix();

                gW += dz * tr.concat[l][t].transpose();
                gb += dz;
                const Eigen::VectorXd dcat = W.transpose() * dz;
                dh_next = dcat.head(H);
                dx[t] = dcat.tail(I);
            }
            dh_in = std::move(dx);
        }
    }
    return out;
}

} // namespace reference

} // namespace rnnmpc
