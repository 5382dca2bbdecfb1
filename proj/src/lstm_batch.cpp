// Batched LSTM kernels: windows are columns, each chunk of columns runs the
// whole unrolled graph with matrix-matrix products. Chunks are independent
// and run under OpenMP; their gradients are reduced in chunk order.

#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "rnnmpc/errors.hpp"
#include "rnnmpc/lstm.hpp"

namespace rnnmpc {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

struct SlotCache {
    MatrixXd concat; // [h_{t-1}; x_t], (H + I) x B
    MatrixXd gates;  // [i; f; o; C~] after activation, 4H x B
    MatrixXd c;      // H x B
};

int thread_count(const KernelOptions& opts)
{
#if defined(_OPENMP)
    return opts.threads > 0 ? opts.threads : omp_get_max_threads();
#else
    (void)opts;
    return 1;
#endif
}

void check_inputs(const LstmNetwork& net, Index rows)
{
    if (rows != static_cast<Index>(net.shape().input_size) * net.horizon())
        throw ShapeError("input batch has " + std::to_string(rows) + " rows, network expects " +
                         std::to_string(net.shape().input_size * net.horizon()));
}

/// Forward over one chunk. Returns the top hidden state after the last
/// slot; fills `cache` ([layer][slot]) when given.
MatrixXd chunk_forward(const LstmNetwork& net, const Eigen::Ref<const MatrixXd>& inputs,
                       std::vector<std::vector<SlotCache>>* cache)
{
    const auto& L = net.layout();
    const int p = net.horizon();
    const int I0 = net.shape().input_size;
    const Index B = inputs.cols();

    std::vector<MatrixXd> layer_in(p);
    for (int t = 0; t < p; ++t) layer_in[t] = inputs.middleRows(static_cast<Index>(I0) * t, I0);
    if (cache) cache->assign(L.num_layers(), std::vector<SlotCache>(p));

    MatrixXd concat, pre, gates;
    for (std::size_t l = 0; l < L.num_layers(); ++l) {
        const int H = L.hidden(l);
        const int I = L.layer_input(l);
        const auto W = net.weights(l);
        const auto b = net.bias(l);
        MatrixXd h = MatrixXd::Zero(H, B), c = MatrixXd::Zero(H, B);
        concat.resize(H + I, B);
        for (int t = 0; t < p; ++t) {
            concat.topRows(H) = h;
            concat.bottomRows(I) = layer_in[t];
            pre.noalias() = W * concat;
            pre.colwise() += b;
            gates.resize(4 * H, B);
            gates.topRows(3 * H) = (1.0 + (-pre.topRows(3 * H).array()).exp()).inverse().matrix();
            gates.bottomRows(H) = pre.bottomRows(H).array().tanh().matrix();
            c = (gates.middleRows(H, H).array() * c.array() +
                 gates.topRows(H).array() * gates.bottomRows(H).array())
                    .matrix();
            h = (gates.middleRows(2 * H, H).array() * c.array().tanh()).matrix();
            if (cache) {
                auto& s = (*cache)[l][t];
                s.concat = concat;
                s.gates = gates;
                s.c = c;
            }
            layer_in[t] = h;
        }
    }
    return layer_in[p - 1];
}

/// Loss contribution and gradient of one chunk, normalized by the full
/// batch size `n_total`.
double chunk_backward(const LstmNetwork& net, const Eigen::Ref<const MatrixXd>& inputs,
                      const Eigen::Ref<const MatrixXd>& targets, double n_total, Eigen::VectorXd& grad)
{
    const auto& L = net.layout();
    const int p = net.horizon();
    const Index B = inputs.cols();
    std::vector<std::vector<SlotCache>> cache;
    const MatrixXd h_top = chunk_forward(net, inputs, &cache);

    MatrixXd pred = net.readout_weights() * h_top;
    pred.colwise() += net.readout_bias();
    const MatrixXd err = pred - targets;
    const double denom = static_cast<double>(kOutputSize) * n_total;
    const double loss = err.cwiseAbs().sum() / denom;
    const MatrixXd dy = err.unaryExpr([denom](double e) { return e > 0.0 ? 1.0 / denom : (e < 0.0 ? -1.0 / denom : 0.0); });

    L.readout_weights(grad).noalias() += dy * h_top.transpose();
    L.readout_bias(grad) += dy.rowwise().sum();

    std::vector<MatrixXd> dh_in(p);
    dh_in[p - 1] = net.readout_weights().transpose() * dy;

    MatrixXd dz, dcat;
    for (std::size_t l = L.num_layers(); l-- > 0;) {
        const int H = L.hidden(l);
        const int I = L.layer_input(l);
        const auto W = net.weights(l);
        auto gW = L.weights(grad, l);
        auto gb = L.bias(grad, l);
        MatrixXd dh_next = MatrixXd::Zero(H, B), dc_next = MatrixXd::Zero(H, B);
        const MatrixXd zeros = MatrixXd::Zero(H, B);
        std::vector<MatrixXd> dx(p);
        dz.resize(4 * H, B);
        for (int t = p - 1; t >= 0; --t) {
            const auto& s = cache[l][t];
            const auto gi = s.gates.topRows(H).array();
            const auto gf = s.gates.middleRows(H, H).array();
            const auto go = s.gates.middleRows(2 * H, H).array();
            const auto gc = s.gates.bottomRows(H).array();
            const MatrixXd& c_prev = t > 0 ? cache[l][t - 1].c : zeros;

            const Eigen::ArrayXXd tc = s.c.array().tanh();
            Eigen::ArrayXXd dh = dh_next.array();
            if (dh_in[t].size() != 0) dh += dh_in[t].array();
            const Eigen::ArrayXXd dc = dc_next.array() + dh * go * (1.0 - tc.square());
            dz.topRows(H) = (dc * gc * gi * (1.0 - gi)).matrix();
            dz.middleRows(H, H) = (dc * c_prev.array() * gf * (1.0 - gf)).matrix();
            dz.middleRows(2 * H, H) = (dh * tc * go * (1.0 - go)).matrix();
            dz.bottomRows(H) = (dc * gi * (1.0 - gc.square())).matrix();
            dc_next = (dc * gf).matrix();

            gW.noalias() += dz * s.concat.transpose();
            gb += dz.rowwise().sum();
            dcat.noalias() = W.transpose() * dz;
            dh_next = dcat.topRows(H);
            if (l > 0) dx[t] = dcat.bottomRows(I);
        }
        dh_in = std::move(dx);
    }
    return loss;
}

struct ChunkPlan {
    Index chunk;
    Index count;
};

ChunkPlan plan(Index n, const KernelOptions& opts)
{
    const Index chunk = opts.chunk > 0 ? opts.chunk : 32;
    return {chunk, (n + chunk - 1) / chunk};
}

} // namespace

MatrixXd forward_batch(const LstmNetwork& net, const Eigen::Ref<const MatrixXd>& inputs, const KernelOptions& opts)
{
    check_inputs(net, inputs.rows());
    const Index n = inputs.cols();
    MatrixXd out(net.shape().output_size, n);
    if (n == 0) return out;
    const auto [chunk, count] = plan(n, opts);
    const int threads = thread_count(opts);

#pragma omp parallel for schedule(static) num_threads(threads) if (count > 1 && threads > 1)
    for (Index ci = 0; ci < count; ++ci) {
        const Index begin = ci * chunk;
        const Index len = std::min(chunk, n - begin);
        const MatrixXd h = chunk_forward(net, inputs.middleCols(begin, len), nullptr);
        MatrixXd y = net.readout_weights() * h;
        y.colwise() += net.readout_bias();
        out.middleCols(begin, len) = y;
    }
    return out;
}

LossAndGradient backward(const LstmNetwork& net, const WindowBatch& batch, const KernelOptions& opts)
{
    const Index n = batch.size();
    if (n == 0) throw DataError("backward: empty batch");
    check_inputs(net, batch.inputs.rows());
    if (batch.targets.rows() != kOutputSize || batch.targets.cols() != n)
        throw ShapeError("backward: targets must be 2 x n");

    const auto size = static_cast<Index>(net.layout().size());
    const auto [chunk, count] = plan(n, opts);
    const int threads = thread_count(opts);
    std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(count));
    std::vector<double> losses(static_cast<std::size_t>(count), 0.0);

#pragma omp parallel for schedule(static) num_threads(threads) if (count > 1 && threads > 1)
    for (Index ci = 0; ci < count; ++ci) {
        const Index begin = ci * chunk;
        const Index len = std::min(chunk, n - begin);
        grads[ci] = Eigen::VectorXd::Zero(size);
        losses[ci] = chunk_backward(net, batch.inputs.middleCols(begin, len), batch.targets.middleCols(begin, len),
                                    static_cast<double>(n), grads[ci]);
    }

    LossAndGradient out;
    out.gradient = std::move(grads[0]);
    out.loss = losses[0];
    for (std::size_t ci = 1; ci < grads.size(); ++ci) {
        out.gradient += grads[ci];
        out.loss += losses[ci];
    }
    return out;
}

} // namespace rnnmpc
