#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "rnnmpc/errors.hpp"
#include "rnnmpc/lstm.hpp"
#include "rnnmpc/train.hpp"

using namespace rnnmpc;

namespace {

double sigmoid(double z)
{
    return 1.0 / (1.0 + std::exp(-z));
}

NetworkShape small_shape(int p = 4, std::vector<int> hidden = {8, 8})
{
    NetworkShape s;
    s.horizon = p;
    s.hidden = std::move(hidden);
    return s;
}

WindowBatch random_batch(int horizon, int n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<RegressorWindow> ws;
    for (int k = 0; k < n; ++k) {
        RegressorWindow w;
        w.y0 = {U(rng), U(rng)};
        for (int t = 0; t < horizon; ++t) w.u_seq.push_back({U(rng), U(rng)});
        w.target = {U(rng), U(rng)};
        ws.push_back(w);
    }
    return encode_windows(ws, horizon);
}

LstmNetwork random_net(const NetworkShape& s, std::uint64_t seed, double scale = 0.5)
{
    LstmNetwork net(s);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-scale, scale);
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i) net.parameters()(i) = U(rng);
    return net;
}

} // namespace

TEST_CASE("cell step")
{
    const int H = 3, I = 4;
    SUBCASE("zero parameters")
    {
        const Eigen::MatrixXd W = Eigen::MatrixXd::Zero(4 * H, H + I);
        const Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * H);
        const Eigen::VectorXd c_prev = Eigen::Vector3d(0.4, -1.2, 2.0);
        const auto out = cell_step(W, b, Eigen::VectorXd::Ones(H), c_prev, Eigen::VectorXd::Ones(I));
        for (int j = 0; j < H; ++j) {
            CHECK(out.i(j) == 0.5);
            CHECK(out.f(j) == 0.5);
            CHECK(out.o(j) == 0.5);
            CHECK(out.candidate(j) == 0.0);
            CHECK(out.c(j) == doctest::Approx(0.5 * c_prev(j)).epsilon(1e-15));
            CHECK(out.h(j) == doctest::Approx(0.5 * std::tanh(0.5 * c_prev(j))).epsilon(1e-15));
        }
    }
    SUBCASE("saturated forget gate keeps the cell")
    {
        const Eigen::MatrixXd W = Eigen::MatrixXd::Zero(4 * H, H + I);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * H);
        b.segment(0, H).setConstant(-40.0);
        b.segment(H, H).setConstant(40.0);
        const Eigen::VectorXd c_prev = Eigen::Vector3d(0.4, -1.2, 2.0);
        const auto out = cell_step(W, b, Eigen::VectorXd::Zero(H), c_prev, Eigen::VectorXd::Ones(I));
        CHECK((out.c - c_prev).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("hand-coded scalar reference")
    {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> U(-0.5, 0.5);
        Eigen::MatrixXd W(4 * H, H + I);
        Eigen::VectorXd b(4 * H), h(H), c(H), x(I);
        for (auto* m : {&b, &h, &c, &x})
            for (Eigen::Index i = 0; i < m->size(); ++i) (*m)(i) = U(rng);
        for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = U(rng);
        const auto out = cell_step(W, b, h, c, x);
        for (int j = 0; j < H; ++j) {
            double z[4];
            for (int g = 0; g < 4; ++g) {
                z[g] = b(g * H + j);
                for (int k = 0; k < H; ++k) z[g] += W(g * H + j, k) * h(k);
                for (int k = 0; k < I; ++k) z[g] += W(g * H + j, H + k) * x(k);
            }
            const double i = sigmoid(z[0]), f = sigmoid(z[1]), o = sigmoid(z[2]), cand = std::tanh(z[3]);
            const double cn = f * c(j) + i * cand;
            CHECK(out.c(j) == doctest::Approx(cn).epsilon(1e-14));
            CHECK(out.h(j) == doctest::Approx(o * std::tanh(cn)).epsilon(1e-14));
            CHECK(out.i(j) > 0.0);
            CHECK(out.i(j) < 1.0);
        }
    }
    SUBCASE("shape mismatch")
    {
        const Eigen::MatrixXd W = Eigen::MatrixXd::Zero(4 * H, H + I);
        const Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * H);
        CHECK_THROWS_AS(cell_step(W, b, Eigen::VectorXd::Zero(H), Eigen::VectorXd::Zero(H), Eigen::VectorXd::Zero(I + 1)),
                        ShapeError);
        CHECK_THROWS_AS(cell_step(W, b, Eigen::VectorXd::Zero(H + 1), Eigen::VectorXd::Zero(H), Eigen::VectorXd::Zero(I)),
                        ShapeError);
    }
}

TEST_CASE("parameter layout")
{
    const LstmNetwork net(small_shape(4, {8, 5}));
    const auto& L = net.layout();
    CHECK(L.layer_input(0) == kSlotWidth);
    CHECK(L.layer_input(1) == 8);
    const std::size_t expected = 4 * 8 * (8 + 4) + 4 * 8 + 4 * 5 * (5 + 8) + 4 * 5 + 2 * 5 + 2;
    CHECK(L.size() == expected);
    CHECK(net.weights(1).rows() == 20);
    CHECK(net.weights(1).cols() == 13);
}

TEST_CASE("initialization")
{
    const auto net = LstmNetwork::initialized(small_shape(), 5);
    const int H = 8;
    CHECK(net.bias(0).segment(H, H).isApproxToConstant(1.0));
    CHECK(net.bias(0).segment(0, H).isZero());
    CHECK(net.bias(0).segment(2 * H, 2 * H).isZero());
    const double bound = 1.0 / std::sqrt(8.0 + 4.0);
    CHECK(net.weights(0).cwiseAbs().maxCoeff() <= bound);
    CHECK(net.readout_bias().isZero());
    CHECK(LstmNetwork::initialized(small_shape(), 5) == net);
    CHECK_FALSE(LstmNetwork::initialized(small_shape(), 6) == net);
}

TEST_CASE("window encoding")
{
    RegressorWindow w;
    w.y0 = {0.1, 0.2};
    w.u_seq = {{0.3, 0.4}, {0.5, 0.6}};
    Eigen::VectorXd col(8);
    encode_window(w, col);
    Eigen::VectorXd expected(8);
    expected << 0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.5, 0.6;
    CHECK(col == expected);
    CHECK_THROWS_AS(encode_windows({w}, 3), ShapeError);
}

TEST_CASE("forward")
{
    RegressorWindow w;
    w.y0 = {0.1, -0.2};
    for (int t = 0; t < 4; ++t) w.u_seq.push_back({0.3 * t, -0.1 * t});

    SUBCASE("zero network predicts the read-out bias")
    {
        LstmNetwork net(small_shape());
        net.readout_bias() << 0.25, -0.75;
        const auto y = forward(net, w);
        CHECK(y.cA == 0.25);
        CHECK(y.cR == -0.75);
    }
    SUBCASE("pure and batched")
    {
        const auto net = random_net(small_shape(), 11);
        const auto a = forward(net, w);
        const auto b = forward(net, w);
        CHECK(a == b);
        const auto batch = encode_windows({w, w, w}, 4);
        const Eigen::MatrixXd y = forward_batch(net, batch.inputs);
        for (int k = 0; k < 3; ++k) {
            CHECK(y(0, k) == doctest::Approx(a.cA).epsilon(1e-13));
            CHECK(y(1, k) == doctest::Approx(a.cR).epsilon(1e-13));
        }
    }
    SUBCASE("horizon mismatch")
    {
        const LstmNetwork net(small_shape(5));
        CHECK_THROWS_AS(forward(net, w), ShapeError);
    }
}

TEST_CASE("loss_mae")
{
    CHECK(loss_mae({{0.1, 0.2}}, {{0.1, 0.2}}) == 0.0);
    CHECK(loss_mae({{0.1, -0.3}}, {{0.0, 0.0}}) == doctest::Approx(0.2));
    const std::vector<PlantState> p{{0.1, 0.5}, {-0.4, 0.2}, {0.3, 0.3}};
    const std::vector<PlantState> t{{0.0, 0.1}, {0.2, 0.2}, {-0.1, 0.9}};
    const std::vector<PlantState> pr{p[2], p[0], p[1]}, tr{t[2], t[0], t[1]};
    CHECK(loss_mae(p, t) == doctest::Approx(loss_mae(pr, tr)).epsilon(1e-15));
    CHECK_THROWS(loss_mae({}, {}));
    CHECK_THROWS(loss_mae({{0, 0}}, {}));
}

TEST_CASE("backward")
{
    const auto shape = small_shape();
    SUBCASE("read-out bias gradient is the sign of the error")
    {
        LstmNetwork net(shape);
        net.readout_bias() << 5.0, -5.0;
        const auto b = random_batch(4, 1, 1);
        const auto lg = reference::backward(net, b);
        const auto gb = net.layout().readout_bias(lg.gradient);
        CHECK(gb(0) == 0.5);
        CHECK(gb(1) == -0.5);
    }
    SUBCASE("gradient matches central differences")
    {
        const auto net = random_net(shape, 21);
        const auto batch = random_batch(4, 5, 22);
        const auto lg = reference::backward(net, batch);
        const double h = 1e-5;
        double worst = 0.0;
        LstmNetwork probe = net;
        for (Eigen::Index i = 0; i < net.parameters().size(); ++i) {
            const double x = net.parameters()(i);
            probe.parameters()(i) = x + h;
            const double fp = reference::backward(probe, batch).loss;
            probe.parameters()(i) = x - h;
            const double fm = reference::backward(probe, batch).loss;
            probe.parameters()(i) = x;
            const double fd = (fp - fm) / (2 * h);
            const double a = lg.gradient(i);
            worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}));
        }
        CHECK(worst < 1e-4);
    }
    SUBCASE("duplicated window keeps the mean gradient")
    {
        const auto net = random_net(shape, 31);
        const auto one = random_batch(4, 1, 32);
        WindowBatch two = one;
        two.inputs = Eigen::MatrixXd(one.inputs.rows(), 2);
        two.inputs << one.inputs, one.inputs;
        two.targets = Eigen::MatrixXd(2, 2);
        two.targets << one.targets, one.targets;
        const auto a = reference::backward(net, one);
        const auto b = reference::backward(net, two);
        CHECK((a.gradient - b.gradient).cwiseAbs().maxCoeff() < 1e-15);
        CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-15));
    }
    SUBCASE("batched kernel agrees with the serial reference")
    {
        const auto net = random_net(small_shape(6, {7, 5}), 41);
        const auto batch = random_batch(6, 77, 42);
        const auto ref = reference::backward(net, batch);
        const auto fast = backward(net, batch, {8, 1});
        CHECK(fast.loss == doctest::Approx(ref.loss).epsilon(1e-13));
        CHECK((fast.gradient - ref.gradient).cwiseAbs().maxCoeff() < 1e-13);
        const Eigen::MatrixXd y = forward_batch(net, batch.inputs, {8, 1});
        for (Eigen::Index k = 0; k < batch.size(); ++k)
            CHECK((y.col(k) - reference::forward(net, batch.inputs.col(k))).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("thread count does not change the bits")
    {
        const auto net = random_net(shape, 51);
        const auto batch = random_batch(4, 200, 52);
        const auto a = backward(net, batch, {16, 1});
        const auto b = backward(net, batch, {16, 4});
        CHECK(a.loss == b.loss);
        CHECK(a.gradient == b.gradient);
        CHECK(forward_batch(net, batch.inputs, {16, 1}) == forward_batch(net, batch.inputs, {16, 4}));
    }
}

TEST_CASE("adam")
{
    SUBCASE("first step moves by lr against the gradient sign")
    {
        AdamState s({}, 2);
        Eigen::VectorXd x(2);
        x << 1.0, 1.0;
        adam_step(s, x, Eigen::Vector2d(3.0, -0.02));
        CHECK(x(0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
        CHECK(x(1) == doctest::Approx(1.0 + 1e-3).epsilon(1e-9));
    }
    SUBCASE("zero gradient leaves parameters unchanged")
    {
        AdamState s({}, 3);
        Eigen::VectorXd x = Eigen::Vector3d(0.1, -0.2, 0.3);
        const Eigen::VectorXd x0 = x;
        for (int i = 0; i < 50; ++i) adam_step(s, x, Eigen::VectorXd::Zero(3));
        CHECK(x == x0);
    }
    SUBCASE("two steps against a hand calculation")
    {
        AdamState s({}, 1);
        Eigen::VectorXd x(1);
        x << 1.0;
        adam_step(s, x, Eigen::VectorXd::Constant(1, 0.5));
        CHECK(x(0) == doctest::Approx(0.99900000002).epsilon(1e-14));
        adam_step(s, x, Eigen::VectorXd::Constant(1, -0.2));
        CHECK(x(0) == doctest::Approx(0.9986543941811651).epsilon(1e-14));
        CHECK(s.step == 2);
    }
    SUBCASE("shape mismatch")
    {
        AdamState s({}, 2);
        Eigen::VectorXd x(3);
        CHECK_THROWS_AS(adam_step(s, x, Eigen::VectorXd::Zero(3)), ShapeError);
    }
}
