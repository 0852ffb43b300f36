#include <catch2/catch_amalgamated.hpp>

#include "safeocc/cnn.hpp"
#include "safeocc/rng.hpp"

using namespace safeocc;

namespace {

Tensor3 random_tensor(int d, int ch, Rng& rng) {
    Tensor3 t(d, d, ch);
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

// Direct six-nested-loop convolution with zero padding, the independent
// oracle for the layer implementation.
Tensor3 naive_convolve(const Tensor3& in, const ConvOperator& op) {
    const int n = in.dim1;
    const int N = op.kernel_size / 2;
    Tensor3 out(n, n, op.filters);
    for (int j = 0; j < op.filters; ++j)
        for (int x1 = 0; x1 < n; ++x1)
            for (int x2 = 0; x2 < n; ++x2) {
                double s = op.bias[j];
                for (int i = 0; i < op.in_channels; ++i)
                    for (int du = -N; du <= N; ++du)
                        for (int dv = -N; dv <= N; ++dv) {
                            const int r = x1 + du, c = x2 + dv;
                            if (r < 0 || c < 0 || r >= n || c >= n) continue;
                            s += op.at(du + N, dv + N, i, j) * in(r, c, i);
                        }
                out(x1, x2, j) = s;
            }
    return out;
}

}  // namespace

TEST_CASE("convolve identity kernel") {
    Rng rng(1);
    Tensor3 in = random_tensor(5, 1, rng);
    ConvOperator op(3, 1, 1);
    op.at(1, 1, 0, 0) = 1.0;
    Tensor3 out = convolve(in, op);
    for (size_t i = 0; i < in.data.size(); ++i) REQUIRE(out.data[i] == Catch::Approx(in.data[i]));
}

TEST_CASE("convolve all-ones zero padding corners") {
    Tensor3 in(3, 3, 1, 1.0);
    ConvOperator op(3, 1, 1);
    for (int du = 0; du < 3; ++du)
        for (int dv = 0; dv < 3; ++dv) op.at(du, dv, 0, 0) = 1.0;
    Tensor3 out = convolve(in, op);
    REQUIRE(out(1, 1, 0) == Catch::Approx(9.0));
    REQUIRE(out(0, 1, 0) == Catch::Approx(6.0));
    REQUIRE(out(0, 0, 0) == Catch::Approx(4.0));
}

TEST_CASE("convolve matches naive six-loop oracle") {
    Rng rng(2);
    Tensor3 in = random_tensor(8, 2, rng);
    ConvOperator op(3, 2, 4);
    for (double& w : op.kernel) w = rng.uniform(-1.0, 1.0);
    for (double& b : op.bias) b = rng.uniform(-1.0, 1.0);
    Tensor3 fast = convolve(in, op);
    Tensor3 slow = naive_convolve(in, op);
    for (size_t i = 0; i < fast.data.size(); ++i)
        REQUIRE(std::abs(fast.data[i] - slow.data[i]) < 1e-12);
}

TEST_CASE("convolve rejects channel mismatch") {
    REQUIRE_THROWS_AS(convolve(Tensor3(4, 4, 2), ConvOperator(3, 1, 1)), std::invalid_argument);
}

TEST_CASE("activations") {
    REQUIRE(apply_activation(-2.0, Activation::relu) == 0.0);
    REQUIRE(apply_activation(3.0, Activation::relu) == 3.0);
    REQUIRE(apply_activation(0.0, Activation::sigmoid) == Catch::Approx(0.5));
    for (double z = -2.0; z <= 2.0; z += 0.25)
        REQUIRE(apply_activation(z, Activation::tanh) == Catch::Approx(std::tanh(z)).epsilon(1e-12));
}

TEST_CASE("pooling basics") {
    Tensor3 t(2, 2, 1);
    t(0, 0, 0) = 1; t(0, 1, 0) = 2; t(1, 0, 0) = 3; t(1, 1, 0) = 4;
    REQUIRE(pool(t, PoolKind::max, 2).data[0] == 4.0);
    REQUIRE(pool(t, PoolKind::average, 2).data[0] == Catch::Approx(2.5));
    REQUIRE_THROWS_AS(pool(Tensor3(3, 3, 1), PoolKind::max, 2), std::invalid_argument);
}

TEST_CASE("max pool matches brute-force window scan") {
    Rng rng(3);
    Tensor3 t = random_tensor(8, 2, rng);
    Tensor3 p = pool(t, PoolKind::max, 2);
    for (int c = 0; c < 2; ++c)
        for (int r = 0; r < 4; ++r)
            for (int cc = 0; cc < 4; ++cc) {
                double best = -1e300;
                for (int dr = 0; dr < 2; ++dr)
                    for (int dc = 0; dc < 2; ++dc)
                        best = std::max(best, t(2 * r + dr, 2 * cc + dc, c));
                REQUIRE(p(r, cc, c) == best);
            }
}

TEST_CASE("forward on zero model returns final bias") {
    Rng rng(4);
    CnnModel m = make_cnn(8, 1, {{4, 3}}, 2, rng);
    Vec zero(params_flatten(m).size(), 0.0);
    params_assign(m, zero);
    m.dense[0].bias = {0.5, -0.25};
    Tensor3 img(8, 8, 1, 0.0);
    ForwardPass fp = forward(m, img);
    REQUIRE(fp.output[0] == Catch::Approx(0.5));
    REQUIRE(fp.output[1] == Catch::Approx(-0.25));
}

TEST_CASE("forward is pure") {
    Rng rng(5);
    CnnModel m = make_cnn(8, 1, {{4, 3}, {8, 3}}, 2, rng);
    Tensor3 img = random_tensor(8, 1, rng);
    Vec a = forward(m, img).output;
    Vec b = forward(m, img).output;
    REQUIRE(a == b);
}

TEST_CASE("one-block forward equals composed stage oracles") {
    Rng rng(6);
    CnnModel m = make_cnn(6, 1, {{3, 3}}, 2, rng);
    Tensor3 img = random_tensor(6, 1, rng);
    ForwardPass fp = forward(m, img);

    Tensor3 psi = naive_convolve(img, m.ops[0]);
    Tensor3 act = activate(psi, Activation::relu);
    Tensor3 pooled = pool(act, PoolKind::max, 2);
    Vec flat = flatten(pooled);
    for (int r = 0; r < 2; ++r) {
        double s = m.dense[0].bias[r];
        for (int c = 0; c < m.dense[0].weights.cols; ++c) s += m.dense[0].weights(r, c) * flat[c];
        REQUIRE(std::abs(fp.output[r] - s) < 1e-12);
    }
    for (size_t i = 0; i < psi.data.size(); ++i)
        REQUIRE(std::abs(fp.blocks[0].psi.data[i] - psi.data[i]) < 1e-12);
}

TEST_CASE("sse loss") {
    REQUIRE(sse_loss({1, 2}, {1, 2}) == 0.0);
    REQUIRE(sse_loss({1, 0}, {0, 0}) == 1.0);
    Rng rng(7);
    Vec a(5), b(5);
    for (int i = 0; i < 5; ++i) {
        a[i] = rng.uniform(-1, 1);
        b[i] = rng.uniform(-1, 1);
    }
    double ref = 0.0;
    for (int i = 0; i < 5; ++i) ref += (a[i] - b[i]) * (a[i] - b[i]);
    REQUIRE(sse_loss(a, b) == Catch::Approx(ref).epsilon(1e-14));
    REQUIRE_THROWS_AS(sse_loss({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(8);
    CnnModel m = make_cnn(8, 1, {{3, 3}, {4, 3}}, 2, rng);
    Tensor3 img = random_tensor(8, 1, rng);
    Vec y = {0.3, -0.7};

    Vec grad;
    backward(m, img, y, grad);

    Vec params = params_flatten(m);
    const double h = 1e-5;
    for (size_t i = 0; i < params.size(); ++i) {
        Vec p = params;
        p[i] += h;
        params_assign(m, p);
        const double lp = sse_loss(forward(m, img).output, y);
        p[i] -= 2 * h;
        params_assign(m, p);
        const double lm = sse_loss(forward(m, img).output, y);
        const double fd = (lp - lm) / (2 * h);
        const double denom = std::max(std::abs(fd), std::abs(grad[i]));
        const double err = std::abs(fd - grad[i]);
        REQUIRE((err < 1e-8 || err / denom < 1e-4));
    }
    params_assign(m, params);
}

TEST_CASE("zero-loss point gives zero gradient for linear head") {
    Rng rng(9);
    CnnModel m = make_cnn(4, 1, {{2, 3}}, 1, rng);
    Tensor3 img = random_tensor(4, 1, rng);
    Vec y = forward(m, img).output;  // exact target
    Vec grad;
    backward(m, img, y, grad);
    for (double g : grad) REQUIRE(std::abs(g) < 1e-12);
}

TEST_CASE("dense-only gradient matches closed form") {
    // model with a single linear dense layer on a 2x2 image (no conv blocks is
    // not representable, so use an identity-like 1-filter block with linear
    // pass-through via average pooling of size 1)
    Rng rng(10);
    CnnModel m;
    m.input_dim = 2;
    m.input_channels = 1;
    ConvBlockSpec spec;
    spec.filters = 1;
    spec.kernel_size = 1;
    spec.activation = Activation::linear;
    spec.pool = PoolKind::average;
    spec.pool_size = 1;
    m.blocks = {spec};
    ConvOperator op(1, 1, 1);
    op.at(0, 0, 0, 0) = 1.0;
    m.ops = {op};
    DenseLayer head;
    head.weights = Mat(2, 4);
    for (double& w : head.weights.data) w = rng.uniform(-1, 1);
    head.bias = {0.1, -0.2};
    head.activation = Activation::linear;
    m.dense = {head};

    Tensor3 img(2, 2, 1);
    for (double& v : img.data) v = rng.uniform(-1, 1);
    Vec y = {0.5, 0.5};
    ForwardPass fp = forward(m, img);
    Vec grad;
    backward(m, img, y, grad);

    // dL/dW = 2 (yhat - y) x^T
    const Vec& x = fp.flat;
    const size_t w_off = 1 + 1;  // conv kernel (1) + bias (1)
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) {
            const double expect = 2.0 * (fp.output[r] - y[r]) * x[c];
            REQUIRE(grad[w_off + r * 4 + c] == Catch::Approx(expect).margin(1e-12));
        }
}

TEST_CASE("training memorizes a constant pair") {
    Rng rng(11);
    CnnModel m = make_cnn(4, 1, {{2, 3}}, 1, rng);
    Dataset data;
    data.images.push_back(random_tensor(4, 1, rng));
    data.labels.push_back({0.7});
    Split split;
    split.train = {0};
    split.val = {0};
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.batch = 1;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    cfg.min_delta = 0.0;
    Rng train_rng(12);
    train(m, data, split, cfg, train_rng);
    REQUIRE(sse_loss(forward(m, data.images[0]).output, data.labels[0]) < 1e-8);
}

TEST_CASE("training is deterministic under seed") {
    auto run = [](int threads) {
        Rng rng(13);
        CnnModel m = make_cnn(8, 1, {{3, 3}, {4, 3}}, 2, rng);
        Dataset data;
        Rng drng(14);
        for (int i = 0; i < 12; ++i) {
            data.images.push_back(random_tensor(8, 1, drng));
            data.labels.push_back({drng.uniform(-1, 1), drng.uniform(-1, 1)});
        }
        Split split;
        for (int i = 0; i < 8; ++i) split.train.push_back(i);
        for (int i = 8; i < 12; ++i) split.val.push_back(i);
        TrainConfig cfg;
        cfg.max_epochs = 5;
        cfg.batch = 4;
        cfg.threads = threads;
        Rng trng(15);
        train(m, data, split, cfg, trng);
        return params_flatten(m);
    };
    Vec a = run(1);
    Vec b = run(1);
    REQUIRE(a == b);
}

TEST_CASE("spatial bookkeeping across pooled blocks") {
    Rng rng(16);
    CnnModel m = make_cnn(16, 1, {{2, 3}, {3, 3}, {4, 3}}, 1, rng);
    Tensor3 img = random_tensor(16, 1, rng);
    ForwardPass fp = forward(m, img);
    REQUIRE(fp.blocks[0].pooled.dim1 == 8);
    REQUIRE(fp.blocks[1].pooled.dim1 == 4);
    REQUIRE(fp.blocks[2].pooled.dim1 == 2);
}
