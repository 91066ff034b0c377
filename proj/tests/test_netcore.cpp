#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "snnkit/errors.hpp"
#include "snnkit/network.hpp"
#include "snnkit/tensor.hpp"

using namespace snnkit;

TEST_CASE("tensor constructors and shape bookkeeping") {
    CHECK(shape_size({}) == 0);  // empty shape carries no elements
    CHECK(shape_size({3, 4}) == 12);

    Tensor z = Tensor::zeros({2, 3});
    CHECK(z.size() == 6);
    for (double v : z.data) CHECK(v == 0.0);

    Tensor f = Tensor::full({4}, 2.5);
    for (double v : f.data) CHECK(v == 2.5);

    Tensor v = Tensor::vec({1.0, -2.0, 3.0});
    CHECK(v.shape == std::vector<std::size_t>{3});
    CHECK(v.data[1] == -2.0);

    CHECK(z.same_shape(Tensor::zeros({2, 3})));
    CHECK_FALSE(z.same_shape(f));
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
}

TEST_CASE("finiteness guards") {
    Tensor ok = Tensor::vec({0.0, 1.0, -5.0});
    CHECK(all_finite(ok));
    CHECK_NOTHROW(require_finite(ok, "test"));

    Tensor bad = Tensor::vec({1.0, std::nan(""), 2.0});
    CHECK_FALSE(all_finite(bad));
    CHECK_THROWS_AS(require_finite(bad, "test"), NumericError);

    Tensor inf = Tensor::vec({1.0, INFINITY});
    CHECK_THROWS_AS(require_finite(inf, "test"), NumericError);
}

TEST_CASE("bitwise_equal distinguishes -0.0 payloads but not values") {
    Tensor a = Tensor::vec({1.0, 2.0});
    Tensor b = Tensor::vec({1.0, 2.0});
    CHECK(bitwise_equal(a, b));
    b.data[1] = std::nextafter(2.0, 3.0);
    CHECK_FALSE(bitwise_equal(a, b));
}

TEST_CASE("dense_forward matches a hand-multiplied matrix") {
    // w = [[1,2,3],[4,5,6]], x = [1,-1,2] -> [1-2+6, 4-5+12] = [5, 11]
    Tensor w({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor x = Tensor::vec({1, -1, 2});
    Tensor y = dense_forward(w, x);
    CHECK(y.shape == std::vector<std::size_t>{2});
    CHECK(y.data[0] == doctest::Approx(5.0));
    CHECK(y.data[1] == doctest::Approx(11.0));

    CHECK_THROWS_AS(dense_forward(w, Tensor::vec({1, 2})), DimensionError);
}

TEST_CASE("conv2d_forward matches a hand-traced cross-correlation") {
    // 1 channel 3x3 input, 1x1x2x2 kernel, stride 1, pad 0 -> 2x2.
    Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor w({1, 1, 2, 2}, {1, 0, 0, -1});
    Tensor y = conv2d_forward(w, x, 1, 0);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 2, 2});
    // y[r][c] = x[r][c] - x[r+1][c+1]
    CHECK(y.data[0] == doctest::Approx(1 - 5));
    CHECK(y.data[1] == doctest::Approx(2 - 6));
    CHECK(y.data[2] == doctest::Approx(4 - 8));
    CHECK(y.data[3] == doctest::Approx(5 - 9));
}

TEST_CASE("conv2d_forward zero padding contributes nothing") {
    // 2x2 input padded to 4x4, 3x3 all-ones kernel -> 2x2 output; each
    // window sums the (same) four real values, zeros add nothing.
    Tensor x({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = conv2d_forward(w, x, 1, 1);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 2, 2});
    for (double v : y.data) CHECK(v == doctest::Approx(10.0));
}

TEST_CASE("conv2d_forward enforces exact stride tiling") {
    Tensor x = Tensor::zeros({1, 5, 5});
    Tensor w = Tensor::zeros({1, 1, 2, 2});
    CHECK_THROWS_AS(conv2d_forward(w, x, 2, 0), DimensionError);  // (5-2)/2 not integral
    CHECK_NOTHROW(conv2d_forward(w, x, 3, 0));
    CHECK_THROWS_AS(conv2d_forward(w, Tensor::zeros({2, 5, 5}), 3, 0), DimensionError);
}

TEST_CASE("maxpool2d_forward picks per-window maxima and keeps binary binary") {
    Tensor x({1, 4, 4}, {0, 1, 0, 0,   //
                         1, 0, 0, 1,   //
                         0, 0, 1, 0,   //
                         0, 1, 0, 0});
    Tensor y = maxpool2d_forward(x, 2, 2, 2);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 2, 2});
    for (double v : y.data) CHECK(v == 1.0);  // every 2x2 window holds a spike

    Tensor vals({1, 2, 2}, {3.0, -1.0, 0.5, 2.0});
    Tensor m = maxpool2d_forward(vals, 2, 2, 2);
    CHECK(m.data[0] == 3.0);

    CHECK_THROWS_AS(maxpool2d_forward(Tensor::zeros({1, 5, 5}), 2, 2, 2), DimensionError);
}

TEST_CASE("shape inference composes through a conv stack") {
    NetworkSpec net;
    net.input_shape = {1, 8, 8};
    net.layers.push_back(make_conv2d(4, 1, 3, 3, 1, 1, 1.0));  // -> 4x8x8
    net.layers.push_back(make_maxpool2d(2, 2));                // -> 4x4x4
    net.layers.push_back(make_dense(10, 64));                  // readout
    CHECK(layer_output_shape(net.layers[0], {1, 8, 8}) == std::vector<std::size_t>{4, 8, 8});
    CHECK(network_output_shape(net) == std::vector<std::size_t>{10});
    CHECK_NOTHROW(validate_network(net));
}

TEST_CASE("validate_network rejects broken specs") {
    NetworkSpec net;
    net.input_shape = {4};
    net.layers.push_back(make_dense(3, 4, 1.0));
    net.layers.push_back(make_dense(2, 3));
    CHECK_NOTHROW(validate_network(net));

    NetworkSpec bad_mu = net;
    bad_mu.layers[0].mu = 0.0;
    CHECK_THROWS_AS(validate_network(bad_mu), ArgumentError);

    NetworkSpec bad_shape = net;
    bad_shape.layers[1] = make_dense(2, 5);  // expects 5 inputs, gets 3
    CHECK_THROWS_AS(validate_network(bad_shape), DimensionError);

    NetworkSpec bad_drop = net;
    bad_drop.layers.insert(bad_drop.layers.begin() + 1, make_dropout(0.5));
    bad_drop.layers[1].dropout_rate = 1.0;
    CHECK_THROWS_AS(validate_network(bad_drop), ArgumentError);

    NetworkSpec empty;
    CHECK_THROWS_AS(validate_network(empty), DimensionError);
}

TEST_CASE("forward applies the threshold ceiling on mu layers only") {
    // Identity-ish single weights expose the activation directly.
    NetworkSpec net;
    net.input_shape = {2};
    net.layers.push_back(make_dense(2, 2, 1.0));  // clip to [0, 1]
    net.layers.push_back(make_dense(2, 2));       // raw readout
    net.layers[0].weight = Tensor({2, 2}, {1, 0, 0, 1});
    net.layers[1].weight = Tensor({2, 2}, {1, 0, 0, 1});

    ForwardResult r = forward(net, Tensor::vec({2.5, -0.7}));
    CHECK(r.output.data[0] == doctest::Approx(1.0));   // clipped at mu
    CHECK(r.output.data[1] == doctest::Approx(0.0));   // ReLU floor
    CHECK(r.preacts[0].data[0] == doctest::Approx(2.5));  // preacts stay raw
    CHECK(r.preacts[0].data[1] == doctest::Approx(-0.7));

    CHECK_THROWS_AS(forward(net, Tensor::vec({1, 2, 3})), DimensionError);
    CHECK_THROWS_AS(forward(net, Tensor::vec({1, 2}), RunMode::train, nullptr), ArgumentError);
}

TEST_CASE("dropout scales kept units by 1/(1-p) in train mode, no-ops in inference") {
    NetworkSpec net;
    net.input_shape = {8};
    net.layers.push_back(make_dropout(0.5));
    net.layers.push_back(make_dense(1, 8));
    net.layers[1].weight = Tensor::full({1, 8}, 1.0);

    Tensor x = Tensor::full({8}, 1.0);
    ForwardResult infer = forward(net, x);
    CHECK(infer.output.data[0] == doctest::Approx(8.0));

    std::mt19937_64 rng(7);
    ForwardResult train = forward(net, x, RunMode::train, &rng);
    // Sum of kept units each scaled x2: always an even integer in [0, 16].
    double s = train.output.data[0];
    CHECK(s >= 0.0);
    CHECK(s <= 16.0);
    CHECK(std::fmod(s, 2.0) == doctest::Approx(0.0));
}

namespace {

// Central finite difference of a scalar loss over one parameter slot.
template <typename F>
double fd(F&& f, double& slot, double eps = 1e-6) {
    const double keep = slot;
    slot = keep + eps;
    const double up = f();
    slot = keep - eps;
    const double dn = f();
    slot = keep;
    return (up - dn) / (2 * eps);
}

NetworkSpec small_mixed_net(std::uint64_t seed) {
    NetworkSpec net;
    net.input_shape = {1, 4, 4};
    net.layers.push_back(make_conv2d(2, 1, 3, 3, 1, 1, 0.9));  // 2x4x4
    net.layers.push_back(make_maxpool2d(2, 2));                // 2x2x2
    net.layers.push_back(make_dense(3, 8, 0.8));
    net.layers.push_back(make_dense(2, 3));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    for (auto& l : net.layers) {
        for (double& w : l.weight.data) w = u(rng);
    }
    return net;
}

}  // namespace

TEST_CASE("backward matches central finite differences away from kinks") {
    NetworkSpec net = small_mixed_net(11);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor x = Tensor::zeros({1, 4, 4});
    for (double& v : x.data) v = u(rng);

    // Scalar probe loss: weighted sum of outputs keeps everything smooth.
    Tensor probe = Tensor::vec({0.7, -1.3});
    auto loss = [&]() {
        ForwardResult r = forward(net, x);
        return r.output.data[0] * probe.data[0] + r.output.data[1] * probe.data[1];
    };

    ForwardCache cache = forward_cached(net, x, RunMode::infer);
    Gradients g = backward(net, cache, probe);

    const double kink_margin = 1e-3;
    auto near_kink = [&](std::size_t layer) {
        if (!net.layers[layer].thresholded()) return false;
        const double mu = *net.layers[layer].mu;
        for (double p : cache.preacts[layer].data) {
            if (std::abs(p) < kink_margin || std::abs(p - mu) < kink_margin) return true;
        }
        return false;
    };
    REQUIRE_FALSE(near_kink(0));
    REQUIRE_FALSE(near_kink(2));

    std::size_t checked = 0;
    for (std::size_t li : {std::size_t{0}, std::size_t{2}, std::size_t{3}}) {
        auto& w = net.layers[li].weight;
        for (std::size_t j = 0; j < w.size(); j += std::max<std::size_t>(1, w.size() / 6)) {
            const double analytic = g.dweight[li].data[j];
            const double numeric = fd(loss, w.data[j]);
            CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5).scale(1.0));
            ++checked;
        }
    }
    CHECK(checked >= 10);

    // d(loss)/d(input) the same way.
    for (std::size_t j = 0; j < x.size(); j += 3) {
        const double numeric = fd(loss, x.data[j]);
        CHECK(g.dinput.data[j] == doctest::Approx(numeric).epsilon(1e-5).scale(1.0));
    }
}

TEST_CASE("mu gradient counts the saturated units") {
    NetworkSpec net;
    net.input_shape = {3};
    net.layers.push_back(make_dense(3, 3, 1.0));
    net.layers.push_back(make_dense(1, 3));
    net.layers[0].weight = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    net.layers[1].weight = Tensor({1, 3}, {1.0, 1.0, 1.0});

    // preacts 2.0 and 1.5 saturate, 0.5 does not; d(out)/d(mu) = 2.
    Tensor x = Tensor::vec({2.0, 1.5, 0.5});
    ForwardCache cache = forward_cached(net, x, RunMode::infer);
    Gradients g = backward(net, cache, Tensor::vec({1.0}));
    CHECK(g.dmu[0] == doctest::Approx(2.0));
    CHECK(g.dmu[1] == 0.0);  // readout carries no mu

    double mu_fd = fd([&]() { return forward(net, x).output.data[0]; }, *net.layers[0].mu);
    CHECK(g.dmu[0] == doctest::Approx(mu_fd).epsilon(1e-6));
}

TEST_CASE("dense_backward and conv2d_backward accumulate exact primitives") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    Tensor w({3, 4}, std::vector<double>(12));
    Tensor x({4}, std::vector<double>(4));
    Tensor gout({3}, std::vector<double>(3));
    for (double& v : w.data) v = u(rng);
    for (double& v : x.data) v = u(rng);
    for (double& v : gout.data) v = u(rng);

    Tensor dw = Tensor::zeros({3, 4});
    Tensor dx = Tensor::zeros({4});
    dense_backward(w, x, gout, dw, dx);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(dw.data[i * 4 + j] == doctest::Approx(gout.data[i] * x.data[j]));
        }
    }
    for (std::size_t j = 0; j < 4; ++j) {
        double want = 0.0;
        for (std::size_t i = 0; i < 3; ++i) want += w.data[i * 4 + j] * gout.data[i];
        CHECK(dx.data[j] == doctest::Approx(want));
    }

    // Conv primitive against finite differences of <gout, conv(w, x)>.
    Tensor cw({2, 1, 2, 2}, std::vector<double>(8));
    Tensor cx({1, 3, 3}, std::vector<double>(9));
    Tensor cg({2, 2, 2}, std::vector<double>(8));
    for (double& v : cw.data) v = u(rng);
    for (double& v : cx.data) v = u(rng);
    for (double& v : cg.data) v = u(rng);
    auto inner = [&]() {
        Tensor y = conv2d_forward(cw, cx, 1, 0);
        double s = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) s += y.data[k] * cg.data[k];
        return s;
    };
    Tensor cdw = Tensor::zeros({2, 1, 2, 2});
    Tensor cdx = Tensor::zeros({1, 3, 3});
    conv2d_backward(cw, cx, cg, 1, 0, cdw, cdx);
    for (std::size_t j = 0; j < cw.size(); ++j) {
        CHECK(cdw.data[j] == doctest::Approx(fd(inner, cw.data[j])).epsilon(1e-6));
    }
    for (std::size_t j = 0; j < cx.size(); ++j) {
        CHECK(cdx.data[j] == doctest::Approx(fd(inner, cx.data[j])).epsilon(1e-6));
    }
}
