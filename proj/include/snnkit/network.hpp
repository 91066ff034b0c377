#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "snnkit/tensor.hpp"

namespace snnkit {

enum class LayerKind : std::uint8_t { dense = 0, conv2d = 1, maxpool2d = 2, dropout = 3 };

const char* layer_kind_name(LayerKind kind);

// One feed-forward layer. Weighted layers (dense, conv2d) optionally carry a
// threshold-ReLU ceiling `mu`; layers without `mu` emit raw pre-activations
// (the readout convention). Weighted layers have no bias term.
struct LayerSpec {
    LayerKind kind = LayerKind::dense;

    // dense: {out, in}; conv2d: {out_ch, in_ch, kh, kw}
    Tensor weight;

    // conv2d geometry (explicit zero padding, exact-fit strides)
    std::size_t stride = 1;
    std::size_t pad = 0;

    // maxpool2d geometry
    std::size_t pool_h = 2;
    std::size_t pool_w = 2;
    std::size_t pool_stride = 2;

    // dropout (inverted; active in train mode only)
    double dropout_rate = 0.0;

    // Threshold-ReLU ceiling, weighted layers only. Must be > 0 when set.
    std::optional<double> mu;

    bool weighted() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
    bool thresholded() const { return weighted() && mu.has_value(); }
};

LayerSpec make_dense(std::size_t out, std::size_t in, std::optional<double> mu = std::nullopt);
LayerSpec make_conv2d(std::size_t out_ch, std::size_t in_ch, std::size_t kh, std::size_t kw,
                      std::size_t stride = 1, std::size_t pad = 0,
                      std::optional<double> mu = std::nullopt);
LayerSpec make_maxpool2d(std::size_t window, std::size_t stride);
LayerSpec make_dropout(double rate);

// Ordered layer stack plus the declared input shape. Layer shapes must
// compose; validate_network checks this together with the per-layer
// invariants (mu > 0, dropout rate in [0,1), weight shapes).
struct NetworkSpec {
    std::vector<std::size_t> input_shape;
    std::vector<LayerSpec> layers;
};

std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& in_shape);
std::vector<std::size_t> network_output_shape(const NetworkSpec& net);
void validate_network(const NetworkSpec& net);

// out[i] = sum_j w[i][j] * x[j]; w is {out, in}, x flattens to length in.
Tensor dense_forward(const Tensor& w, const Tensor& x);

// Cross-correlation of x {in_ch, h, w} with w {out_ch, in_ch, kh, kw};
// zero padding `pad`, stride must tile the padded extent exactly.
Tensor conv2d_forward(const Tensor& w, const Tensor& x, std::size_t stride, std::size_t pad);

// Per-window maximum over x {ch, h, w}; window/stride must tile exactly.
// Applied to binary spike tensors the output stays binary.
Tensor maxpool2d_forward(const Tensor& x, std::size_t win_h, std::size_t win_w,
                         std::size_t stride);

enum class RunMode { infer, train };

struct ForwardResult {
    Tensor output;                 // final layer output (no activation on it)
    std::vector<Tensor> preacts;   // per layer: weighted-layer pre-activation,
                                   // otherwise that layer's output
};

// Applies layers in order with threshold ReLU after weighted layers that
// carry mu. Inference is deterministic; train mode needs an RNG for dropout.
ForwardResult forward(const NetworkSpec& net, const Tensor& x, RunMode mode = RunMode::infer,
                      std::mt19937_64* rng = nullptr);

// Forward pass with everything the backward pass needs cached.
struct ForwardCache {
    std::vector<Tensor> inputs;                     // input to each layer
    std::vector<Tensor> preacts;                    // as in ForwardResult
    std::vector<Tensor> outputs;                    // post-activation output of each layer
    std::vector<std::vector<std::size_t>> pool_argmax;  // maxpool layers: winner index per output
    std::vector<std::vector<double>> dropout_scale;     // dropout layers: per-element mask*1/(1-p)
    Tensor output;
};

ForwardCache forward_cached(const NetworkSpec& net, const Tensor& x, RunMode mode,
                            std::mt19937_64* rng = nullptr);

struct Gradients {
    std::vector<Tensor> dweight;  // per layer; empty tensor for non-weighted layers
    std::vector<double> dmu;      // per layer; 0 for layers without mu
    Tensor dinput;
};

// Reverse pass from d(loss)/d(output). Threshold-ReLU gradients use the
// subgradient convention d/dx = 1 on (0, mu) and d/dmu = 1 where x > mu.
Gradients backward(const NetworkSpec& net, const ForwardCache& cache, const Tensor& doutput);

// Single-layer reverse primitives (accumulate into dw/dx, which must be
// zero-initialized to the right shapes by the caller).
void dense_backward(const Tensor& w, const Tensor& x, const Tensor& gout, Tensor& dw, Tensor& dx);
void conv2d_backward(const Tensor& w, const Tensor& x, const Tensor& gout, std::size_t stride,
                     std::size_t pad, Tensor& dw, Tensor& dx);

}  // namespace snnkit
