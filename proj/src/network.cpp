#include "snnkit/network.hpp"

#include <algorithm>
#include <cstdint>
#include <string>

#include "snnkit/errors.hpp"

namespace snnkit {

namespace {

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

double clip_threshold(double x, double mu) {
    if (x < 0.0) return 0.0;
    if (x > mu) return mu;
    return x;
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::dropout: return "dropout";
    }
    return "?";
}

LayerSpec make_dense(std::size_t out, std::size_t in, std::optional<double> mu) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.weight = Tensor::zeros({out, in});
    l.mu = mu;
    return l;
}

LayerSpec make_conv2d(std::size_t out_ch, std::size_t in_ch, std::size_t kh, std::size_t kw,
                      std::size_t stride, std::size_t pad, std::optional<double> mu) {
    LayerSpec l;
    l.kind = LayerKind::conv2d;
    l.weight = Tensor::zeros({out_ch, in_ch, kh, kw});
    l.stride = stride;
    l.pad = pad;
    l.mu = mu;
    return l;
}

LayerSpec make_maxpool2d(std::size_t window, std::size_t stride) {
    LayerSpec l;
    l.kind = LayerKind::maxpool2d;
    l.pool_h = window;
    l.pool_w = window;
    l.pool_stride = stride;
    return l;
}

LayerSpec make_dropout(double rate) {
    LayerSpec l;
    l.kind = LayerKind::dropout;
    l.dropout_rate = rate;
    return l;
}

std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& in_shape) {
    switch (layer.kind) {
        case LayerKind::dense: {
            if (layer.weight.shape.size() != 2) {
                throw DimensionError("dense: weight must be 2-D");
            }
            std::size_t in = layer.weight.shape[1];
            if (shape_size(in_shape) != in) {
                throw DimensionError("dense: input " + shape_str(in_shape) +
                                     " does not flatten to " + std::to_string(in));
            }
            return {layer.weight.shape[0]};
        }
        case LayerKind::conv2d: {
            if (layer.weight.shape.size() != 4) {
                throw DimensionError("conv2d: weight must be 4-D");
            }
            if (in_shape.size() != 3 || in_shape[0] != layer.weight.shape[1]) {
                throw DimensionError("conv2d: input " + shape_str(in_shape) +
                                     " does not match weight " + shape_str(layer.weight.shape));
            }
            std::size_t kh = layer.weight.shape[2], kw = layer.weight.shape[3];
            std::size_t h = in_shape[1] + 2 * layer.pad, w = in_shape[2] + 2 * layer.pad;
            if (h < kh || w < kw || layer.stride == 0) {
                throw DimensionError("conv2d: kernel does not fit padded input");
            }
            if ((h - kh) % layer.stride != 0 || (w - kw) % layer.stride != 0) {
                throw DimensionError("conv2d: stride does not tile padded input exactly");
            }
            return {layer.weight.shape[0], (h - kh) / layer.stride + 1, (w - kw) / layer.stride + 1};
        }
        case LayerKind::maxpool2d: {
            if (in_shape.size() != 3) {
                throw DimensionError("maxpool2d: input must be 3-D, got " + shape_str(in_shape));
            }
            std::size_t h = in_shape[1], w = in_shape[2];
            if (layer.pool_stride == 0 || h < layer.pool_h || w < layer.pool_w) {
                throw DimensionError("maxpool2d: window does not fit input");
            }
            if ((h - layer.pool_h) % layer.pool_stride != 0 ||
                (w - layer.pool_w) % layer.pool_stride != 0) {
                throw DimensionError("maxpool2d: window/stride do not tile input exactly");
            }
            return {in_shape[0], (h - layer.pool_h) / layer.pool_stride + 1,
                    (w - layer.pool_w) / layer.pool_stride + 1};
        }
        case LayerKind::dropout: return in_shape;
    }
    throw ArgumentError("unknown layer kind");
}

std::vector<std::size_t> network_output_shape(const NetworkSpec& net) {
    std::vector<std::size_t> shape = net.input_shape;
    for (const LayerSpec& layer : net.layers) shape = layer_output_shape(layer, shape);
    return shape;
}

void validate_network(const NetworkSpec& net) {
    if (net.input_shape.empty() || shape_size(net.input_shape) == 0) {
        throw DimensionError("network: empty input shape");
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        std::string where = "layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) + ")";
        if (l.mu) {
            if (!l.weighted()) throw ArgumentError(where + ": mu on a non-weighted layer");
            if (!(*l.mu > 0.0)) throw ArgumentError(where + ": mu must be positive");
        }
        if (l.kind == LayerKind::dropout && (l.dropout_rate < 0.0 || l.dropout_rate >= 1.0)) {
            throw ArgumentError(where + ": dropout rate must lie in [0,1)");
        }
        if (l.weighted()) require_finite(l.weight, "validate_network");
    }
    network_output_shape(net);  // throws on any shape mismatch
}

Tensor dense_forward(const Tensor& w, const Tensor& x) {
    if (w.shape.size() != 2) throw DimensionError("dense_forward: weight must be 2-D");
    std::size_t out = w.shape[0], in = w.shape[1];
    if (x.size() != in) {
        throw DimensionError("dense_forward: input length " + std::to_string(x.size()) +
                             " != " + std::to_string(in));
    }
    Tensor y = Tensor::zeros({out});
    for (std::size_t i = 0; i < out; ++i) {
        double acc = 0.0;
        const double* row = &w.data[i * in];
        for (std::size_t j = 0; j < in; ++j) acc += row[j] * x.data[j];
        y.data[i] = acc;
    }
    require_finite(y, "dense_forward");
    return y;
}

Tensor conv2d_forward(const Tensor& w, const Tensor& x, std::size_t stride, std::size_t pad) {
    if (w.shape.size() != 4 || x.shape.size() != 3) {
        throw DimensionError("conv2d_forward: weight must be 4-D and input 3-D");
    }
    LayerSpec probe;
    probe.kind = LayerKind::conv2d;
    probe.weight = w;
    probe.stride = stride;
    probe.pad = pad;
    auto out_shape = layer_output_shape(probe, x.shape);

    const std::size_t oc = w.shape[0], ic = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    const std::size_t h = x.shape[1], ww = x.shape[2];
    const std::size_t oh = out_shape[1], ow = out_shape[2];
    const auto p = static_cast<std::int64_t>(pad);

    Tensor y = Tensor::zeros(out_shape);
    for (std::size_t o = 0; o < oc; ++o) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (std::size_t c = 0; c < ic; ++c) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        std::int64_t iy = static_cast<std::int64_t>(oy * stride + ky) - p;
                        if (iy < 0 || iy >= static_cast<std::int64_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            std::int64_t ix = static_cast<std::int64_t>(ox * stride + kx) - p;
                            if (ix < 0 || ix >= static_cast<std::int64_t>(ww)) continue;
                            acc += w.data[((o * ic + c) * kh + ky) * kw + kx] *
                                   x.data[(c * h + static_cast<std::size_t>(iy)) * ww +
                                          static_cast<std::size_t>(ix)];
                        }
                    }
                }
                y.data[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    require_finite(y, "conv2d_forward");
    return y;
}

Tensor maxpool2d_forward(const Tensor& x, std::size_t win_h, std::size_t win_w,
                         std::size_t stride) {
    LayerSpec probe;
    probe.kind = LayerKind::maxpool2d;
    probe.pool_h = win_h;
    probe.pool_w = win_w;
    probe.pool_stride = stride;
    auto out_shape = layer_output_shape(probe, x.shape);

    const std::size_t ch = x.shape[0], h = x.shape[1], w = x.shape[2];
    const std::size_t oh = out_shape[1], ow = out_shape[2];
    Tensor y = Tensor::zeros(out_shape);
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = x.data[(c * h + oy * stride) * w + ox * stride];
                for (std::size_t ky = 0; ky < win_h; ++ky) {
                    for (std::size_t kx = 0; kx < win_w; ++kx) {
                        best = std::max(best,
                                        x.data[(c * h + oy * stride + ky) * w + ox * stride + kx]);
                    }
                }
                y.data[(c * oh + oy) * ow + ox] = best;
            }
        }
    }
    require_finite(y, "maxpool2d_forward");
    return y;
}

namespace {

// Shared by forward() and forward_cached(). Pool winner indices and dropout
// scales are recorded only when caches for them are supplied.
void run_layers(const NetworkSpec& net, const Tensor& x, RunMode mode, std::mt19937_64* rng,
                ForwardCache& cache) {
    if (x.shape != net.input_shape) {
        throw DimensionError("forward: input shape " + shape_str(x.shape) +
                             " != network input " + shape_str(net.input_shape));
    }
    if (mode == RunMode::train && rng == nullptr) {
        throw ArgumentError("forward: train mode requires an RNG");
    }
    const std::size_t n = net.layers.size();
    cache.inputs.resize(n);
    cache.preacts.resize(n);
    cache.outputs.resize(n);
    cache.pool_argmax.assign(n, {});
    cache.dropout_scale.assign(n, {});

    Tensor cur = x;
    for (std::size_t i = 0; i < n; ++i) {
        const LayerSpec& l = net.layers[i];
        cache.inputs[i] = cur;
        switch (l.kind) {
            case LayerKind::dense:
            case LayerKind::conv2d: {
                Tensor pre = l.kind == LayerKind::dense
                                 ? dense_forward(l.weight, cur)
                                 : conv2d_forward(l.weight, cur, l.stride, l.pad);
                cache.preacts[i] = pre;
                if (l.mu) {
                    Tensor act = pre;
                    for (double& v : act.data) v = clip_threshold(v, *l.mu);
                    cur = std::move(act);
                } else {
                    cur = pre;
                }
                break;
            }
            case LayerKind::maxpool2d: {
                auto out_shape = layer_output_shape(l, cur.shape);
                const std::size_t ch = cur.shape[0], h = cur.shape[1], w = cur.shape[2];
                const std::size_t oh = out_shape[1], ow = out_shape[2];
                Tensor y = Tensor::zeros(out_shape);
                auto& winners = cache.pool_argmax[i];
                winners.resize(y.size());
                for (std::size_t c = 0; c < ch; ++c) {
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            std::size_t best_idx =
                                (c * h + oy * l.pool_stride) * w + ox * l.pool_stride;
                            double best = cur.data[best_idx];
                            for (std::size_t ky = 0; ky < l.pool_h; ++ky) {
                                for (std::size_t kx = 0; kx < l.pool_w; ++kx) {
                                    std::size_t idx = (c * h + oy * l.pool_stride + ky) * w +
                                                      ox * l.pool_stride + kx;
                                    if (cur.data[idx] > best) {
                                        best = cur.data[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            std::size_t out_idx = (c * oh + oy) * ow + ox;
                            y.data[out_idx] = best;
                            winners[out_idx] = best_idx;
                        }
                    }
                }
                cache.preacts[i] = y;
                cur = std::move(y);
                break;
            }
            case LayerKind::dropout: {
                if (mode == RunMode::train && l.dropout_rate > 0.0) {
                    std::bernoulli_distribution keep(1.0 - l.dropout_rate);
                    auto& scale = cache.dropout_scale[i];
                    scale.resize(cur.size());
                    Tensor y = cur;
                    const double boost = 1.0 / (1.0 - l.dropout_rate);
                    for (std::size_t k = 0; k < cur.size(); ++k) {
                        scale[k] = keep(*rng) ? boost : 0.0;
                        y.data[k] = cur.data[k] * scale[k];
                    }
                    cache.preacts[i] = y;
                    cur = std::move(y);
                } else {
                    cache.preacts[i] = cur;  // inference applies no mask
                }
                break;
            }
        }
        cache.outputs[i] = cur;
    }
    cache.output = cur;
    require_finite(cache.output, "forward");
}

}  // namespace

ForwardResult forward(const NetworkSpec& net, const Tensor& x, RunMode mode,
                      std::mt19937_64* rng) {
    ForwardCache cache;
    run_layers(net, x, mode, rng, cache);
    return ForwardResult{std::move(cache.output), std::move(cache.preacts)};
}

ForwardCache forward_cached(const NetworkSpec& net, const Tensor& x, RunMode mode,
                            std::mt19937_64* rng) {
    ForwardCache cache;
    run_layers(net, x, mode, rng, cache);
    return cache;
}

void dense_backward(const Tensor& w, const Tensor& x, const Tensor& gout, Tensor& dw,
                    Tensor& dx) {
    const std::size_t out = w.shape[0], in = w.shape[1];
    for (std::size_t i = 0; i < out; ++i) {
        const double go = gout.data[i];
        if (go == 0.0) continue;
        for (std::size_t j = 0; j < in; ++j) {
            dw.data[i * in + j] += go * x.data[j];
            dx.data[j] += go * w.data[i * in + j];
        }
    }
}

void conv2d_backward(const Tensor& w, const Tensor& x, const Tensor& gout, std::size_t stride,
                     std::size_t pad, Tensor& dw, Tensor& dx) {
    const std::size_t oc = w.shape[0], ic = w.shape[1];
    const std::size_t kh = w.shape[2], kw = w.shape[3];
    const std::size_t h = x.shape[1], ww = x.shape[2];
    const std::size_t oh = gout.shape[1], ow = gout.shape[2];
    const auto p = static_cast<std::int64_t>(pad);
    for (std::size_t o = 0; o < oc; ++o) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double go = gout.data[(o * oh + oy) * ow + ox];
                if (go == 0.0) continue;
                for (std::size_t c = 0; c < ic; ++c) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        std::int64_t iy = static_cast<std::int64_t>(oy * stride + ky) - p;
                        if (iy < 0 || iy >= static_cast<std::int64_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            std::int64_t ix = static_cast<std::int64_t>(ox * stride + kx) - p;
                            if (ix < 0 || ix >= static_cast<std::int64_t>(ww)) continue;
                            std::size_t wi = ((o * ic + c) * kh + ky) * kw + kx;
                            std::size_t xi = (c * h + static_cast<std::size_t>(iy)) * ww +
                                             static_cast<std::size_t>(ix);
                            dw.data[wi] += go * x.data[xi];
                            dx.data[xi] += go * w.data[wi];
                        }
                    }
                }
            }
        }
    }
}

Gradients backward(const NetworkSpec& net, const ForwardCache& cache, const Tensor& doutput) {
    const std::size_t n = net.layers.size();
    Gradients g;
    g.dweight.resize(n);
    g.dmu.assign(n, 0.0);

    Tensor grad = doutput;
    for (std::size_t ii = n; ii-- > 0;) {
        const LayerSpec& l = net.layers[ii];
        switch (l.kind) {
            case LayerKind::dense:
            case LayerKind::conv2d: {
                // Through the threshold ReLU first: pass on (0, mu), route
                // saturated upstream grad into dmu.
                if (l.mu) {
                    const Tensor& pre = cache.preacts[ii];
                    for (std::size_t k = 0; k < grad.size(); ++k) {
                        double z = pre.data[k];
                        if (z > *l.mu) {
                            g.dmu[ii] += grad.data[k];
                            grad.data[k] = 0.0;
                        } else if (z <= 0.0 || z >= *l.mu) {
                            grad.data[k] = 0.0;
                        }
                    }
                }
                const Tensor& x = cache.inputs[ii];
                Tensor dw = Tensor::zeros(l.weight.shape);
                Tensor dx = Tensor::zeros(x.shape);
                if (l.kind == LayerKind::dense) {
                    dense_backward(l.weight, x, grad, dw, dx);
                } else {
                    conv2d_backward(l.weight, x, grad, l.stride, l.pad, dw, dx);
                }
                g.dweight[ii] = std::move(dw);
                grad = std::move(dx);
                break;
            }
            case LayerKind::maxpool2d: {
                Tensor dx = Tensor::zeros(cache.inputs[ii].shape);
                const auto& winners = cache.pool_argmax[ii];
                for (std::size_t k = 0; k < grad.size(); ++k) {
                    dx.data[winners[k]] += grad.data[k];
                }
                grad = std::move(dx);
                break;
            }
            case LayerKind::dropout: {
                const auto& scale = cache.dropout_scale[ii];
                if (!scale.empty()) {
                    for (std::size_t k = 0; k < grad.size(); ++k) grad.data[k] *= scale[k];
                }
                break;
            }
        }
    }
    g.dinput = std::move(grad);
    return g;
}

}  // namespace snnkit
