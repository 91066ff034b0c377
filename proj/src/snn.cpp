#include "snnkit/snn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "snnkit/errors.hpp"

namespace snnkit::snn {

const char* to_string(ConversionMode mode) {
    switch (mode) {
        case ConversionMode::naive: return "naive";
        case ConversionMode::max_act_bias: return "max_act_bias";
        case ConversionMode::scaled: return "scaled";
    }
    return "?";
}

ConversionMode conversion_mode_from_string(const std::string& name) {
    if (name == "naive") return ConversionMode::naive;
    if (name == "max_act_bias") return ConversionMode::max_act_bias;
    if (name == "scaled") return ConversionMode::scaled;
    throw ConfigError("unknown conversion mode '" + name +
                      "' (expected naive, max_act_bias, or scaled)");
}

std::size_t SpikingNetwork::output_layer() const {
    for (std::size_t i = layers.size(); i-- > 0;) {
        if (layers[i].spec.weighted()) return i;
    }
    throw ArgumentError("spiking network has no weighted layer");
}

std::size_t SpikingNetwork::input_layer() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].spec.weighted()) return i;
    }
    throw ArgumentError("spiking network has no weighted layer");
}

SpikingNetwork from_network(const NetworkSpec& net) {
    validate_network(net);
    SpikingNetwork snn;
    snn.input_shape = net.input_shape;
    snn.layers.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
        SpikingLayer sl;
        sl.spec = layer;
        snn.layers.push_back(std::move(sl));
    }
    return snn;
}

NetworkSpec to_network(const SpikingNetwork& snn) {
    NetworkSpec net;
    net.input_shape = snn.input_shape;
    net.layers.reserve(snn.layers.size());
    for (const auto& layer : snn.layers) net.layers.push_back(layer.spec);
    return net;
}

void validate_spiking_network(const SpikingNetwork& snn) {
    validate_network(to_network(snn));
    for (std::size_t i = 0; i < snn.layers.size(); ++i) {
        const auto& l = snn.layers[i];
        if (!(l.vth > 0.0) || !(l.beta > 0.0) || !(l.lam > 0.0 && l.lam <= 1.0) ||
            l.delta < 0.0) {
            throw ArgumentError("spiking layer " + std::to_string(i) +
                                ": need vth > 0, beta > 0, lam in (0,1], delta >= 0");
        }
    }
    snn.output_layer();  // at least one weighted layer
}

StepResult scaled_if_step(const Tensor& u, const Tensor& drive, double vth, double beta,
                          double lam) {
    if (!(vth > 0.0)) throw ArgumentError("if_step: vth must be positive");
    if (!(beta > 0.0)) throw ArgumentError("if_step: beta must be positive");
    if (!(lam > 0.0 && lam <= 1.0)) throw ArgumentError("if_step: lam must lie in (0,1]");
    if (!u.same_shape(drive)) throw DimensionError("if_step: state/drive shapes differ");
    StepResult r{Tensor::zeros(u.shape), Tensor::zeros(u.shape)};
    const double value = beta * vth;
    for (std::size_t k = 0; k < u.size(); ++k) {
        double ut = lam * u.data[k] + drive.data[k];
        if (ut > vth) {  // strict crossing
            r.spikes.data[k] = value;
            r.u.data[k] = ut - vth;  // soft reset by the firing threshold
        } else {
            r.u.data[k] = ut;
        }
    }
    return r;
}

StepResult if_step(const Tensor& u, const Tensor& drive, double vth, double lam) {
    return scaled_if_step(u, drive, vth, 1.0, lam);
}

double closed_form_activation(double z, double vth, std::size_t T, double delta, double beta) {
    if (!(vth > 0.0)) throw ArgumentError("closed_form_activation: vth must be positive");
    if (T == 0) throw ArgumentError("closed_form_activation: T must be >= 1");
    const double x = static_cast<double>(T) * (z + delta) / vth;
    double n = std::floor(x);
    if (n == x) n -= 1.0;  // strict crossing never fires exactly at a boundary
    n = std::clamp(n, 0.0, static_cast<double>(T));
    return (n * (beta * vth)) / static_cast<double>(T);
}

double surrogate_grad(double s, double alpha_mu) {
    return (s >= 0.0 && s <= 2.0 * alpha_mu) ? 1.0 : 0.0;
}

SnnForwardResult snn_forward(const SpikingNetwork& snn, const Tensor& x, std::size_t T) {
    if (T == 0) throw ArgumentError("snn_forward: T must be >= 1");
    if (x.shape != snn.input_shape) throw DimensionError("snn_forward: input shape mismatch");
    validate_spiking_network(snn);

    const std::size_t n = snn.layers.size();
    const std::size_t out_l = snn.output_layer();

    // Per-layer output shapes along the stack.
    std::vector<std::vector<std::size_t>> shapes(n);
    {
        std::vector<std::size_t> cur = snn.input_shape;
        for (std::size_t i = 0; i < n; ++i) {
            cur = layer_output_shape(snn.layers[i].spec, cur);
            shapes[i] = cur;
        }
    }

    // Discrete layers carry values {0, scale}; averaging by event count keeps
    // the outputs exact integer multiples of scale/T.
    std::vector<bool> discrete(n, false);
    std::vector<double> scale(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = snn.layers[i];
        if (l.spec.weighted()) {
            if (i != out_l) {
                discrete[i] = true;
                scale[i] = l.beta * l.vth;
            }
        } else if (i > 0 && discrete[i - 1]) {
            discrete[i] = true;
            scale[i] = scale[i - 1];
        }
    }

    std::vector<Tensor> U(n);
    std::vector<std::vector<double>> counts(n);  // discrete layers: events per neuron
    std::vector<Tensor> sums(n);                 // analog layers: running output sum
    for (std::size_t i = 0; i < n; ++i) {
        if (snn.layers[i].spec.weighted()) {
            // Bias-shift baseline: delta enters as an initial charge worth T
            // constant pre-activation shifts.
            U[i] = Tensor::full(shapes[i], static_cast<double>(T) * snn.layers[i].delta);
        }
        if (discrete[i]) counts[i].assign(shape_size(shapes[i]), 0.0);
        else sums[i] = Tensor::zeros(shapes[i]);
    }

    SnnForwardResult res;
    res.trace.T = T;
    res.trace.scale = scale;
    res.trace.spikes.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) res.trace.spikes[i].reserve(T);

    for (std::size_t t = 1; t <= T; ++t) {
        Tensor cur = x;  // the analog input is re-presented at every step
        for (std::size_t i = 0; i < n; ++i) {
            const auto& l = snn.layers[i];
            switch (l.spec.kind) {
                case LayerKind::dense:
                case LayerKind::conv2d: {
                    Tensor drive = l.spec.kind == LayerKind::dense
                                       ? dense_forward(l.spec.weight, cur)
                                       : conv2d_forward(l.spec.weight, cur, l.spec.stride,
                                                        l.spec.pad);
                    if (i == out_l) {
                        for (std::size_t k = 0; k < drive.size(); ++k) {
                            U[i].data[k] = l.lam * U[i].data[k] + drive.data[k];
                        }
                        cur = Tensor::zeros(shapes[i]);  // the readout emits no spikes
                    } else {
                        StepResult step = scaled_if_step(U[i], drive, l.vth, l.beta, l.lam);
                        U[i] = std::move(step.u);
                        cur = std::move(step.spikes);
                        for (std::size_t k = 0; k < cur.size(); ++k) {
                            if (cur.data[k] != 0.0) counts[i][k] += 1.0;
                        }
                    }
                    break;
                }
                case LayerKind::maxpool2d:
                    cur = maxpool2d_forward(cur, l.spec.pool_h, l.spec.pool_w,
                                            l.spec.pool_stride);
                    if (discrete[i]) {
                        for (std::size_t k = 0; k < cur.size(); ++k) {
                            if (cur.data[k] != 0.0) counts[i][k] += 1.0;
                        }
                    }
                    break;
                case LayerKind::dropout:
                    break;  // inference applies no mask
            }
            if (!discrete[i] && i != out_l) {
                for (std::size_t k = 0; k < cur.size(); ++k) sums[i].data[k] += cur.data[k];
            }
            res.trace.spikes[i].push_back(cur);
        }
    }

    const double beta_out = snn.layers[out_l].beta;
    res.scores = U[out_l];
    for (double& v : res.scores.data) v *= beta_out;
    require_finite(res.scores, "snn_forward");

    res.avg_out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor avg = Tensor::zeros(shapes[i]);
        if (i == out_l) {
            for (std::size_t k = 0; k < avg.size(); ++k) {
                avg.data[k] = res.scores.data[k] / static_cast<double>(T);
            }
        } else if (discrete[i]) {
            for (std::size_t k = 0; k < avg.size(); ++k) {
                avg.data[k] = (counts[i][k] * scale[i]) / static_cast<double>(T);
            }
        } else {
            for (std::size_t k = 0; k < avg.size(); ++k) {
                avg.data[k] = sums[i].data[k] / static_cast<double>(T);
            }
        }
        res.avg_out[i] = std::move(avg);
    }
    return res;
}

double snn_accuracy(const SpikingNetwork& snn, const Dataset& data, std::size_t T) {
    if (data.empty()) throw ArgumentError("snn_accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        SnnForwardResult r = snn_forward(snn, data.inputs[i], T);
        auto it = std::max_element(r.scores.data.begin(), r.scores.data.end());
        int pred = static_cast<int>(std::distance(r.scores.data.begin(), it));
        if (pred == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

constexpr double kParamFloor = 1e-6;

// Everything one training step needs to replay backwards.
struct StepTape {
    std::vector<Tensor> input;    // per layer: input to weighted layers
    std::vector<Tensor> u_prev;   // per weighted layer: membrane before the step
    std::vector<Tensor> u_temp;   // per spiking layer: pre-reset potential
    std::vector<std::vector<std::size_t>> pool_argmax;  // per pool layer
};

struct FinetuneGrads {
    std::vector<Tensor> dw;
    std::vector<double> dvth;
    std::vector<double> dlam;

    explicit FinetuneGrads(const SpikingNetwork& net) {
        dw.resize(net.layers.size());
        dvth.assign(net.layers.size(), 0.0);
        dlam.assign(net.layers.size(), 0.0);
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (net.layers[i].spec.weighted()) {
                dw[i] = Tensor::zeros(net.layers[i].spec.weight.shape);
            }
        }
    }
};

// BPTT for a single input; accumulates parameter gradients into g.
double bptt_example(const SpikingNetwork& net, const Tensor& x, int label, std::size_t T,
                    const std::vector<std::vector<double>>& dropout_scale, FinetuneGrads& g,
                    Tensor* scores_out) {
    const std::size_t n = net.layers.size();
    const std::size_t out_l = net.output_layer();

    std::vector<std::vector<std::size_t>> shapes(n);
    {
        std::vector<std::size_t> cur = net.input_shape;
        for (std::size_t i = 0; i < n; ++i) {
            cur = layer_output_shape(net.layers[i].spec, cur);
            shapes[i] = cur;
        }
    }

    std::vector<Tensor> U(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (net.layers[i].spec.weighted()) {
            U[i] = Tensor::full(shapes[i], static_cast<double>(T) * net.layers[i].delta);
        }
    }

    std::vector<StepTape> tape(T);
    for (std::size_t t = 0; t < T; ++t) {
        StepTape& st = tape[t];
        st.input.resize(n);
        st.u_prev.resize(n);
        st.u_temp.resize(n);
        st.pool_argmax.resize(n);

        Tensor cur = x;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& l = net.layers[i];
            switch (l.spec.kind) {
                case LayerKind::dense:
                case LayerKind::conv2d: {
                    st.input[i] = cur;
                    st.u_prev[i] = U[i];
                    Tensor drive = l.spec.kind == LayerKind::dense
                                       ? dense_forward(l.spec.weight, cur)
                                       : conv2d_forward(l.spec.weight, cur, l.spec.stride,
                                                        l.spec.pad);
                    Tensor u_temp = Tensor::zeros(shapes[i]);
                    for (std::size_t k = 0; k < drive.size(); ++k) {
                        u_temp.data[k] = l.lam * U[i].data[k] + drive.data[k];
                    }
                    st.u_temp[i] = u_temp;
                    if (i == out_l) {
                        U[i] = std::move(u_temp);
                        cur = Tensor::zeros(shapes[i]);
                    } else {
                        const double value = l.beta * l.vth;
                        Tensor spikes = Tensor::zeros(shapes[i]);
                        for (std::size_t k = 0; k < u_temp.size(); ++k) {
                            if (u_temp.data[k] > l.vth) {
                                spikes.data[k] = value;
                                U[i].data[k] = u_temp.data[k] - l.vth;
                            } else {
                                U[i].data[k] = u_temp.data[k];
                            }
                        }
                        cur = std::move(spikes);
                    }
                    break;
                }
                case LayerKind::maxpool2d: {
                    const auto& s = cur.shape;
                    const std::size_t ch = s[0], h = s[1], w = s[2];
                    const std::size_t oh = shapes[i][1], ow = shapes[i][2];
                    Tensor y = Tensor::zeros(shapes[i]);
                    auto& winners = st.pool_argmax[i];
                    winners.resize(y.size());
                    for (std::size_t c = 0; c < ch; ++c) {
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                std::size_t best = (c * h + oy * l.spec.pool_stride) * w +
                                                   ox * l.spec.pool_stride;
                                for (std::size_t ky = 0; ky < l.spec.pool_h; ++ky) {
                                    for (std::size_t kx = 0; kx < l.spec.pool_w; ++kx) {
                                        std::size_t idx =
                                            (c * h + oy * l.spec.pool_stride + ky) * w +
                                            ox * l.spec.pool_stride + kx;
                                        if (cur.data[idx] > cur.data[best]) best = idx;
                                    }
                                }
                                std::size_t oi = (c * oh + oy) * ow + ox;
                                y.data[oi] = cur.data[best];
                                winners[oi] = best;
                            }
                        }
                    }
                    cur = std::move(y);
                    break;
                }
                case LayerKind::dropout: {
                    const auto& mask = dropout_scale[i];
                    if (!mask.empty()) {
                        for (std::size_t k = 0; k < cur.size(); ++k) cur.data[k] *= mask[k];
                    }
                    break;
                }
            }
        }
    }

    Tensor scores = U[out_l];
    const double beta_out = net.layers[out_l].beta;
    for (double& v : scores.data) v *= beta_out;
    Tensor dscores;
    double loss = dnn::softmax_cross_entropy(scores, label, dscores);
    if (scores_out) *scores_out = scores;

    // dL/dU(t) carried backwards through the leak path per layer.
    std::vector<Tensor> carry(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (net.layers[i].spec.weighted()) carry[i] = Tensor::zeros(shapes[i]);
    }

    for (std::size_t t = T; t-- > 0;) {
        const StepTape& st = tape[t];
        Tensor gsig;  // gradient wrt the signal flowing out of layer i
        bool have_sig = false;
        for (std::size_t i = n; i-- > 0;) {
            const auto& l = net.layers[i];
            switch (l.spec.kind) {
                case LayerKind::dense:
                case LayerKind::conv2d: {
                    Tensor g_utemp = Tensor::zeros(shapes[i]);
                    if (i == out_l) {
                        for (std::size_t k = 0; k < g_utemp.size(); ++k) {
                            g_utemp.data[k] = carry[i].data[k] +
                                              (t + 1 == T ? beta_out * dscores.data[k] : 0.0);
                        }
                    } else {
                        const double value = l.beta * l.vth;
                        for (std::size_t k = 0; k < g_utemp.size(); ++k) {
                            double gs = have_sig ? gsig.data[k] : 0.0;
                            double ut = st.u_temp[i].data[k];
                            double sg = surrogate_grad(ut, l.vth);
                            bool fired = ut > l.vth;
                            g_utemp.data[k] = carry[i].data[k] + gs * value * sg;
                            // Emitted value beta*vth*H(u - vth): both the
                            // direct beta*H term and the surrogate threshold
                            // path contribute to dvth.
                            g.dvth[i] += gs * (l.beta * (fired ? 1.0 : 0.0) - value * sg);
                        }
                    }
                    for (std::size_t k = 0; k < g_utemp.size(); ++k) {
                        g.dlam[i] += g_utemp.data[k] * st.u_prev[i].data[k];
                    }
                    Tensor dx = Tensor::zeros(st.input[i].shape);
                    if (l.spec.kind == LayerKind::dense) {
                        dense_backward(l.spec.weight, st.input[i], g_utemp, g.dw[i], dx);
                    } else {
                        conv2d_backward(l.spec.weight, st.input[i], g_utemp, l.spec.stride,
                                        l.spec.pad, g.dw[i], dx);
                    }
                    // Reset path detached: dU(t)/dU_temp(t) = 1.
                    for (std::size_t k = 0; k < g_utemp.size(); ++k) {
                        carry[i].data[k] = l.lam * g_utemp.data[k];
                    }
                    gsig = std::move(dx);
                    have_sig = true;
                    break;
                }
                case LayerKind::maxpool2d: {
                    if (!have_sig) break;
                    std::vector<std::size_t> in_shape =
                        i == 0 ? net.input_shape : shapes[i - 1];
                    Tensor dx = Tensor::zeros(in_shape);
                    const auto& winners = st.pool_argmax[i];
                    for (std::size_t k = 0; k < gsig.size(); ++k) {
                        dx.data[winners[k]] += gsig.data[k];
                    }
                    gsig = std::move(dx);
                    break;
                }
                case LayerKind::dropout: {
                    if (!have_sig) break;
                    const auto& mask = dropout_scale[i];
                    if (!mask.empty()) {
                        for (std::size_t k = 0; k < gsig.size(); ++k) gsig.data[k] *= mask[k];
                    }
                    break;
                }
            }
        }
    }
    return loss;
}

}  // namespace

FinetuneResult finetune_sgl(const SpikingNetwork& snn, const Dataset& data, std::size_t T,
                            const dnn::TrainConfig& cfg) {
    if (T == 0) throw ArgumentError("finetune_sgl: T must be >= 1");
    if (data.empty()) throw ArgumentError("finetune_sgl: empty dataset");
    dnn::validate_train_config(cfg);
    validate_spiking_network(snn);

    FinetuneResult result;
    result.snn = snn;
    auto& net = result.snn;
    if (cfg.dropout > 0.0) {
        for (auto& layer : net.layers) {
            if (layer.spec.kind == LayerKind::dropout) layer.spec.dropout_rate = cfg.dropout;
        }
    }

    const std::size_t n = net.layers.size();
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    // Shapes of each layer's input (for dropout mask sizing).
    std::vector<std::size_t> in_sizes(n);
    {
        std::vector<std::size_t> cur = net.input_shape;
        for (std::size_t i = 0; i < n; ++i) {
            in_sizes[i] = shape_size(cur);
            cur = layer_output_shape(net.layers[i].spec, cur);
        }
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr;
        for (double m : cfg.milestones) {
            if (epoch >= static_cast<std::size_t>(
                             std::floor(m * static_cast<double>(cfg.epochs)))) {
                lr *= cfg.decay;
            }
        }
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            FinetuneGrads acc(net);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t idx = order[k];
                // Dropout mask drawn once per input, constant across the T steps.
                std::vector<std::vector<double>> masks(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const auto& l = net.layers[i];
                    if (l.spec.kind == LayerKind::dropout && l.spec.dropout_rate > 0.0) {
                        std::bernoulli_distribution keep(1.0 - l.spec.dropout_rate);
                        const double boost = 1.0 / (1.0 - l.spec.dropout_rate);
                        masks[i].resize(in_sizes[i]);
                        for (double& m : masks[i]) m = keep(rng) ? boost : 0.0;
                    }
                }
                double loss;
                try {
                    loss = bptt_example(net, data.inputs[idx], data.labels[idx], T, masks, acc,
                                        nullptr);
                } catch (const NumericError&) {
                    // Overflowed parameters surface as non-finite activations.
                    throw TrainingError("finetune_sgl: diverged (non-finite values) at epoch " +
                                        std::to_string(epoch));
                }
                if (!std::isfinite(loss)) {
                    throw TrainingError("finetune_sgl: non-finite loss at epoch " +
                                        std::to_string(epoch));
                }
                loss_sum += loss;
                ++seen;
            }
            const double scale = 1.0 / static_cast<double>(stop - start);
            for (std::size_t i = 0; i < n; ++i) {
                auto& layer = net.layers[i];
                if (!layer.spec.weighted()) continue;
                for (std::size_t j = 0; j < layer.spec.weight.size(); ++j) {
                    layer.spec.weight.data[j] -= lr * acc.dw[i].data[j] * scale;
                }
                layer.vth = std::max(kParamFloor, layer.vth - lr * acc.dvth[i] * scale);
                layer.lam = std::clamp(layer.lam - lr * acc.dlam[i] * scale, kParamFloor, 1.0);
            }
        }

        dnn::EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.loss = loss_sum / static_cast<double>(seen);
        log.accuracy = snn_accuracy(net, data, T);
        for (const auto& layer : net.layers) {
            if (layer.spec.weighted()) log.mu.push_back(layer.vth);
        }
        result.log.push_back(std::move(log));
    }
    return result;
}

}  // namespace snnkit::snn
