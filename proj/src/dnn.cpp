#include "snnkit/dnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "snnkit/errors.hpp"

namespace snnkit::dnn {

namespace {

constexpr double kMuFloor = 1e-6;

std::vector<std::size_t> thresholded_layers(const NetworkSpec& net) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].mu) out.push_back(i);
    }
    return out;
}

}  // namespace

Tensor threshold_relu(const Tensor& x, double mu) {
    if (!(mu > 0.0)) throw ArgumentError("threshold_relu: mu must be positive");
    Tensor y = x;
    for (double& v : y.data) v = v < 0.0 ? 0.0 : (v > mu ? mu : v);
    return y;
}

ThresholdGrad threshold_relu_grad(const Tensor& x, double mu) {
    if (!(mu > 0.0)) throw ArgumentError("threshold_relu_grad: mu must be positive");
    ThresholdGrad g{Tensor::zeros(x.shape), Tensor::zeros(x.shape)};
    for (std::size_t k = 0; k < x.size(); ++k) {
        double v = x.data[k];
        if (v > 0.0 && v < mu) g.d_dx.data[k] = 1.0;
        if (v > mu) g.d_dmu.data[k] = 1.0;
    }
    return g;
}

void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.lr >= 0.0)) throw ArgumentError("train: learning rate must be >= 0");
    if (cfg.batch_size == 0) throw ArgumentError("train: batch size must be >= 1");
    if (cfg.decay <= 0.0) throw ArgumentError("train: decay must be positive");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ArgumentError("train: dropout in [0,1)");
    double prev = 0.0;
    for (double m : cfg.milestones) {
        if (!(m > prev && m < 1.0)) {
            throw ArgumentError("train: milestones must lie in (0,1), strictly increasing");
        }
        prev = m;
    }
}

void initialize_weights(NetworkSpec& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& layer : net.layers) {
        if (!layer.weighted()) continue;
        double fan_in = 0.0, fan_out = 0.0;
        if (layer.kind == LayerKind::dense) {
            fan_out = static_cast<double>(layer.weight.shape[0]);
            fan_in = static_cast<double>(layer.weight.shape[1]);
        } else {
            double rf = static_cast<double>(layer.weight.shape[2] * layer.weight.shape[3]);
            fan_out = static_cast<double>(layer.weight.shape[0]) * rf;
            fan_in = static_cast<double>(layer.weight.shape[1]) * rf;
        }
        double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (double& w : layer.weight.data) w = u(rng);
    }
}

double softmax_cross_entropy(const Tensor& logits, int label, Tensor& dlogits) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
        throw ArgumentError("cross entropy: label out of range");
    }
    dlogits = Tensor::zeros(logits.shape);
    double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double z = 0.0;
    for (double v : logits.data) z += std::exp(v - mx);
    double logz = std::log(z) + mx;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        dlogits.data[k] = std::exp(logits.data[k] - logz);
    }
    double loss = logz - logits.data[static_cast<std::size_t>(label)];
    dlogits.data[static_cast<std::size_t>(label)] -= 1.0;
    return loss;
}

namespace {

struct SgdState {
    std::vector<Tensor> w_vel;
    std::vector<double> mu_vel;
};

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
    double lr = cfg.lr;
    for (double m : cfg.milestones) {
        if (epoch >= static_cast<std::size_t>(std::floor(m * static_cast<double>(cfg.epochs)))) {
            lr *= cfg.decay;
        }
    }
    return lr;
}

void apply_updates(NetworkSpec& net, const Gradients& acc, double scale, double lr,
                   double momentum, SgdState& st) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& layer = net.layers[i];
        if (layer.weighted()) {
            auto& vel = st.w_vel[i];
            for (std::size_t k = 0; k < layer.weight.size(); ++k) {
                double g = acc.dweight[i].data[k] * scale;
                if (momentum > 0.0) {
                    vel.data[k] = momentum * vel.data[k] + g;
                    g = vel.data[k];
                }
                layer.weight.data[k] -= lr * g;
            }
        }
        if (layer.mu) {
            double g = acc.dmu[i] * scale;
            if (momentum > 0.0) {
                st.mu_vel[i] = momentum * st.mu_vel[i] + g;
                g = st.mu_vel[i];
            }
            layer.mu = std::max(kMuFloor, *layer.mu - lr * g);
        }
    }
}

}  // namespace

TrainResult train_dnn(const NetworkSpec& net, const Dataset& data, const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (data.empty()) throw ArgumentError("train_dnn: empty dataset");
    validate_network(net);

    TrainResult result;
    result.net = net;
    if (cfg.dropout > 0.0) {
        for (auto& layer : result.net.layers) {
            if (layer.kind == LayerKind::dropout) layer.dropout_rate = cfg.dropout;
        }
    }

    const std::size_t n_layers = result.net.layers.size();
    SgdState st;
    st.w_vel.resize(n_layers);
    st.mu_vel.assign(n_layers, 0.0);
    for (std::size_t i = 0; i < n_layers; ++i) {
        if (result.net.layers[i].weighted()) {
            st.w_vel[i] = Tensor::zeros(result.net.layers[i].weight.shape);
        }
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    auto mu_layers = thresholded_layers(result.net);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lr_at_epoch(cfg, epoch);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Gradients acc;
            acc.dweight.resize(n_layers);
            acc.dmu.assign(n_layers, 0.0);
            for (std::size_t i = 0; i < n_layers; ++i) {
                if (result.net.layers[i].weighted()) {
                    acc.dweight[i] = Tensor::zeros(result.net.layers[i].weight.shape);
                }
            }
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t idx = order[k];
                ForwardCache cache;
                try {
                    cache = forward_cached(result.net, data.inputs[idx], RunMode::train, &rng);
                } catch (const NumericError&) {
                    // Overflowed weights surface as non-finite activations.
                    throw TrainingError("train_dnn: diverged (non-finite values) at epoch " +
                                        std::to_string(epoch));
                }
                Tensor dlogits;
                double loss = softmax_cross_entropy(cache.output, data.labels[idx], dlogits);
                if (!std::isfinite(loss)) {
                    throw TrainingError("train_dnn: non-finite loss at epoch " +
                                        std::to_string(epoch));
                }
                loss_sum += loss;
                ++seen;
                Gradients g = backward(result.net, cache, dlogits);
                for (std::size_t i = 0; i < n_layers; ++i) {
                    if (result.net.layers[i].weighted()) {
                        for (std::size_t j = 0; j < g.dweight[i].size(); ++j) {
                            acc.dweight[i].data[j] += g.dweight[i].data[j];
                        }
                    }
                    acc.dmu[i] += g.dmu[i];
                }
            }
            apply_updates(result.net, acc, 1.0 / static_cast<double>(stop - start), lr,
                          cfg.momentum, st);
        }

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.loss = loss_sum / static_cast<double>(seen);
        log.accuracy = evaluate_accuracy(result.net, data);
        for (std::size_t li : mu_layers) log.mu.push_back(*result.net.layers[li].mu);
        result.log.push_back(std::move(log));
    }
    return result;
}

double evaluate_accuracy(const NetworkSpec& net, const Dataset& data) {
    if (data.empty()) throw ArgumentError("evaluate_accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        ForwardResult r = forward(net, data.inputs[i], RunMode::infer, nullptr);
        auto it = std::max_element(r.output.data.begin(), r.output.data.end());
        int pred = static_cast<int>(std::distance(r.output.data.begin(), it));
        if (pred == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::array<double, 101> percentile_table(std::vector<double> samples) {
    if (samples.empty()) throw StatsError("percentile_table: empty sample set");
    std::sort(samples.begin(), samples.end());
    std::array<double, 101> P{};
    const std::size_t n = samples.size();
    for (std::size_t j = 0; j <= 100; ++j) {
        std::size_t idx = j * (n - 1) / 100;  // floor(j/100 * (n-1)), integer arithmetic
        P[j] = samples[idx];
    }
    return P;
}

const LayerStats* ActivationStats::find(std::size_t layer_index) const {
    for (const auto& l : layers) {
        if (l.layer_index == layer_index) return &l;
    }
    return nullptr;
}

ActivationStats collect_activation_stats(const NetworkSpec& net, const Dataset& data,
                                         std::size_t reservoir_cap, std::uint64_t seed) {
    if (data.empty()) throw StatsError("collect_activation_stats: empty calibration set");
    if (reservoir_cap == 0) throw ArgumentError("collect_activation_stats: zero reservoir");
    validate_network(net);
    auto mu_layers = thresholded_layers(net);

    struct Accum {
        std::vector<double> reservoir;
        std::size_t seen = 0;
        double d_max = -std::numeric_limits<double>::infinity();
        std::mt19937_64 rng;
    };
    std::vector<Accum> acc(mu_layers.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i].rng.seed(seed + 0x9E3779B97F4A7C15ULL * (i + 1));
    }

    for (std::size_t s = 0; s < data.size(); ++s) {
        ForwardResult r = forward(net, data.inputs[s], RunMode::infer, nullptr);
        for (std::size_t i = 0; i < mu_layers.size(); ++i) {
            const Tensor& pre = r.preacts[mu_layers[i]];
            auto& a = acc[i];
            for (double v : pre.data) {
                a.d_max = std::max(a.d_max, v);
                // Algorithm R: uniform reservoir over the full sample stream.
                if (a.reservoir.size() < reservoir_cap) {
                    a.reservoir.push_back(v);
                } else {
                    std::uniform_int_distribution<std::size_t> pick(0, a.seen);
                    std::size_t j = pick(a.rng);
                    if (j < reservoir_cap) a.reservoir[j] = v;
                }
                ++a.seen;
            }
        }
    }

    ActivationStats stats;
    for (std::size_t i = 0; i < mu_layers.size(); ++i) {
        auto& a = acc[i];
        if (a.reservoir.empty()) throw StatsError("collect_activation_stats: no samples");
        LayerStats ls;
        ls.layer_index = mu_layers[i];
        ls.mu = *net.layers[mu_layers[i]].mu;
        ls.total_samples = a.seen;
        ls.d_max = a.d_max;
        ls.P = percentile_table(a.reservoir);
        ls.M = -1;
        for (int j = 0; j <= 100; ++j) {
            if (ls.P[static_cast<std::size_t>(j)] <= ls.mu) ls.M = j;
            else break;
        }
        std::size_t covered = 0;
        for (double v : a.reservoir) {
            if (v >= 0.0 && v <= a.d_max / 3.0) ++covered;
        }
        ls.coverage_dmax3 = static_cast<double>(covered) / static_cast<double>(a.reservoir.size());
        // Stability diagnostic: percentile tables from two disjoint halves.
        if (a.reservoir.size() >= 2) {
            std::vector<double> h1, h2;
            h1.reserve(a.reservoir.size() / 2 + 1);
            h2.reserve(a.reservoir.size() / 2 + 1);
            for (std::size_t k = 0; k < a.reservoir.size(); ++k) {
                (k % 2 == 0 ? h1 : h2).push_back(a.reservoir[k]);
            }
            auto P1 = percentile_table(h1);
            auto P2 = percentile_table(h2);
            for (std::size_t j = 0; j <= 100; ++j) {
                ls.stability_gap = std::max(ls.stability_gap, std::abs(P1[j] - P2[j]));
            }
        }
        ls.reservoir = std::move(a.reservoir);
        stats.layers.push_back(std::move(ls));
    }
    return stats;
}

}  // namespace snnkit::dnn
