#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "snnkit/dataset.hpp"
#include "snnkit/network.hpp"
#include "snnkit/tensor.hpp"

namespace snnkit::dnn {

// Elementwise clip(x, 0, mu).
Tensor threshold_relu(const Tensor& x, double mu);

// Subgradients of the clip: d_dx = 1 on (0, mu) else 0; d_dmu = 1 where
// x > mu else 0 (the a.e. derivative of the ceiling).
struct ThresholdGrad {
    Tensor d_dx;
    Tensor d_dmu;
};
ThresholdGrad threshold_relu_grad(const Tensor& x, double mu);

struct TrainConfig {
    std::size_t epochs = 10;
    double lr = 0.01;
    double decay = 0.1;
    std::vector<double> milestones = {0.6, 0.8, 0.9};  // fractions of total epochs
    std::size_t batch_size = 32;
    double dropout = 0.0;  // when > 0, overrides every dropout layer's rate
    double momentum = 0.0;
    std::uint64_t seed = 1;
};
void validate_train_config(const TrainConfig& cfg);

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<double> mu;  // per thresholded layer, in layer order
};

struct TrainResult {
    NetworkSpec net;
    std::vector<EpochLog> log;
};

// Glorot-uniform weights; thresholds are left as constructed.
void initialize_weights(NetworkSpec& net, std::uint64_t seed);

// Softmax cross-entropy on raw logits; fills dlogits with p - onehot.
double softmax_cross_entropy(const Tensor& logits, int label, Tensor& dlogits);

// Plain SGD with milestone LR decay. Throws TrainingError when the loss
// goes non-finite (message carries the epoch index).
TrainResult train_dnn(const NetworkSpec& net, const Dataset& data, const TrainConfig& cfg);

double evaluate_accuracy(const NetworkSpec& net, const Dataset& data);

// Sort-based percentile table, lower-value interpolation:
// P[j] = sorted[floor(j*(n-1)/100)].
std::array<double, 101> percentile_table(std::vector<double> samples);

struct LayerStats {
    std::size_t layer_index = 0;         // index into NetworkSpec::layers
    double mu = 0.0;                     // threshold at collection time
    std::array<double, 101> P{};         // pre-activation percentiles
    int M = -1;                          // largest j with P[j] <= mu (-1 if none)
    double d_max = 0.0;                  // max observed pre-activation
    std::vector<double> reservoir;       // capped raw sample reservoir
    std::size_t total_samples = 0;       // observed count before capping
    double coverage_dmax3 = 0.0;         // fraction of samples in [0, d_max/3]
    double stability_gap = 0.0;          // max percentile gap across two disjoint halves
};

struct ActivationStats {
    std::vector<LayerStats> layers;  // one entry per thresholded layer
    const LayerStats* find(std::size_t layer_index) const;
};

// Runs the net in inference mode over the calibration set and gathers
// per-thresholded-layer pre-activation statistics. Reservoir sampling keeps
// at most reservoir_cap values per layer (seeded, uniform).
ActivationStats collect_activation_stats(const NetworkSpec& net, const Dataset& data,
                                         std::size_t reservoir_cap = 1000000,
                                         std::uint64_t seed = 1);

}  // namespace snnkit::dnn
