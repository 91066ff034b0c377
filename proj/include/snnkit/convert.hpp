#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "snnkit/dnn.hpp"
#include "snnkit/network.hpp"
#include "snnkit/snn.hpp"

namespace snnkit::convert {

struct ScalePair {
    double alpha = 1.0;  // in (0,1]: percentile value / mu, or the initial 1
    double beta = 1.0;   // on the grid {0.00, 0.01, ..., 2.00}, or the initial 1
};

struct LandscapePoint {
    double alpha = 0.0;
    double beta = 0.0;
    double abs_loss = 0.0;
};

// Signed staircase-residual loss over a percentile table. Each percentile p
// contributes exactly one segment:
//   Seg-I  (0 <= p <= alpha*mu): p - j*alpha*beta*mu/T with j the staircase
//          step index, half-open intervals [j*alpha*mu/T, (j+1)*alpha*mu/T),
//          the final interval closed at alpha*mu;
//   Seg-II (alpha*mu < p <= mu): p - alpha*beta*mu;
//   Seg-III (p > mu): mu*(1 - alpha*beta).
// Negative percentiles contribute nothing (both activations emit 0 there).
double compute_loss(const std::vector<double>& P, double mu, double alpha, double beta,
                    std::size_t T);

struct ScanResult {
    ScalePair best;
    double loss_opt = 0.0;  // signed loss at the optimum
    bool beta_zero = false; // best beta == 0 silences the layer; surfaced as a warning
    std::vector<LandscapePoint> alpha_profile;  // per alpha candidate: best beta, min |loss|
    std::vector<LandscapePoint> beta_slice;     // all betas at the winning alpha
};

// Grid search of Algorithm-style candidates: alpha = p/mu for each distinct
// positive percentile in P (ascending), beta over {0.00,...,2.00} step 0.01,
// starting from the incumbent (1,1); strict |loss| improvement replaces the
// incumbent (first minimum wins ties). P must be the 0..M slice (values <= mu).
ScanResult find_scaling_factors(const std::vector<double>& P, double mu, std::size_t T);

struct LayerPlan {
    std::size_t layer_index = 0;
    snn::ConversionMode mode = snn::ConversionMode::naive;
    double mu = 0.0;
    ScalePair scale;
    double vth = 0.0;
    double delta = 0.0;
    double loss_opt = 0.0;
    bool beta_zero_warning = false;
    std::vector<LandscapePoint> alpha_profile;
    std::vector<LandscapePoint> beta_slice;
};

struct ConversionPlan {
    snn::ConversionMode mode = snn::ConversionMode::naive;
    std::size_t T = 1;
    std::vector<LayerPlan> layers;  // one per thresholded layer
};

// Copies weights verbatim and assigns per-layer (vth, beta, delta) by mode:
//   naive:        vth = mu,        beta = 1, delta = 0
//   max_act_bias: vth = d_max,     beta = 1, delta = vth/(2T)
//   scaled:       vth = alpha*mu,  beta from the grid, delta = 0
// lam = 1 everywhere (fine-tuning may later train it).
std::pair<snn::SpikingNetwork, ConversionPlan> convert_dnn_to_snn(
    const NetworkSpec& net, const dnn::ActivationStats& stats, std::size_t T,
    snn::ConversionMode mode);

// Folds each layer's beta into the consuming layer's weights (the readout
// layer's beta scales into its own weights); the network function over any
// input and T is unchanged.
snn::SpikingNetwork absorb_beta(const snn::SpikingNetwork& snn);

}  // namespace snnkit::convert
