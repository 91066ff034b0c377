#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnkit/dataset.hpp"
#include "snnkit/dnn.hpp"
#include "snnkit/network.hpp"
#include "snnkit/tensor.hpp"

namespace snnkit::snn {

enum class ConversionMode : std::uint8_t { naive = 0, max_act_bias = 1, scaled = 2 };
const char* to_string(ConversionMode mode);
ConversionMode conversion_mode_from_string(const std::string& name);  // ConfigError on unknown

struct SpikingLayer {
    LayerSpec spec;      // kind, weights, geometry (weights shared with the source DNN)
    double vth = 1.0;    // spiking threshold, activation units
    double beta = 1.0;   // output scale, dimensionless
    double lam = 1.0;    // leak in (0,1]; 1 = pure integrate-and-fire
    double delta = 0.0;  // bias shift, activation units (bias-shift baseline only)
};

struct SpikingNetwork {
    std::vector<std::size_t> input_shape;
    std::vector<SpikingLayer> layers;

    // Index of the last weighted layer (the accumulate-only readout).
    std::size_t output_layer() const;
    // Index of the first weighted layer (receives the analog input, MAC layer).
    std::size_t input_layer() const;
};

// Wraps a NetworkSpec with default neuron parameters (vth=1, beta=1, lam=1,
// delta=0); conversion overwrites them per mode.
SpikingNetwork from_network(const NetworkSpec& net);
// Extracts the layer stack (weights shared) for shape/FLOP utilities.
NetworkSpec to_network(const SpikingNetwork& snn);
void validate_spiking_network(const SpikingNetwork& snn);

struct MembraneState {
    std::vector<Tensor> u;  // one membrane tensor per layer (empty for stateless layers)
    std::size_t t = 0;
};

struct StepResult {
    Tensor spikes;  // emitted values: 0 or beta*vth exactly
    Tensor u;       // membrane after soft reset
};

// One IF/LIF step: U_temp = lam*u + drive; spike where U_temp > vth (strict);
// reset subtracts vth. if_step emits value vth; scaled_if_step emits beta*vth
// with identical firing decisions and reset.
StepResult if_step(const Tensor& u, const Tensor& drive, double vth, double lam);
StepResult scaled_if_step(const Tensor& u, const Tensor& drive, double vth, double beta,
                          double lam);

struct SpikeTrace {
    std::size_t T = 0;
    std::vector<double> scale;               // per layer: value of a single spike (0 = silent/readout)
    std::vector<std::vector<Tensor>> spikes;  // [layer][step] emitted tensors
};

struct SnnForwardResult {
    Tensor scores;                // accumulated readout potential (times beta of the readout layer)
    SpikeTrace trace;
    std::vector<Tensor> avg_out;  // per layer: (1/T) * sum of per-step outputs
};

// Direct encoding: the first weighted layer receives the analog x at every
// step; hidden weighted layers spike; max pooling applies per step to spike
// tensors; the last weighted layer accumulates without spiking.
SnnForwardResult snn_forward(const SpikingNetwork& snn, const Tensor& x, std::size_t T);

// Average staircase output for T steps of constant drive z at lam=1:
// (beta*vth/T) * clip(n, 0, T) with n = largest integer strictly below
// T*(z+delta)/vth, matching the strict spiking inequality exactly at
// staircase boundaries. Valid for delta in [0, vth/(2T)] — the range the
// conversion modes produce; a larger initial charge T*delta combined with a
// negative drive can fire transient spikes this terminal-charge count
// deliberately ignores.
double closed_form_activation(double z, double vth, std::size_t T, double delta, double beta);

// Boxcar surrogate: 1 if 0 <= s <= 2*alpha_mu, else 0.
double surrogate_grad(double s, double alpha_mu);

double snn_accuracy(const SpikingNetwork& snn, const Dataset& data, std::size_t T);

struct FinetuneResult {
    SpikingNetwork snn;
    std::vector<dnn::EpochLog> log;  // mu slot reports per-layer vth
};

// Surrogate-gradient learning: BPTT over T unrolled steps, boxcar surrogate
// at each spike nonlinearity (window tracks the live per-layer threshold),
// detached reset path. Updates W, vth, lam; lam clamped to (0,1], vth kept
// positive; beta and delta stay fixed.
FinetuneResult finetune_sgl(const SpikingNetwork& snn, const Dataset& data, std::size_t T,
                            const dnn::TrainConfig& cfg);

}  // namespace snnkit::snn
