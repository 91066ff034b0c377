#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnkit/network.hpp"
#include "snnkit/snn.hpp"

namespace snnkit::energy {

struct EnergyModel {
    double e_mac_pj = 3.2;  // 45nm CMOS MAC
    double e_ac_pj = 0.1;   // 45nm CMOS AC
};
void validate_energy_model(const EnergyModel& m);  // requires e_mac > e_ac > 0

enum class NeuromorphicPreset : std::uint8_t { truenorth, spinnaker };
struct PresetPair {
    double e_compute = 0.0;
    double e_static = 0.0;
};
PresetPair preset_values(NeuromorphicPreset preset);
NeuromorphicPreset preset_from_string(const std::string& name);  // ConfigError on unknown
const char* to_string(NeuromorphicPreset preset);

enum class FlopKind : std::uint8_t { mac, ac };

struct LayerCost {
    std::size_t layer = 0;
    FlopKind kind = FlopKind::mac;
    double flops = 0.0;
    double spikes_per_neuron = 0.0;  // 0 for DNN costings
};

// Total spike events across all steps divided by the layer's neuron count.
double spiking_activity(const snn::SpikeTrace& trace, std::size_t layer);

// Static per-layer MAC counts: dense out*in; conv out-positions * kernel
// volume; pooling/dropout 0.
std::vector<double> count_flops_dnn(const NetworkSpec& net,
                                    const std::vector<std::size_t>& input_shape);

// SNN counts: first weighted layer T * static MACs (analog input re-presented
// each step); every later weighted layer sums, over steps, input spikes times
// the per-spike fan-out (position-dependent for conv).
std::vector<double> count_flops_snn(const snn::SpikingNetwork& net, const snn::SpikeTrace& trace,
                                    std::size_t T);

std::vector<LayerCost> dnn_costs(const NetworkSpec& net);
std::vector<LayerCost> snn_costs(const snn::SpikingNetwork& net, const snn::SpikeTrace& trace,
                                 std::size_t T);

// Joules: sum of MAC flops * e_mac + AC flops * e_ac (picojoules -> J).
double compute_energy_cmos(const std::vector<LayerCost>& costs, const EnergyModel& m);

// Normalized units: flops * e_compute + T * e_static.
double compute_energy_neuromorphic(double total_flops, std::size_t T, NeuromorphicPreset preset);

struct CostReport {
    std::size_t T = 0;
    std::vector<LayerCost> snn_layers;
    std::vector<LayerCost> dnn_layers;
    double snn_total_mac = 0.0;
    double snn_total_ac = 0.0;
    double dnn_total_mac = 0.0;
    double energy_snn_j = 0.0;
    double energy_dnn_j = 0.0;             // all layers at e_mac
    double energy_dnn_excl_first_j = 0.0;  // alternative reading: layers >= 2 only
    double ratio_dnn_over_snn = 0.0;
    std::vector<std::pair<std::string, double>> neuromorphic;  // preset name -> energy
};

// Aggregates precomputed (possibly input-averaged) SNN layer costs into the
// exportable report.
CostReport assemble_cost_report(const snn::SpikingNetwork& net,
                                std::vector<LayerCost> snn_layer_costs, std::size_t T,
                                const EnergyModel& m,
                                const std::vector<NeuromorphicPreset>& presets);

// Single-trace convenience wrapper around assemble_cost_report.
CostReport build_cost_report(const snn::SpikingNetwork& net, const snn::SpikeTrace& trace,
                             std::size_t T, const EnergyModel& m,
                             const std::vector<NeuromorphicPreset>& presets);

}  // namespace snnkit::energy
