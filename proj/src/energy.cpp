#include "snnkit/energy.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "snnkit/errors.hpp"

namespace snnkit::energy {

void validate_energy_model(const EnergyModel& m) {
    if (!(m.e_mac_pj > m.e_ac_pj && m.e_ac_pj > 0.0)) {
        throw ArgumentError("energy model requires e_mac > e_ac > 0");
    }
}

PresetPair preset_values(NeuromorphicPreset preset) {
    switch (preset) {
        case NeuromorphicPreset::truenorth: return {0.4, 0.6};
        case NeuromorphicPreset::spinnaker: return {0.64, 0.36};
    }
    throw ArgumentError("unknown neuromorphic preset");
}

NeuromorphicPreset preset_from_string(const std::string& name) {
    if (name == "truenorth") return NeuromorphicPreset::truenorth;
    if (name == "spinnaker") return NeuromorphicPreset::spinnaker;
    throw ConfigError("unknown neuromorphic preset '" + name +
                      "' (expected truenorth or spinnaker)");
}

const char* to_string(NeuromorphicPreset preset) {
    switch (preset) {
        case NeuromorphicPreset::truenorth: return "truenorth";
        case NeuromorphicPreset::spinnaker: return "spinnaker";
    }
    return "?";
}

double spiking_activity(const snn::SpikeTrace& trace, std::size_t layer) {
    if (layer >= trace.spikes.size()) throw ArgumentError("spiking_activity: layer out of range");
    const auto& steps = trace.spikes[layer];
    if (steps.empty()) throw ArgumentError("spiking_activity: empty trace");
    std::size_t events = 0;
    for (const auto& s : steps) {
        for (double v : s.data) {
            if (v != 0.0) ++events;
        }
    }
    return static_cast<double>(events) / static_cast<double>(steps.front().size());
}

namespace {

double static_macs(const LayerSpec& l, const std::vector<std::size_t>& in_shape) {
    switch (l.kind) {
        case LayerKind::dense:
            return static_cast<double>(l.weight.shape[0]) *
                   static_cast<double>(l.weight.shape[1]);
        case LayerKind::conv2d: {
            auto out = layer_output_shape(l, in_shape);
            const double positions = static_cast<double>(out[0]) * static_cast<double>(out[1]) *
                                     static_cast<double>(out[2]);
            const double kernel = static_cast<double>(l.weight.shape[1]) *
                                  static_cast<double>(l.weight.shape[2]) *
                                  static_cast<double>(l.weight.shape[3]);
            return positions * kernel;
        }
        default: return 0.0;
    }
}

// Accumulations triggered per spike at each input position of a layer.
std::vector<double> fanout_map(const LayerSpec& l, const std::vector<std::size_t>& in_shape) {
    std::vector<double> fan(shape_size(in_shape), 0.0);
    if (l.kind == LayerKind::dense) {
        const auto out = static_cast<double>(l.weight.shape[0]);
        for (double& f : fan) f = out;
        return fan;
    }
    // conv2d: count receptive fields covering each input position, times the
    // output channel count (border positions touch fewer windows).
    const auto out_shape = layer_output_shape(l, in_shape);
    const double oc = static_cast<double>(out_shape[0]);
    const std::size_t ic = in_shape[0], h = in_shape[1], w = in_shape[2];
    const std::size_t kh = l.weight.shape[2], kw = l.weight.shape[3];
    const std::size_t oh = out_shape[1], ow = out_shape[2];
    for (std::size_t c = 0; c < ic; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double windows = 0.0;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto top = static_cast<long long>(oy * l.stride) -
                                     static_cast<long long>(l.pad);
                    if (static_cast<long long>(y) < top ||
                        static_cast<long long>(y) >= top + static_cast<long long>(kh)) {
                        continue;
                    }
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const auto left = static_cast<long long>(ox * l.stride) -
                                          static_cast<long long>(l.pad);
                        if (static_cast<long long>(x) >= left &&
                            static_cast<long long>(x) < left + static_cast<long long>(kw)) {
                            windows += 1.0;
                        }
                    }
                }
                fan[(c * h + y) * w + x] = windows * oc;
            }
        }
    }
    return fan;
}

}  // namespace

std::vector<double> count_flops_dnn(const NetworkSpec& net,
                                    const std::vector<std::size_t>& input_shape) {
    std::vector<double> flops(net.layers.size(), 0.0);
    std::vector<std::size_t> cur = input_shape;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        flops[i] = static_macs(net.layers[i], cur);
        cur = layer_output_shape(net.layers[i], cur);
    }
    return flops;
}

std::vector<double> count_flops_snn(const snn::SpikingNetwork& net,
                                    const snn::SpikeTrace& trace, std::size_t T) {
    if (T == 0) throw ArgumentError("count_flops_snn: T must be >= 1");
    if (trace.spikes.size() != net.layers.size() || trace.T != T) {
        throw ArgumentError("count_flops_snn: trace does not match the network/T");
    }
    const std::size_t in_l = net.input_layer();

    std::vector<std::vector<std::size_t>> shapes(net.layers.size());
    {
        std::vector<std::size_t> cur = net.input_shape;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            cur = layer_output_shape(net.layers[i].spec, cur);
            shapes[i] = cur;
        }
    }

    std::vector<double> flops(net.layers.size(), 0.0);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (!l.spec.weighted()) continue;
        const std::vector<std::size_t>& in_shape = i == 0 ? net.input_shape : shapes[i - 1];
        if (i == in_l) {
            // Direct encoding re-presents the analog input every step.
            flops[i] = static_cast<double>(T) * static_macs(l.spec, in_shape);
            continue;
        }
        const auto& feed = trace.spikes[i - 1];
        if (feed.size() != T || feed.front().size() != shape_size(in_shape)) {
            throw ArgumentError("count_flops_snn: trace tensors do not match layer " +
                                std::to_string(i));
        }
        const std::vector<double> fan = fanout_map(l.spec, in_shape);
        double acs = 0.0;
        for (const auto& step : feed) {
            for (std::size_t k = 0; k < step.size(); ++k) {
                if (step.data[k] != 0.0) acs += fan[k];
            }
        }
        flops[i] = acs;
    }
    return flops;
}

std::vector<LayerCost> dnn_costs(const NetworkSpec& net) {
    std::vector<double> flops = count_flops_dnn(net, net.input_shape);
    std::vector<LayerCost> costs(flops.size());
    for (std::size_t i = 0; i < flops.size(); ++i) {
        costs[i] = LayerCost{i, FlopKind::mac, flops[i], 0.0};
    }
    return costs;
}

std::vector<LayerCost> snn_costs(const snn::SpikingNetwork& net, const snn::SpikeTrace& trace,
                                 std::size_t T) {
    std::vector<double> flops = count_flops_snn(net, trace, T);
    const std::size_t in_l = net.input_layer();
    std::vector<LayerCost> costs(flops.size());
    for (std::size_t i = 0; i < flops.size(); ++i) {
        costs[i] = LayerCost{i, i == in_l ? FlopKind::mac : FlopKind::ac, flops[i],
                             spiking_activity(trace, i)};
    }
    return costs;
}

double compute_energy_cmos(const std::vector<LayerCost>& costs, const EnergyModel& m) {
    validate_energy_model(m);
    double pj = 0.0;
    for (const auto& c : costs) {
        pj += c.flops * (c.kind == FlopKind::mac ? m.e_mac_pj : m.e_ac_pj);
    }
    return pj * 1e-12;
}

double compute_energy_neuromorphic(double total_flops, std::size_t T,
                                   NeuromorphicPreset preset) {
    if (T == 0) throw ArgumentError("compute_energy_neuromorphic: T must be >= 1");
    if (total_flops < 0.0) throw ArgumentError("compute_energy_neuromorphic: negative flops");
    const PresetPair p = preset_values(preset);
    return total_flops * p.e_compute + static_cast<double>(T) * p.e_static;
}

CostReport assemble_cost_report(const snn::SpikingNetwork& net,
                                std::vector<LayerCost> snn_layer_costs, std::size_t T,
                                const EnergyModel& m,
                                const std::vector<NeuromorphicPreset>& presets) {
    validate_energy_model(m);
    CostReport r;
    r.T = T;
    r.snn_layers = std::move(snn_layer_costs);
    r.dnn_layers = dnn_costs(snn::to_network(net));
    for (const auto& c : r.snn_layers) {
        (c.kind == FlopKind::mac ? r.snn_total_mac : r.snn_total_ac) += c.flops;
    }
    for (const auto& c : r.dnn_layers) r.dnn_total_mac += c.flops;

    r.energy_snn_j = compute_energy_cmos(r.snn_layers, m);
    r.energy_dnn_j = compute_energy_cmos(r.dnn_layers, m);
    const std::size_t in_l = net.input_layer();
    double later_macs = 0.0;
    for (const auto& c : r.dnn_layers) {
        if (c.layer != in_l) later_macs += c.flops;
    }
    r.energy_dnn_excl_first_j = later_macs * m.e_mac_pj * 1e-12;
    r.ratio_dnn_over_snn = r.energy_snn_j > 0.0 ? r.energy_dnn_j / r.energy_snn_j : 0.0;

    const double total_snn_flops = r.snn_total_mac + r.snn_total_ac;
    for (auto preset : presets) {
        r.neuromorphic.emplace_back(to_string(preset),
                                    compute_energy_neuromorphic(total_snn_flops, T, preset));
    }
    return r;
}

CostReport build_cost_report(const snn::SpikingNetwork& net, const snn::SpikeTrace& trace,
                             std::size_t T, const EnergyModel& m,
                             const std::vector<NeuromorphicPreset>& presets) {
    return assemble_cost_report(net, snn_costs(net, trace, T), T, m, presets);
}

}  // namespace snnkit::energy
