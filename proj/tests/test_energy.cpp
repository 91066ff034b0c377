#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "snnkit/energy.hpp"
#include "snnkit/errors.hpp"
#include "snnkit/network.hpp"
#include "snnkit/snn.hpp"

using namespace snnkit;

TEST_CASE("energy model validation and presets") {
    energy::EnergyModel m;
    CHECK_NOTHROW(energy::validate_energy_model(m));
    CHECK_THROWS_AS(energy::validate_energy_model({0.1, 3.2}), ArgumentError);  // mac < ac
    CHECK_THROWS_AS(energy::validate_energy_model({3.2, 0.0}), ArgumentError);

    energy::PresetPair tn = energy::preset_values(energy::NeuromorphicPreset::truenorth);
    CHECK(tn.e_compute == 0.4);
    CHECK(tn.e_static == 0.6);
    energy::PresetPair sp = energy::preset_values(energy::NeuromorphicPreset::spinnaker);
    CHECK(sp.e_compute == 0.64);
    CHECK(sp.e_static == 0.36);

    CHECK(energy::preset_from_string("truenorth") == energy::NeuromorphicPreset::truenorth);
    CHECK(energy::preset_from_string("spinnaker") == energy::NeuromorphicPreset::spinnaker);
    CHECK_THROWS_AS(energy::preset_from_string("loihi"), ConfigError);
    CHECK(energy::preset_from_string(energy::to_string(energy::NeuromorphicPreset::truenorth)) ==
          energy::NeuromorphicPreset::truenorth);
}

TEST_CASE("count_flops_dnn static MAC counts") {
    NetworkSpec net;
    net.input_shape = {1, 6, 6};
    net.layers.push_back(make_conv2d(4, 1, 3, 3, 1, 1, 1.0));  // 4x6x6 out
    net.layers.push_back(make_maxpool2d(2, 2));                // 4x3x3
    net.layers.push_back(make_dense(5, 36, 1.0));
    net.layers.push_back(make_dense(2, 5));

    std::vector<double> flops = energy::count_flops_dnn(net, net.input_shape);
    REQUIRE(flops.size() == 4);
    CHECK(flops[0] == 4 * 6 * 6 * (1 * 3 * 3));  // out positions x kernel volume
    CHECK(flops[1] == 0);                        // pooling is free
    CHECK(flops[2] == 5 * 36);
    CHECK(flops[3] == 2 * 5);
}

TEST_CASE("spiking_activity averages events per neuron") {
    snn::SpikeTrace trace;
    trace.T = 2;
    trace.scale = {0.5, 0.0};
    trace.spikes.resize(2);
    trace.spikes[0].push_back(Tensor({4}, {0.5, 0.0, 0.5, 0.5}));  // 3 events
    trace.spikes[0].push_back(Tensor({4}, {0.0, 0.5, 0.0, 0.0}));  // 1 event
    trace.spikes[1].push_back(Tensor::zeros({2}));
    trace.spikes[1].push_back(Tensor::zeros({2}));
    CHECK(energy::spiking_activity(trace, 0) == doctest::Approx(1.0));  // 4 / 4 neurons
    CHECK(energy::spiking_activity(trace, 1) == doctest::Approx(0.0));
    CHECK_THROWS_AS(energy::spiking_activity(trace, 5), ArgumentError);
}

namespace {

snn::SpikingNetwork conv_chain(std::uint64_t seed) {
    NetworkSpec net;
    net.input_shape = {1, 6, 6};
    net.layers.push_back(make_conv2d(2, 1, 3, 3, 1, 1, 0.8));  // 2x6x6
    net.layers.push_back(make_maxpool2d(2, 2));                // 2x3x3
    net.layers.push_back(make_conv2d(3, 2, 2, 2, 1, 0, 0.8));  // 3x2x2
    net.layers.push_back(make_dense(4, 12));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.7, 0.9);
    for (auto& l : net.layers) {
        for (double& w : l.weight.data) w = u(rng);
    }
    snn::SpikingNetwork s = snn::from_network(net);
    for (auto& l : s.layers) l.vth = 0.35;
    return s;
}

// Brute-force accumulate count for one conv layer: every (input spike,
// covering output position, output channel) triple is one AC.
double brute_conv_acs(const LayerSpec& conv, const std::vector<std::size_t>& in_shape,
                      const std::vector<Tensor>& feed_steps) {
    const std::size_t ic = in_shape[0], ih = in_shape[1], iw = in_shape[2];
    const std::size_t oc = conv.weight.shape[0];
    const std::size_t kh = conv.weight.shape[2], kw = conv.weight.shape[3];
    const std::size_t oh = (ih + 2 * conv.pad - kh) / conv.stride + 1;
    const std::size_t ow = (iw + 2 * conv.pad - kw) / conv.stride + 1;

    std::vector<double> touches(ic * ih * iw, 0.0);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const long y = static_cast<long>(oy * conv.stride + ky) -
                                   static_cast<long>(conv.pad);
                    const long x = static_cast<long>(ox * conv.stride + kx) -
                                   static_cast<long>(conv.pad);
                    if (y < 0 || x < 0 || y >= static_cast<long>(ih) ||
                        x >= static_cast<long>(iw)) {
                        continue;
                    }
                    for (std::size_t c = 0; c < ic; ++c) {
                        touches[(c * ih + static_cast<std::size_t>(y)) * iw +
                                static_cast<std::size_t>(x)] += 1.0;
                    }
                }
            }
        }
    }
    double acs = 0.0;
    for (const Tensor& step : feed_steps) {
        for (std::size_t k = 0; k < step.size(); ++k) {
            if (step.data[k] != 0.0) acs += touches[k] * static_cast<double>(oc);
        }
    }
    return acs;
}

double brute_dense_acs(std::size_t out, const std::vector<Tensor>& feed_steps) {
    double acs = 0.0;
    for (const Tensor& step : feed_steps) {
        for (double v : step.data) {
            if (v != 0.0) acs += static_cast<double>(out);
        }
    }
    return acs;
}

}  // namespace

TEST_CASE("count_flops_snn equals a brute-force event count on a conv chain") {
    snn::SpikingNetwork s = conv_chain(41);
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor x = Tensor::zeros({1, 6, 6});
    for (double& v : x.data) v = u(rng);

    const std::size_t T = 5;
    snn::SnnForwardResult r = snn::snn_forward(s, x, T);
    std::vector<double> flops = energy::count_flops_snn(s, r.trace, T);
    REQUIRE(flops.size() == 4);

    // First weighted layer re-presents the analog input every step: static MACs x T.
    std::vector<double> statics = energy::count_flops_dnn(snn::to_network(s), s.input_shape);
    CHECK(flops[0] == doctest::Approx(statics[0] * T));
    CHECK(flops[1] == 0.0);  // pooling costs nothing

    // Later layers: brute-force fan-out per spike in the feeding trace.
    CHECK(flops[2] == doctest::Approx(brute_conv_acs(s.layers[2].spec, {2, 3, 3},
                                                     r.trace.spikes[1])));
    CHECK(flops[3] == doctest::Approx(brute_dense_acs(4, r.trace.spikes[2])));

    // Sanity: the network actually spiked somewhere.
    CHECK(energy::spiking_activity(r.trace, 0) > 0.0);

    CHECK_THROWS_AS(energy::count_flops_snn(s, r.trace, 0), ArgumentError);
    snn::SpikeTrace broken = r.trace;
    broken.spikes.pop_back();
    CHECK_THROWS_AS(energy::count_flops_snn(s, broken, T), ArgumentError);
}

TEST_CASE("silent hidden layers cost zero accumulates") {
    snn::SpikingNetwork s = conv_chain(47);
    for (auto& l : s.layers) l.vth = 1e9;  // nothing can fire
    Tensor x = Tensor::full({1, 6, 6}, 0.5);
    snn::SnnForwardResult r = snn::snn_forward(s, x, 3);
    std::vector<double> flops = energy::count_flops_snn(s, r.trace, 3);
    CHECK(flops[0] > 0.0);   // analog frontend still pays full MACs
    CHECK(flops[2] == 0.0);
    CHECK(flops[3] == 0.0);
}

TEST_CASE("compute_energy_cmos reference arithmetic") {
    energy::EnergyModel m;  // 3.2 pJ MAC, 0.1 pJ AC
    std::vector<energy::LayerCost> costs{
        {0, energy::FlopKind::mac, 1e6, 0.0},
        {1, energy::FlopKind::ac, 1e8, 0.0},
    };
    const double got = energy::compute_energy_cmos(costs, m);
    const double want = (1e6 * 3.2 + 1e8 * 0.1) * 1e-12;  // 13.2 microjoules
    CHECK(got == want);
    CHECK(got == doctest::Approx(13.2e-6).epsilon(1e-12));
}

TEST_CASE("compute_energy_neuromorphic reference arithmetic") {
    const double tn = energy::compute_energy_neuromorphic(100.0, 2,
                                                          energy::NeuromorphicPreset::truenorth);
    CHECK(tn == 100.0 * 0.4 + 2.0 * 0.6);
    CHECK(tn == doctest::Approx(41.2).epsilon(1e-14));
    const double sp = energy::compute_energy_neuromorphic(100.0, 2,
                                                          energy::NeuromorphicPreset::spinnaker);
    CHECK(sp == 100.0 * 0.64 + 2.0 * 0.36);
    CHECK(sp == doctest::Approx(64.72).epsilon(1e-14));
    CHECK_THROWS_AS(energy::compute_energy_neuromorphic(100.0, 0,
                                                        energy::NeuromorphicPreset::truenorth),
                    ArgumentError);
    CHECK_THROWS_AS(energy::compute_energy_neuromorphic(-1.0, 2,
                                                        energy::NeuromorphicPreset::truenorth),
                    ArgumentError);
}

TEST_CASE("build_cost_report aggregates totals, ratio and presets") {
    snn::SpikingNetwork s = conv_chain(53);
    Tensor x = Tensor::full({1, 6, 6}, 0.6);
    const std::size_t T = 4;
    snn::SnnForwardResult r = snn::snn_forward(s, x, T);

    energy::EnergyModel m;
    energy::CostReport rep = energy::build_cost_report(
        s, r.trace, T, m,
        {energy::NeuromorphicPreset::truenorth, energy::NeuromorphicPreset::spinnaker});

    CHECK(rep.T == T);
    REQUIRE(rep.snn_layers.size() == 4);
    REQUIRE(rep.dnn_layers.size() == 4);

    double mac = 0.0, ac = 0.0, dnn_mac = 0.0;
    for (const auto& c : rep.snn_layers) {
        (c.kind == energy::FlopKind::mac ? mac : ac) += c.flops;
    }
    for (const auto& c : rep.dnn_layers) dnn_mac += c.flops;
    CHECK(rep.snn_total_mac == mac);
    CHECK(rep.snn_total_ac == ac);
    CHECK(rep.dnn_total_mac == dnn_mac);

    CHECK(rep.energy_snn_j == energy::compute_energy_cmos(rep.snn_layers, m));
    CHECK(rep.energy_dnn_j == energy::compute_energy_cmos(rep.dnn_layers, m));
    CHECK(rep.ratio_dnn_over_snn == doctest::Approx(rep.energy_dnn_j / rep.energy_snn_j));

    // Excluding the always-MAC frontend keeps only the later layers.
    double later = 0.0;
    for (const auto& c : rep.dnn_layers) {
        if (c.layer != 0) later += c.flops;
    }
    CHECK(rep.energy_dnn_excl_first_j == doctest::Approx(later * 3.2 * 1e-12));

    REQUIRE(rep.neuromorphic.size() == 2);
    CHECK(rep.neuromorphic[0].first == "truenorth");
    const double total_flops = rep.snn_total_mac + rep.snn_total_ac;
    CHECK(rep.neuromorphic[0].second ==
          doctest::Approx(energy::compute_energy_neuromorphic(
              total_flops, T, energy::NeuromorphicPreset::truenorth)));
    CHECK(rep.neuromorphic[1].first == "spinnaker");

    // SNN spikes_per_neuron mirrors spiking_activity; DNN entries stay 0.
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(rep.snn_layers[i].spikes_per_neuron ==
              doctest::Approx(energy::spiking_activity(r.trace, i)));
        CHECK(rep.dnn_layers[i].spikes_per_neuron == 0.0);
    }
}

TEST_CASE("more time steps can only add cost") {
    snn::SpikingNetwork s = conv_chain(59);
    Tensor x = Tensor::full({1, 6, 6}, 0.55);
    energy::EnergyModel m;
    double prev = 0.0;
    for (std::size_t T : {std::size_t{1}, std::size_t{2}, std::size_t{4}, std::size_t{8}}) {
        snn::SnnForwardResult r = snn::snn_forward(s, x, T);
        energy::CostReport rep = energy::build_cost_report(s, r.trace, T, m, {});
        CHECK(rep.energy_snn_j >= prev);
        prev = rep.energy_snn_j;
    }
}
