#include "snnkit/convert.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snnkit/errors.hpp"

namespace snnkit::convert {

double compute_loss(const std::vector<double>& P, double mu, double alpha, double beta,
                    std::size_t T) {
    if (!(mu > 0.0)) throw ArgumentError("compute_loss: mu must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("compute_loss: alpha not in (0,1]");
    if (beta < 0.0) throw ArgumentError("compute_loss: beta must be >= 0");
    if (T == 0) throw ArgumentError("compute_loss: T must be >= 1");

    const double am = alpha * mu;
    const double abm = alpha * beta * mu;
    double loss = 0.0;
    for (double p : P) {
        if (p < 0.0) continue;  // both activations emit 0 below zero
        if (p <= am) {
            auto j = static_cast<std::size_t>(
                std::floor(p * static_cast<double>(T) / am));
            if (j > T) j = T;  // guard fp overshoot at p == alpha*mu
            loss += p - static_cast<double>(j) * abm / static_cast<double>(T);
        } else if (p <= mu) {
            loss += p - abm;
        } else {
            loss += mu * (1.0 - alpha * beta);
        }
    }
    return loss;
}

ScanResult find_scaling_factors(const std::vector<double>& P, double mu, std::size_t T) {
    if (!(mu > 0.0)) throw ArgumentError("find_scaling_factors: mu must be positive");
    if (T == 0) throw ArgumentError("find_scaling_factors: T must be >= 1");

    std::vector<double> alphas;
    for (double p : P) {
        if (p > 0.0) alphas.push_back(std::min(p / mu, 1.0));
    }
    std::sort(alphas.begin(), alphas.end());
    alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
    if (alphas.empty()) {
        throw CalibrationError("find_scaling_factors: no positive percentile candidates");
    }

    ScanResult res;
    res.best = ScalePair{1.0, 1.0};
    res.loss_opt = compute_loss(P, mu, 1.0, 1.0, T);
    double best_abs = std::abs(res.loss_opt);

    res.alpha_profile.reserve(alphas.size());
    for (double alpha : alphas) {
        double slice_best_abs = -1.0;
        double slice_best_beta = 0.0;
        for (int bi = 0; bi <= 200; ++bi) {
            const double beta = static_cast<double>(bi) / 100.0;
            const double loss = compute_loss(P, mu, alpha, beta, T);
            const double a = std::abs(loss);
            if (slice_best_abs < 0.0 || a < slice_best_abs) {
                slice_best_abs = a;
                slice_best_beta = beta;
            }
            if (a < best_abs) {  // strict improvement: the first minimum wins
                best_abs = a;
                res.best = ScalePair{alpha, beta};
                res.loss_opt = loss;
            }
        }
        res.alpha_profile.push_back(LandscapePoint{alpha, slice_best_beta, slice_best_abs});
    }

    res.beta_slice.reserve(201);
    for (int bi = 0; bi <= 200; ++bi) {
        const double beta = static_cast<double>(bi) / 100.0;
        res.beta_slice.push_back(
            LandscapePoint{res.best.alpha, beta,
                           std::abs(compute_loss(P, mu, res.best.alpha, beta, T))});
    }
    res.beta_zero = res.best.beta == 0.0;
    return res;
}

std::pair<snn::SpikingNetwork, ConversionPlan> convert_dnn_to_snn(
    const NetworkSpec& net, const dnn::ActivationStats& stats, std::size_t T,
    snn::ConversionMode mode) {
    validate_network(net);
    if (T == 0) throw ArgumentError("convert_dnn_to_snn: T must be >= 1");

    snn::SpikingNetwork out = snn::from_network(net);
    ConversionPlan plan;
    plan.mode = mode;
    plan.T = T;

    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (!l.thresholded()) continue;
        const dnn::LayerStats* ls = stats.find(i);
        if (!ls) {
            throw CalibrationError("convert_dnn_to_snn: no activation stats for layer " +
                                   std::to_string(i));
        }
        const double mu = *l.mu;
        LayerPlan lp;
        lp.layer_index = i;
        lp.mode = mode;
        lp.mu = mu;

        auto& sl = out.layers[i];
        switch (mode) {
            case snn::ConversionMode::naive:
                sl.vth = mu;
                sl.beta = 1.0;
                sl.delta = 0.0;
                break;
            case snn::ConversionMode::max_act_bias:
                if (!(ls->d_max > 0.0)) {
                    throw CalibrationError(
                        "convert_dnn_to_snn: layer " + std::to_string(i) +
                        " never produced a positive activation (d_max <= 0)");
                }
                sl.vth = ls->d_max;
                sl.beta = 1.0;
                sl.delta = sl.vth / (2.0 * static_cast<double>(T));
                break;
            case snn::ConversionMode::scaled: {
                if (ls->M < 0) {
                    throw CalibrationError("convert_dnn_to_snn: layer " + std::to_string(i) +
                                           " has no percentile at or below mu");
                }
                std::vector<double> slice(ls->P.begin(),
                                          ls->P.begin() + static_cast<std::size_t>(ls->M) + 1);
                ScanResult scan = find_scaling_factors(slice, mu, T);
                if (scan.beta_zero) {
                    // The grid may select beta=0, but a spiking layer needs a
                    // positive output scale; refuse to build a silenced net.
                    throw CalibrationError("convert_dnn_to_snn: layer " + std::to_string(i) +
                                           " calibrated to beta=0 (layer would be silenced)");
                }
                sl.vth = scan.best.alpha * mu;
                sl.beta = scan.best.beta;
                sl.delta = 0.0;
                lp.scale = scan.best;
                lp.loss_opt = scan.loss_opt;
                lp.beta_zero_warning = scan.beta_zero;
                lp.alpha_profile = std::move(scan.alpha_profile);
                lp.beta_slice = std::move(scan.beta_slice);
                break;
            }
        }
        sl.lam = 1.0;
        lp.vth = sl.vth;
        lp.delta = sl.delta;
        plan.layers.push_back(std::move(lp));
    }

    snn::validate_spiking_network(out);
    return {std::move(out), std::move(plan)};
}

snn::SpikingNetwork absorb_beta(const snn::SpikingNetwork& input) {
    snn::validate_spiking_network(input);
    snn::SpikingNetwork out = input;
    const std::size_t out_l = out.output_layer();

    // Hidden-layer betas fold into the next weighted layer's weights: the
    // drive w*(beta*vth*s) equals (beta*w)*(vth*s) every step, and firing is
    // independent of beta once the emitted value's scale moves downstream.
    std::size_t prev_weighted = out.layers.size();
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        auto& l = out.layers[i];
        if (!l.spec.weighted()) continue;
        if (prev_weighted < out.layers.size()) {
            const double b = out.layers[prev_weighted].beta;
            if (b != 1.0) {
                for (double& w : l.spec.weight.data) w *= b;
                out.layers[prev_weighted].beta = 1.0;
            }
        }
        prev_weighted = i;
    }

    // The readout's own beta scales the accumulated potential linearly, so it
    // folds into its own weights (delta is zero on readouts by construction;
    // a nonzero one would scale too).
    auto& last = out.layers[out_l];
    if (last.beta != 1.0) {
        for (double& w : last.spec.weight.data) w *= last.beta;
        last.delta *= last.beta;
        last.beta = 1.0;
    }
    return out;
}

}  // namespace snnkit::convert
