#include "snnkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "snnkit/errors.hpp"

namespace snnkit::analysis {

namespace {

void require_samples(const EmpiricalDistribution& dist, const char* who) {
    if (dist.samples.size() < kMinSamples) {
        throw StatsError(std::string(who) + ": need at least " + std::to_string(kMinSamples) +
                         " samples, got " + std::to_string(dist.samples.size()));
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

EmpiricalDistribution uniform_samples(double mu, std::size_t n, std::uint64_t seed) {
    if (!(mu > 0.0)) throw ArgumentError("uniform_samples: mu must be positive");
    EmpiricalDistribution d;
    d.family = EmpiricalDistribution::Family::uniform;
    d.param = mu;
    d.samples.resize(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, mu);
    for (double& x : d.samples) x = u(rng);
    return d;
}

EmpiricalDistribution exponential_samples(double rate, std::size_t n, std::uint64_t seed) {
    if (!(rate > 0.0)) throw ArgumentError("exponential_samples: rate must be positive");
    EmpiricalDistribution d;
    d.family = EmpiricalDistribution::Family::exponential;
    d.param = rate;
    d.samples.resize(n);
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> e(rate);
    for (double& x : d.samples) x = e(rng);
    return d;
}

double compute_K(const EmpiricalDistribution& dist_d, double mu) {
    if (!(mu > 0.0)) throw ArgumentError("compute_K: mu must be positive");
    require_samples(dist_d, "compute_K");
    double sum = 0.0;
    std::size_t hits = 0;
    for (double d : dist_d.samples) {
        if (d >= 0.0 && d <= mu) {
            sum += d;
            ++hits;
        }
    }
    if (hits == 0) throw EstimationError("compute_K: no sample in [0, mu]");
    return sum / (mu * static_cast<double>(dist_d.samples.size()));
}

double compute_g(const EmpiricalDistribution& dist_s, std::size_t i, std::size_t T,
                 double mu) {
    if (!(mu > 0.0)) throw ArgumentError("compute_g: mu must be positive");
    if (T < 2 || i == 0 || i > T - 1) {
        throw ArgumentError("compute_g: need 1 <= i <= T-1");
    }
    require_samples(dist_s, "compute_g");
    const double lo = (static_cast<double>(i) - 0.5) * mu / static_cast<double>(T);
    const double hi = (static_cast<double>(i) + 0.5) * mu / static_cast<double>(T);
    std::size_t hits = 0;
    for (double s : dist_s.samples) {
        if (s >= lo && s < hi) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(dist_s.samples.size());
}

double t_prime(std::size_t T, double mu) {
    if (T == 0) throw ArgumentError("t_prime: T must be >= 1");
    return (static_cast<double>(T) - 0.5) * mu / static_cast<double>(T);
}

double compute_h(const EmpiricalDistribution& dist_s, std::size_t T, double mu, bool biased) {
    if (!(mu > 0.0)) throw ArgumentError("compute_h: mu must be positive");
    if (T == 0) throw ArgumentError("compute_h: T must be >= 1");
    require_samples(dist_s, "compute_h");
    const auto n = static_cast<double>(dist_s.samples.size());
    const double Td = static_cast<double>(T);
    double acc = 0.0;
    if (biased) {
        // Shifted (half-bin) staircase: bins centered on the step values,
        // tail weight 1 from the last half-bin boundary up to mu.
        const double tp = t_prime(T, mu);
        for (double s : dist_s.samples) {
            if (s < 0.5 * mu / Td) continue;
            if (s >= tp) {
                if (s <= mu) acc += 1.0;
                continue;
            }
            const double i = std::floor(s * Td / mu + 0.5);
            acc += i / Td;
        }
    } else {
        // Unshifted staircase: mu * h' is exactly the expected quantized
        // output, including the saturated tail at weight 1.
        for (double s : dist_s.samples) {
            if (s < mu / Td || s < 0.0) continue;
            if (s >= mu) {
                acc += 1.0;
                continue;
            }
            acc += std::floor(s * Td / mu) / Td;
        }
    }
    return acc / n;
}

double predicted_delta(double K, double h, double mu) {
    if (!(mu > 0.0)) throw ArgumentError("predicted_delta: mu must be positive");
    return mu * (K - h);
}

double predicted_delta_alpha_beta(const EmpiricalDistribution& dist_d,
                                  const EmpiricalDistribution& dist_s, double mu, double alpha,
                                  double beta, std::size_t T) {
    if (!(mu > 0.0)) throw ArgumentError("predicted_delta_alpha_beta: mu must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ArgumentError("predicted_delta_alpha_beta: alpha not in (0,1]");
    }
    if (beta < 0.0) throw ArgumentError("predicted_delta_alpha_beta: beta must be >= 0");
    if (T == 0) throw ArgumentError("predicted_delta_alpha_beta: T must be >= 1");
    require_samples(dist_d, "predicted_delta_alpha_beta");
    require_samples(dist_s, "predicted_delta_alpha_beta");

    const double am = alpha * mu;
    const double Td = static_cast<double>(T);

    // alpha*mu*K(alpha*mu) + E[d 1{alpha*mu < d <= mu}], as one pass.
    double d_terms = 0.0;
    for (double d : dist_d.samples) {
        if (d >= 0.0 && d <= am) d_terms += d;
        else if (d > am && d <= mu) d_terms += d;
    }
    d_terms /= static_cast<double>(dist_d.samples.size());

    // beta * (staircase sum below alpha*mu) + alpha*beta*mu * P(alpha*mu < s <= mu).
    double s_terms = 0.0;
    for (double s : dist_s.samples) {
        if (s >= 0.0 && s < am) {
            s_terms += beta * std::floor(s * Td / am) * am / Td;
        } else if (s > am && s <= mu) {
            s_terms += alpha * beta * mu;
        }
    }
    s_terms /= static_cast<double>(dist_s.samples.size());

    return d_terms - s_terms;
}

double estimate_delta_simulated(const NetworkSpec& dnn_net, const snn::SpikingNetwork& snn_net,
                                const Dataset& data, std::size_t layer, std::size_t T) {
    if (T == 0) throw ArgumentError("estimate_delta_simulated: T must be >= 1");
    if (data.empty()) throw ArgumentError("estimate_delta_simulated: empty dataset");
    if (layer >= dnn_net.layers.size() || layer >= snn_net.layers.size()) {
        throw ArgumentError("estimate_delta_simulated: layer out of range");
    }
    const auto& dl = dnn_net.layers[layer];
    const auto& sl = snn_net.layers[layer];
    if (!dl.thresholded() || !sl.spec.weighted()) {
        throw ArgumentError("estimate_delta_simulated: layer is not a thresholded layer");
    }
    if (!dl.weight.same_shape(sl.spec.weight)) {
        throw DimensionError("estimate_delta_simulated: layer weight shapes differ");
    }

    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& x : data.inputs) {
        ForwardCache cache = forward_cached(dnn_net, x, RunMode::infer, nullptr);
        const Tensor& layer_in = cache.inputs[layer];
        const Tensor& dnn_out = cache.outputs[layer];

        // Teacher forcing: the SNN layer sees the DNN's analog drive at every
        // step, so the comparison is layer-local.
        Tensor drive = sl.spec.kind == LayerKind::dense
                           ? dense_forward(sl.spec.weight, layer_in)
                           : conv2d_forward(sl.spec.weight, layer_in, sl.spec.stride,
                                            sl.spec.pad);
        Tensor u = Tensor::full(drive.shape, static_cast<double>(T) * sl.delta);
        std::vector<std::size_t> spikes(drive.size(), 0);
        for (std::size_t t = 0; t < T; ++t) {
            snn::StepResult step = snn::scaled_if_step(u, drive, sl.vth, sl.beta, sl.lam);
            u = std::move(step.u);
            for (std::size_t k = 0; k < drive.size(); ++k) {
                if (step.spikes.data[k] != 0.0) ++spikes[k];
            }
        }
        const double unit = sl.beta * sl.vth / static_cast<double>(T);
        for (std::size_t k = 0; k < drive.size(); ++k) {
            acc += dnn_out.data[k] - static_cast<double>(spikes[k]) * unit;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

double bootstrap_se(const std::vector<double>& samples,
                    const std::function<double(const std::vector<double>&)>& stat,
                    std::size_t resamples, std::uint64_t seed) {
    if (samples.empty()) throw ArgumentError("bootstrap_se: empty sample set");
    if (resamples < 2) throw ArgumentError("bootstrap_se: need at least 2 resamples");
    const std::size_t n = samples.size();
    std::vector<double> stats(resamples);
    std::vector<double> draw(n);
    for (std::size_t r = 0; r < resamples; ++r) {
        // Independent per-resample streams keep the estimate stable under
        // any future parallel split.
        std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ull * (r + 1));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t k = 0; k < n; ++k) draw[k] = samples[pick(rng)];
        stats[r] = stat(draw);
    }
    const double m = mean_of(stats);
    double ss = 0.0;
    for (double v : stats) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(resamples - 1));
}

}  // namespace snnkit::analysis
