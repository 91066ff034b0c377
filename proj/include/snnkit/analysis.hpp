#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "snnkit/dataset.hpp"
#include "snnkit/network.hpp"
#include "snnkit/snn.hpp"

namespace snnkit::analysis {

// Every estimator refuses to run on fewer samples than this; integrals need
// principled Monte-Carlo tolerances.
inline constexpr std::size_t kMinSamples = 10000;

struct EmpiricalDistribution {
    enum class Family { custom, uniform, exponential };
    std::vector<double> samples;
    Family family = Family::custom;
    double param = 0.0;  // uniform: upper bound; exponential: rate
};

// Seeded generators for the documented synthetic families.
EmpiricalDistribution uniform_samples(double mu, std::size_t n, std::uint64_t seed);
EmpiricalDistribution exponential_samples(double rate, std::size_t n, std::uint64_t seed);

// K(mu) = (1/mu) * E[d * 1{0 <= d <= mu}]; in [0,1]. EstimationError when no
// sample lands in [0, mu].
double compute_K(const EmpiricalDistribution& dist_d, double mu);

// g_i(T,mu): fraction of samples in [(i-1/2)mu/T, (i+1/2)mu/T), 1 <= i <= T-1.
double compute_g(const EmpiricalDistribution& dist_s, std::size_t i, std::size_t T, double mu);

// Last half-bin boundary of the shifted staircase.
double t_prime(std::size_t T, double mu);  // (T - 1/2) * mu / T

// biased=true:  h(T,mu)  = sum_{i=1}^{T-1} (i/T) g_i + mass[T', mu]
// biased=false: h'(T,mu) = sum_{i=1}^{T-1} (i/T) mass[i*mu/T, (i+1)*mu/T)
//                          + mass[mu, inf)   (keeps mu*h' equal to the exact
//                          unshifted-staircase expectation)
double compute_h(const EmpiricalDistribution& dist_s, std::size_t T, double mu, bool biased);

// Eq-style first-order prediction: mu * (K - h).
double predicted_delta(double K, double h, double mu);

// Plug-in estimate of
//   alpha*mu*(K(alpha*mu) - beta*h'(T, alpha*mu))
//   + E[d * 1{alpha*mu < d <= mu}] - alpha*beta*mu * P(alpha*mu < s <= mu)
// where the h' sum uses staircase bins scaled to the actual threshold
// alpha*mu (sum term only; the saturated region is the explicit last term).
// For bounded samples this equals E[clip(d,0,mu)] - E[beta-scaled staircase(s)].
double predicted_delta_alpha_beta(const EmpiricalDistribution& dist_d,
                                  const EmpiricalDistribution& dist_s, double mu, double alpha,
                                  double beta, std::size_t T);

// Layer-local teacher forcing: both networks see the DNN's input to `layer`;
// the SNN layer receives that analog drive at every step. Returns the mean
// over neurons and inputs of (DNN post-activation - SNN time-averaged output).
double estimate_delta_simulated(const NetworkSpec& dnn_net, const snn::SpikingNetwork& snn_net,
                                const Dataset& data, std::size_t layer, std::size_t T);

// Seeded nonparametric bootstrap standard error of an arbitrary statistic.
double bootstrap_se(const std::vector<double>& samples,
                    const std::function<double(const std::vector<double>&)>& stat,
                    std::size_t resamples = 200, std::uint64_t seed = 1);

struct ErrorReport {
    std::size_t layer = 0;
    std::size_t T = 1;
    double mu = 0.0;
    double alpha = 1.0;
    double beta = 1.0;
    double K = 0.0;
    double K_se = 0.0;
    std::vector<double> g;  // g_1 .. g_{T-1}
    double h = 0.0;
    double h_se = 0.0;
    double h_prime = 0.0;
    double h_prime_se = 0.0;
    double T_prime = 0.0;
    double delta_predicted = 0.0;   // mu*(K - h)
    double delta_alpha_beta = 0.0;  // plug-in estimate above
    double delta_empirical = 0.0;   // simulated, teacher-forced
    double mass_above_mu_d = 0.0;   // diagnostics: mass the approximations drop
    double mass_above_mu_s = 0.0;
};

}  // namespace snnkit::analysis
