#include "snnkit/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "snnkit/analysis.hpp"
#include "snnkit/convert.hpp"
#include "snnkit/energy.hpp"
#include "snnkit/errors.hpp"
#include "snnkit/snn.hpp"
#include "snnkit/weights_io.hpp"

namespace snnkit::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Deterministic seed derivations from the master seed.
constexpr std::uint64_t kSaltTestData = 1000003;
constexpr std::uint64_t kSaltInit = 99991;
constexpr std::uint64_t kSaltStats = 31337;
constexpr std::uint64_t kSaltFinetune = 500009;
constexpr std::uint64_t kSaltInject = 777;
constexpr std::uint64_t kSaltBootstrap = 4242;

[[noreturn]] void cfg_fail(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + where + ": " + what);
}

void need_object(const json& j, const std::string& where) {
    if (!j.is_object()) cfg_fail(where, "expected an object");
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) cfg_fail(where, "unknown key '" + it.key() + "'");
    }
}

double get_num(const json& obj, const std::string& where, const char* key, double dflt) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_number()) cfg_fail(where + "." + key, "expected a number");
    return v.get<double>();
}

std::uint64_t get_count(const json& obj, const std::string& where, const char* key,
                        std::uint64_t dflt) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        cfg_fail(where + "." + key, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::string get_str(const json& obj, const std::string& where, const char* key,
                    const std::string& dflt) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_string()) cfg_fail(where + "." + key, "expected a string");
    return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& where, const char* key, bool dflt) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_boolean()) cfg_fail(where + "." + key, "expected a boolean");
    return v.get<bool>();
}

dnn::TrainConfig parse_train(const json& obj, const std::string& where,
                             std::uint64_t master_seed) {
    need_object(obj, where);
    check_keys(obj, where,
               {"epochs", "lr", "decay", "milestones", "batch_size", "dropout", "momentum"});
    dnn::TrainConfig cfg;
    cfg.epochs = get_count(obj, where, "epochs", cfg.epochs);
    cfg.lr = get_num(obj, where, "lr", cfg.lr);
    cfg.decay = get_num(obj, where, "decay", cfg.decay);
    cfg.batch_size = get_count(obj, where, "batch_size", cfg.batch_size);
    cfg.dropout = get_num(obj, where, "dropout", cfg.dropout);
    cfg.momentum = get_num(obj, where, "momentum", cfg.momentum);
    cfg.seed = master_seed;
    if (obj.contains("milestones")) {
        const json& m = obj.at("milestones");
        if (!m.is_array()) cfg_fail(where + ".milestones", "expected an array of fractions");
        cfg.milestones.clear();
        for (const auto& v : m) {
            if (!v.is_number()) cfg_fail(where + ".milestones", "expected numbers");
            cfg.milestones.push_back(v.get<double>());
        }
    }
    try {
        dnn::validate_train_config(cfg);
    } catch (const Error& e) {
        cfg_fail(where, e.what());
    }
    return cfg;
}

NetworkSpec parse_network(const json& obj) {
    const std::string where = "network";
    need_object(obj, where);
    check_keys(obj, where, {"input", "layers"});
    if (!obj.contains("input") || !obj.at("input").is_array() || obj.at("input").empty()) {
        cfg_fail(where + ".input", "expected a non-empty array of dimensions");
    }
    NetworkSpec net;
    for (const auto& d : obj.at("input")) {
        if (!d.is_number_integer() || d.get<std::int64_t>() <= 0) {
            cfg_fail(where + ".input", "dimensions must be positive integers");
        }
        net.input_shape.push_back(d.get<std::size_t>());
    }
    if (!obj.contains("layers") || !obj.at("layers").is_array() || obj.at("layers").empty()) {
        cfg_fail(where + ".layers", "expected a non-empty array");
    }

    std::vector<std::size_t> cur = net.input_shape;
    std::size_t idx = 0;
    for (const auto& lj : obj.at("layers")) {
        const std::string lw = where + ".layers[" + std::to_string(idx) + "]";
        need_object(lj, lw);
        const std::string type = get_str(lj, lw, "type", "");
        LayerSpec layer;
        if (type == "dense") {
            check_keys(lj, lw, {"type", "units"});
            const auto units = get_count(lj, lw, "units", 0);
            if (units == 0) cfg_fail(lw, "dense layers need units >= 1");
            layer = make_dense(units, shape_size(cur));
        } else if (type == "conv2d") {
            check_keys(lj, lw, {"type", "filters", "kernel", "stride", "pad"});
            const auto filters = get_count(lj, lw, "filters", 0);
            const auto kernel = get_count(lj, lw, "kernel", 0);
            if (filters == 0 || kernel == 0) cfg_fail(lw, "conv2d needs filters and kernel >= 1");
            if (cur.size() != 3) cfg_fail(lw, "conv2d input must be rank-3 {channels, h, w}");
            layer = make_conv2d(filters, cur[0], kernel, kernel,
                                get_count(lj, lw, "stride", 1), get_count(lj, lw, "pad", 0));
        } else if (type == "maxpool2d") {
            check_keys(lj, lw, {"type", "pool", "pool_stride"});
            const auto pool = get_count(lj, lw, "pool", 2);
            layer = make_maxpool2d(pool, get_count(lj, lw, "pool_stride", pool));
        } else if (type == "dropout") {
            check_keys(lj, lw, {"type", "rate"});
            layer = make_dropout(get_num(lj, lw, "rate", 0.5));
        } else {
            cfg_fail(lw, "unknown layer type '" + type + "'");
        }
        try {
            cur = layer_output_shape(layer, cur);
        } catch (const Error& e) {
            cfg_fail(lw, e.what());
        }
        net.layers.push_back(std::move(layer));
        ++idx;
    }

    // Every weighted layer except the readout carries a trainable ceiling.
    std::size_t last_weighted = net.layers.size();
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        if (net.layers[i].weighted()) {
            last_weighted = i;
            break;
        }
    }
    if (last_weighted == net.layers.size()) cfg_fail(where, "need at least one weighted layer");
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].weighted() && i != last_weighted) net.layers[i].mu = 1.0;
    }
    return net;
}

DatasetConfig parse_dataset(const json& obj) {
    const std::string where = "dataset";
    need_object(obj, where);
    check_keys(obj, where,
               {"kind", "classes", "dim", "train_count", "test_count", "separation", "noise",
                "train_images", "train_labels", "test_images", "test_labels", "normalize"});
    DatasetConfig d;
    d.kind = get_str(obj, where, "kind", d.kind);
    d.classes = get_count(obj, where, "classes", d.classes);
    d.dim = get_count(obj, where, "dim", d.dim);
    d.train_count = get_count(obj, where, "train_count", d.train_count);
    d.test_count = get_count(obj, where, "test_count", d.test_count);
    d.separation = get_num(obj, where, "separation", d.separation);
    d.noise = get_num(obj, where, "noise", d.noise);
    d.train_images = get_str(obj, where, "train_images", "");
    d.train_labels = get_str(obj, where, "train_labels", "");
    d.test_images = get_str(obj, where, "test_images", "");
    d.test_labels = get_str(obj, where, "test_labels", "");
    d.normalize = get_bool(obj, where, "normalize", true);
    if (d.kind == "blobs" || d.kind == "arcs") {
        if (d.train_count == 0 || d.test_count == 0) {
            cfg_fail(where, "synthetic datasets need train_count and test_count >= 1");
        }
    } else if (d.kind == "idx") {
        const std::pair<const char*, const std::string*> idx_paths[] = {
            {"train_images", &d.train_images},
            {"train_labels", &d.train_labels},
            {"test_images", &d.test_images},
            {"test_labels", &d.test_labels}};
        for (const auto& [key, path] : idx_paths) {
            if (path->empty()) cfg_fail(where, std::string("idx datasets need ") + key);
            if (!fs::exists(*path)) {
                cfg_fail(where + "." + std::string(key), "path '" + *path + "' does not exist");
            }
        }
    } else {
        cfg_fail(where + ".kind", "expected blobs, arcs, or idx");
    }
    return d;
}

EnergyConfig parse_energy(const json& obj) {
    const std::string where = "energy";
    need_object(obj, where);
    check_keys(obj, where, {"e_mac_pj", "e_ac_pj", "presets"});
    EnergyConfig e;
    e.e_mac_pj = get_num(obj, where, "e_mac_pj", e.e_mac_pj);
    e.e_ac_pj = get_num(obj, where, "e_ac_pj", e.e_ac_pj);
    if (obj.contains("presets")) {
        const json& p = obj.at("presets");
        if (!p.is_array()) cfg_fail(where + ".presets", "expected an array of names");
        e.presets.clear();
        for (const auto& v : p) {
            if (!v.is_string()) cfg_fail(where + ".presets", "expected strings");
            energy::preset_from_string(v.get<std::string>());  // validates
            e.presets.push_back(v.get<std::string>());
        }
    }
    if (!(e.e_mac_pj > e.e_ac_pj && e.e_ac_pj > 0.0)) {
        cfg_fail(where, "need e_mac_pj > e_ac_pj > 0");
    }
    return e;
}

AnalyzeConfig parse_analyze(const json& obj) {
    const std::string where = "analyze";
    need_object(obj, where);
    check_keys(obj, where, {"t_sweep", "inject", "sample_count", "resamples"});
    AnalyzeConfig a;
    if (obj.contains("t_sweep")) {
        const json& t = obj.at("t_sweep");
        if (!t.is_array() || t.empty()) cfg_fail(where + ".t_sweep", "expected a non-empty array");
        a.t_sweep.clear();
        for (const auto& v : t) {
            if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
                cfg_fail(where + ".t_sweep", "entries must be integers >= 1");
            }
            a.t_sweep.push_back(v.get<std::size_t>());
        }
    }
    a.inject = get_str(obj, where, "inject", a.inject);
    if (a.inject != "none" && a.inject != "uniform") {
        cfg_fail(where + ".inject", "expected none or uniform");
    }
    a.sample_count = get_count(obj, where, "sample_count", a.sample_count);
    a.resamples = get_count(obj, where, "resamples", a.resamples);
    if (a.resamples < 2) cfg_fail(where + ".resamples", "need at least 2");
    return a;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(8) << std::setfill('0') << v;
    return os.str();
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw ArtifactError("short write to '" + path + "'");
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// --- artifact layout -------------------------------------------------------

struct Paths {
    std::string dir;
    std::string in(const std::string& name) const { return dir + "/" + name; }
};

constexpr const char* kDnnWeights = "dnn_weights.bin";
constexpr const char* kDnnLog = "dnn_train_log.json";
constexpr const char* kSnnWeights = "snn_weights.bin";
constexpr const char* kPlan = "conversion_plan.json";
constexpr const char* kFinetunedWeights = "finetuned_weights.bin";
constexpr const char* kFinetuneLog = "finetune_log.json";
constexpr const char* kMetrics = "metrics.json";
constexpr const char* kCostCsv = "cost_report.csv";
constexpr const char* kErrorJson = "error_report.json";
constexpr const char* kErrorCsv = "error_report.csv";
constexpr const char* kEnergyJson = "energy_report.json";
constexpr const char* kEnergyCsv = "energy_report.csv";
constexpr const char* kManifest = "manifest.json";

Paths paths_for(const ExperimentConfig& cfg) {
    Paths p{effective_output_dir(cfg)};
    fs::create_directories(p.dir);
    return p;
}

std::string dnn_weights_path(const ExperimentConfig& cfg, const Paths& p) {
    return cfg.weights_path.empty() ? p.in(kDnnWeights) : cfg.weights_path;
}

// Fine-tuned artifact wins when both exist and no explicit override is given.
std::string spiking_weights_path(const ExperimentConfig& cfg, const Paths& p) {
    if (!cfg.spiking_weights_path.empty()) return cfg.spiking_weights_path;
    const std::string tuned = p.in(kFinetunedWeights);
    return fs::exists(tuned) ? tuned : p.in(kSnnWeights);
}

// --- manifest --------------------------------------------------------------

class StageTimer {
  public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

void record_stage(const Paths& p, const std::string& cfg_hash, const std::string& stage,
                  double wall_ms, const std::vector<std::string>& files) {
    json m;
    {
        std::ifstream in(p.in(kManifest));
        if (in) {
            try {
                in >> m;
            } catch (...) {
                m = json();
            }
        }
    }
    if (!m.is_object() || !m.contains("config_hash") || m["config_hash"] != cfg_hash) {
        m = json{{"schema_version", kSchemaVersion},
                 {"tool_version", kToolVersion},
                 {"config_hash", cfg_hash},
                 {"stages", json::array()}};
    }
    json entry{{"name", stage}, {"wall_ms", wall_ms}, {"artifacts", json::array()}};
    for (const auto& f : files) {
        entry["artifacts"].push_back(json{{"path", f}, {"crc32", hex32(file_crc32(p.in(f)))}});
    }
    auto& stages = m["stages"];
    bool replaced = false;
    for (auto& s : stages) {
        if (s.is_object() && s.value("name", "") == stage) {
            s = entry;
            replaced = true;
            break;
        }
    }
    if (!replaced) stages.push_back(entry);
    write_text(p.in(kManifest), dump(m));
}

// --- shared pieces ---------------------------------------------------------

json epoch_log_json(const std::vector<dnn::EpochLog>& log) {
    json arr = json::array();
    for (const auto& e : log) {
        arr.push_back(json{{"epoch", e.epoch},
                           {"lr", e.lr},
                           {"loss", e.loss},
                           {"accuracy", e.accuracy},
                           {"mu", e.mu}});
    }
    return arr;
}

snn::ConversionMode mode_of(const ExperimentConfig& cfg) {
    return snn::conversion_mode_from_string(cfg.mode);
}

energy::EnergyModel energy_model_of(const ExperimentConfig& cfg) {
    return energy::EnergyModel{cfg.energy.e_mac_pj, cfg.energy.e_ac_pj};
}

std::vector<energy::NeuromorphicPreset> presets_of(const ExperimentConfig& cfg) {
    std::vector<energy::NeuromorphicPreset> out;
    for (const auto& name : cfg.energy.presets) out.push_back(energy::preset_from_string(name));
    return out;
}

void check_dataset_shape(const std::vector<std::size_t>& net_input, const Dataset& data,
                         const char* who, bool artifact_side) {
    if (data.empty()) throw ConfigError(std::string(who) + ": dataset is empty");
    if (data.inputs.front().shape != net_input) {
        const std::string msg = std::string(who) + ": network input shape does not match the dataset";
        if (artifact_side) throw ArtifactError(msg);
        throw MismatchError(msg);
    }
}

// Per-thresholded-layer pre-activation samples from an inference pass.
std::vector<std::pair<std::size_t, std::vector<double>>> collect_preacts(const NetworkSpec& net,
                                                                         const Dataset& data) {
    std::vector<std::pair<std::size_t, std::vector<double>>> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].thresholded()) out.emplace_back(i, std::vector<double>{});
    }
    for (const auto& x : data.inputs) {
        ForwardCache cache = forward_cached(net, x, RunMode::infer, nullptr);
        for (auto& [layer, samples] : out) {
            const auto& t = cache.preacts[layer];
            samples.insert(samples.end(), t.data.begin(), t.data.end());
        }
    }
    return out;
}

struct LayerErrorEntry {
    analysis::ErrorReport rep;
    bool has_alpha_beta = false;  // vth <= mu, so the (alpha, beta) prediction applies
};

LayerErrorEntry build_layer_error(const NetworkSpec& dnn_net,
                                  const snn::SpikingNetwork& snn_net, const Dataset& data,
                                  const analysis::EmpiricalDistribution& dist,
                                  std::size_t layer, std::size_t T, std::size_t resamples,
                                  std::uint64_t seed) {
    LayerErrorEntry e;
    auto& r = e.rep;
    r.layer = layer;
    r.T = T;
    r.mu = *dnn_net.layers[layer].mu;
    const auto& sl = snn_net.layers[layer];
    r.beta = sl.beta;
    r.alpha = sl.vth / r.mu;
    e.has_alpha_beta = r.alpha <= 1.0 + 1e-12;
    if (e.has_alpha_beta) r.alpha = std::min(r.alpha, 1.0);

    auto stat_dist = [](const std::vector<double>& v) {
        analysis::EmpiricalDistribution d;
        d.samples = v;
        return d;
    };
    r.K = analysis::compute_K(dist, r.mu);
    r.K_se = analysis::bootstrap_se(
        dist.samples,
        [&](const std::vector<double>& v) { return analysis::compute_K(stat_dist(v), r.mu); },
        resamples, seed);
    for (std::size_t i = 1; i < T; ++i) r.g.push_back(analysis::compute_g(dist, i, T, r.mu));
    r.h = analysis::compute_h(dist, T, r.mu, true);
    r.h_se = analysis::bootstrap_se(
        dist.samples,
        [&](const std::vector<double>& v) {
            return analysis::compute_h(stat_dist(v), T, r.mu, true);
        },
        resamples, seed + 1);
    r.h_prime = analysis::compute_h(dist, T, r.mu, false);
    r.h_prime_se = analysis::bootstrap_se(
        dist.samples,
        [&](const std::vector<double>& v) {
            return analysis::compute_h(stat_dist(v), T, r.mu, false);
        },
        resamples, seed + 2);
    r.T_prime = analysis::t_prime(T, r.mu);
    r.delta_predicted = analysis::predicted_delta(r.K, r.h, r.mu);
    if (e.has_alpha_beta) {
        r.delta_alpha_beta =
            analysis::predicted_delta_alpha_beta(dist, dist, r.mu, r.alpha, r.beta, T);
    }
    r.delta_empirical = analysis::estimate_delta_simulated(dnn_net, snn_net, data, layer, T);
    std::size_t above = 0;
    for (double d : dist.samples) {
        if (d > r.mu) ++above;
    }
    r.mass_above_mu_d = static_cast<double>(above) / static_cast<double>(dist.samples.size());
    r.mass_above_mu_s = r.mass_above_mu_d;  // layer-local approximation f_S ~ f_D
    return e;
}

json layer_error_json(const LayerErrorEntry& e) {
    const auto& r = e.rep;
    json j{{"layer", r.layer},
           {"T", r.T},
           {"mu", r.mu},
           {"alpha", r.alpha},
           {"beta", r.beta},
           {"K", r.K},
           {"K_se", r.K_se},
           {"g", r.g},
           {"h", r.h},
           {"h_se", r.h_se},
           {"h_prime", r.h_prime},
           {"h_prime_se", r.h_prime_se},
           {"t_prime", r.T_prime},
           {"delta_predicted", r.delta_predicted},
           {"delta_empirical", r.delta_empirical},
           {"mass_above_mu_d", r.mass_above_mu_d},
           {"mass_above_mu_s", r.mass_above_mu_s}};
    if (e.has_alpha_beta) j["delta_alpha_beta"] = r.delta_alpha_beta;
    else j["delta_alpha_beta"] = nullptr;
    return j;
}

void append_error_csv(std::string& csv, const LayerErrorEntry& e) {
    const auto& r = e.rep;
    auto row = [&](const std::string& quantity, double value, const std::string& se) {
        csv += std::to_string(r.layer) + "," + std::to_string(r.T) + "," + quantity + "," +
               fmt(value) + "," + se + "\n";
    };
    row("K", r.K, fmt(r.K_se));
    for (std::size_t i = 0; i < r.g.size(); ++i) row("g" + std::to_string(i + 1), r.g[i], "");
    row("h", r.h, fmt(r.h_se));
    row("h_prime", r.h_prime, fmt(r.h_prime_se));
    row("t_prime", r.T_prime, "");
    row("delta_predicted", r.delta_predicted, "");
    if (e.has_alpha_beta) row("delta_alpha_beta", r.delta_alpha_beta, "");
    row("delta_empirical", r.delta_empirical, "");
    row("mass_above_mu_d", r.mass_above_mu_d, "");
    row("mass_above_mu_s", r.mass_above_mu_s, "");
}

// Definitions the reports rely on, spelled out so exported numbers are
// self-describing.
json report_definitions() {
    return json{
        {"t_prime", "(T - 0.5) * mu / T, the last half-bin boundary of the shifted staircase"},
        {"h", "sum_{i=1}^{T-1} (i/T) g_i + mass[t_prime, mu]"},
        {"h_prime",
         "sum_{i=1}^{T-1} (i/T) mass[i*mu/T, (i+1)*mu/T) + mass[mu, inf); mu*h_prime is the "
         "exact unshifted-staircase expectation"},
        {"dnn_energy", "every DNN FLOP is costed at e_mac; energy_dnn_excl_first_j restates the "
                       "total without the first weighted layer"},
        {"surrogate_window", "finetuning's boxcar window is [0, 2*vth] with the live per-layer "
                             "threshold"}};
}

energy::CostReport averaged_cost_report(const snn::SpikingNetwork& net, const Dataset& data,
                                        std::size_t T, const energy::EnergyModel& m,
                                        const std::vector<energy::NeuromorphicPreset>& presets) {
    std::vector<energy::LayerCost> acc;
    for (const auto& x : data.inputs) {
        snn::SnnForwardResult r = snn::snn_forward(net, x, T);
        std::vector<energy::LayerCost> costs = energy::snn_costs(net, r.trace, T);
        if (acc.empty()) {
            acc = std::move(costs);
        } else {
            for (std::size_t i = 0; i < acc.size(); ++i) {
                acc[i].flops += costs[i].flops;
                acc[i].spikes_per_neuron += costs[i].spikes_per_neuron;
            }
        }
    }
    const auto n = static_cast<double>(data.size());
    for (auto& c : acc) {
        c.flops /= n;
        c.spikes_per_neuron /= n;
    }
    return energy::assemble_cost_report(net, std::move(acc), T, m, presets);
}

json cost_report_json(const energy::CostReport& r) {
    auto layers = [](const std::vector<energy::LayerCost>& cs) {
        json arr = json::array();
        for (const auto& c : cs) {
            arr.push_back(json{{"layer", c.layer},
                               {"kind", c.kind == energy::FlopKind::mac ? "mac" : "ac"},
                               {"flops", c.flops},
                               {"spikes_per_neuron", c.spikes_per_neuron}});
        }
        return arr;
    };
    json neuro = json::object();
    for (const auto& [name, e] : r.neuromorphic) neuro[name] = e;
    return json{{"T", r.T},
                {"snn_layers", layers(r.snn_layers)},
                {"dnn_layers", layers(r.dnn_layers)},
                {"snn_total_mac", r.snn_total_mac},
                {"snn_total_ac", r.snn_total_ac},
                {"dnn_total_mac", r.dnn_total_mac},
                {"energy_snn_j", r.energy_snn_j},
                {"energy_dnn_j", r.energy_dnn_j},
                {"energy_dnn_excl_first_j", r.energy_dnn_excl_first_j},
                {"ratio_dnn_over_snn", r.ratio_dnn_over_snn},
                {"neuromorphic", neuro}};
}

std::string cost_report_csv(const energy::CostReport& r) {
    std::string csv = "side,layer,kind,flops,spikes_per_neuron\n";
    for (const auto& c : r.snn_layers) {
        csv += "snn," + std::to_string(c.layer) + "," +
               (c.kind == energy::FlopKind::mac ? "mac" : "ac") + "," + fmt(c.flops) + "," +
               fmt(c.spikes_per_neuron) + "\n";
    }
    for (const auto& c : r.dnn_layers) {
        csv += "dnn," + std::to_string(c.layer) + ",mac," + fmt(c.flops) + ",\n";
    }
    return csv;
}

snnkit::SnnArtifact load_checked_snn(const ExperimentConfig& cfg, const std::string& path) {
    snnkit::SnnArtifact art = load_snn_weights(path);
    if (art.T != cfg.T) {
        throw MismatchError("'" + path + "' was produced for T=" + std::to_string(art.T) +
                            " but the run requests T=" + std::to_string(cfg.T) +
                            "; re-run calibrate-convert or change T");
    }
    return art;
}

}  // namespace

// --- config ----------------------------------------------------------------

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json root;
    try {
        in >> root;
    } catch (const std::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    need_object(root, "root");
    check_keys(root, "root",
               {"schema_version", "seed", "output_dir", "T", "mode", "dataset", "network",
                "train", "finetune", "energy", "analyze"});
    const auto schema = get_count(root, "root", "schema_version", kSchemaVersion);
    if (schema != static_cast<std::uint64_t>(kSchemaVersion)) {
        cfg_fail("root.schema_version", "unsupported version " + std::to_string(schema));
    }

    ExperimentConfig cfg;
    cfg.seed = get_count(root, "root", "seed", cfg.seed);
    cfg.output_dir = get_str(root, "root", "output_dir", cfg.output_dir);
    cfg.T = get_count(root, "root", "T", cfg.T);
    if (cfg.T == 0) cfg_fail("root.T", "must be >= 1");
    cfg.mode = get_str(root, "root", "mode", cfg.mode);
    snn::conversion_mode_from_string(cfg.mode);  // validates

    if (!root.contains("network")) cfg_fail("root", "missing required key 'network'");
    cfg.network = parse_network(root.at("network"));
    if (root.contains("dataset")) cfg.dataset = parse_dataset(root.at("dataset"));
    if (root.contains("train")) cfg.train = parse_train(root.at("train"), "train", cfg.seed);
    else cfg.train.seed = cfg.seed;
    if (root.contains("finetune")) {
        cfg.finetune = parse_train(root.at("finetune"), "finetune", cfg.seed + kSaltFinetune);
    } else {
        cfg.finetune.seed = cfg.seed + kSaltFinetune;
    }
    if (root.contains("energy")) cfg.energy = parse_energy(root.at("energy"));
    if (root.contains("analyze")) cfg.analyze = parse_analyze(root.at("analyze"));

    cfg.config_hash = hex64(fnv1a(root.dump()));
    return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const CliOverrides& o) {
    if (o.output_dir) cfg.output_dir = *o.output_dir;
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.train.seed = *o.seed;
        cfg.finetune.seed = *o.seed + kSaltFinetune;
    }
    if (o.T) {
        if (*o.T == 0) throw ConfigError("--T must be >= 1");
        cfg.T = *o.T;
    }
    if (o.mode) {
        snn::conversion_mode_from_string(*o.mode);
        cfg.mode = *o.mode;
    }
    if (o.inject) {
        if (*o.inject != "none" && *o.inject != "uniform") {
            throw ConfigError("--inject expects none or uniform");
        }
        cfg.analyze.inject = *o.inject;
    }
    if (o.weights_path) cfg.weights_path = *o.weights_path;
    if (o.spiking_weights_path) cfg.spiking_weights_path = *o.spiking_weights_path;
    if (o.output_dir || o.seed || o.T || o.mode || o.inject) {
        // Overrides change the effective experiment; fold them into the hash
        // so manifests from different settings never mix.
        json j{{"base", cfg.config_hash},      {"seed", cfg.seed},
               {"T", cfg.T},                   {"mode", cfg.mode},
               {"inject", cfg.analyze.inject}, {"output_dir", cfg.output_dir}};
        cfg.config_hash = hex64(fnv1a(j.dump()));
    }
}

std::string effective_output_dir(const ExperimentConfig& cfg) {
    fs::path dir = cfg.output_dir.empty() ? fs::path("out") : fs::path(cfg.output_dir);
    if (dir.is_relative()) {
        if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
            dir = fs::path(root) / dir;
        }
    }
    return dir.string();
}

DirectoryLock::DirectoryLock(const std::string& dir) {
    fs::create_directories(dir);
    path_ = dir + "/.lock";
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
        path_.clear();
        throw ArtifactError("output directory '" + dir +
                            "' is locked by another run (.lock exists)");
    }
    std::fputs("lock\n", f);
    std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
    if (!path_.empty()) std::remove(path_.c_str());
}

std::pair<Dataset, Dataset> build_datasets(const ExperimentConfig& cfg) {
    const auto& d = cfg.dataset;
    if (d.kind == "blobs") {
        BlobsConfig b{d.classes, d.dim, d.train_count, d.separation, d.noise, cfg.seed, cfg.seed};
        BlobsConfig bt = b;
        bt.count = d.test_count;
        bt.seed = cfg.seed + kSaltTestData;  // same centers, fresh sampling noise
        return {make_blobs(b), make_blobs(bt)};
    }
    if (d.kind == "arcs") {
        ArcsConfig a{d.train_count, d.dim, d.noise, cfg.seed};
        ArcsConfig at = a;
        at.count = d.test_count;
        at.seed = cfg.seed + kSaltTestData;
        return {make_arcs(a), make_arcs(at)};
    }
    return {load_idx_dataset(d.train_images, d.train_labels, d.normalize),
            load_idx_dataset(d.test_images, d.test_labels, d.normalize)};
}

NetworkSpec build_network(const ExperimentConfig& cfg) {
    NetworkSpec net = cfg.network;
    dnn::initialize_weights(net, cfg.seed + kSaltInit);
    return net;
}

// --- stages ------------------------------------------------------------------

void cmd_train_dnn(const ExperimentConfig& cfg) {
    Paths p = paths_for(cfg);
    StageTimer timer;
    auto [train_data, test_data] = build_datasets(cfg);
    NetworkSpec net = build_network(cfg);
    check_dataset_shape(net.input_shape, train_data, "train-dnn", false);
    const auto out_shape = network_output_shape(net);
    if (shape_size(out_shape) != train_data.num_classes) {
        throw ConfigError("train-dnn: network emits " + std::to_string(shape_size(out_shape)) +
                          " scores but the dataset has " +
                          std::to_string(train_data.num_classes) + " classes");
    }

    dnn::TrainResult result = dnn::train_dnn(net, train_data, cfg.train);
    save_dnn_weights(p.in(kDnnWeights), result.net);

    json log{{"schema_version", kSchemaVersion},
             {"stage", "train-dnn"},
             {"seed", cfg.seed},
             {"epochs", epoch_log_json(result.log)},
             {"final_train_accuracy", dnn::evaluate_accuracy(result.net, train_data)},
             {"test_accuracy", dnn::evaluate_accuracy(result.net, test_data)}};
    write_text(p.in(kDnnLog), dump(log));
    record_stage(p, cfg.config_hash, "train-dnn", timer.ms(), {kDnnWeights, kDnnLog});
}

void cmd_calibrate_convert(const ExperimentConfig& cfg) {
    Paths p = paths_for(cfg);
    StageTimer timer;
    NetworkSpec net = load_dnn_weights(dnn_weights_path(cfg, p));
    auto [train_data, test_data] = build_datasets(cfg);
    (void)test_data;
    check_dataset_shape(net.input_shape, train_data, "calibrate-convert", true);

    dnn::ActivationStats stats =
        dnn::collect_activation_stats(net, train_data, 1000000, cfg.seed + kSaltStats);
    auto [spiking, plan] = convert::convert_dnn_to_snn(net, stats, cfg.T, mode_of(cfg));
    save_snn_weights(p.in(kSnnWeights), spiking, static_cast<std::uint32_t>(cfg.T),
                     mode_of(cfg));

    json layers = json::array();
    for (const auto& lp : plan.layers) {
        auto landscape = [](const std::vector<convert::LandscapePoint>& pts) {
            json arr = json::array();
            for (const auto& pt : pts) {
                arr.push_back(json{{"alpha", pt.alpha}, {"beta", pt.beta},
                                   {"abs_loss", pt.abs_loss}});
            }
            return arr;
        };
        const dnn::LayerStats* ls = stats.find(lp.layer_index);
        json stats_j = nullptr;
        if (ls) {
            stats_j = json{{"d_max", ls->d_max},
                           {"M", ls->M},
                           {"total_samples", ls->total_samples},
                           {"coverage_dmax3", ls->coverage_dmax3},
                           {"stability_gap", ls->stability_gap}};
        }
        layers.push_back(json{{"layer", lp.layer_index},
                              {"mu", lp.mu},
                              {"alpha", lp.scale.alpha},
                              {"beta", lp.scale.beta},
                              {"vth", lp.vth},
                              {"delta", lp.delta},
                              {"loss_opt", lp.loss_opt},
                              {"beta_zero_warning", lp.beta_zero_warning},
                              {"alpha_profile", landscape(lp.alpha_profile)},
                              {"beta_slice", landscape(lp.beta_slice)},
                              {"stats", stats_j}});
    }
    json plan_j{{"schema_version", kSchemaVersion},
                {"stage", "calibrate-convert"},
                {"mode", cfg.mode},
                {"T", cfg.T},
                {"layers", layers}};
    write_text(p.in(kPlan), dump(plan_j));
    record_stage(p, cfg.config_hash, "calibrate-convert", timer.ms(), {kSnnWeights, kPlan});
}

void cmd_finetune(const ExperimentConfig& cfg) {
    Paths p = paths_for(cfg);
    StageTimer timer;
    const std::string src =
        cfg.spiking_weights_path.empty() ? p.in(kSnnWeights) : cfg.spiking_weights_path;
    SnnArtifact art = load_checked_snn(cfg, src);
    auto [train_data, test_data] = build_datasets(cfg);
    check_dataset_shape(art.net.input_shape, train_data, "finetune", false);

    snn::FinetuneResult result = snn::finetune_sgl(art.net, train_data, cfg.T, cfg.finetune);
    save_snn_weights(p.in(kFinetunedWeights), result.snn, static_cast<std::uint32_t>(cfg.T),
                     art.mode);

    json log{{"schema_version", kSchemaVersion},
             {"stage", "finetune"},
             {"seed", cfg.finetune.seed},
             {"T", cfg.T},
             {"epochs", epoch_log_json(result.log)},
             {"final_train_accuracy", snn::snn_accuracy(result.snn, train_data, cfg.T)},
             {"test_accuracy", snn::snn_accuracy(result.snn, test_data, cfg.T)}};
    write_text(p.in(kFinetuneLog), dump(log));
    record_stage(p, cfg.config_hash, "finetune", timer.ms(), {kFinetunedWeights, kFinetuneLog});
}

void cmd_evaluate(const ExperimentConfig& cfg) {
    Paths p = paths_for(cfg);
    StageTimer timer;
    SnnArtifact art = load_checked_snn(cfg, spiking_weights_path(cfg, p));
    auto [train_data, test_data] = build_datasets(cfg);
    check_dataset_shape(art.net.input_shape, test_data, "evaluate", false);

    const double accuracy = snn::snn_accuracy(art.net, test_data, cfg.T);
    energy::CostReport cost =
        averaged_cost_report(art.net, test_data, cfg.T, energy_model_of(cfg), presets_of(cfg));

    // The error report needs the source DNN; omit it when evaluating a
    // stand-alone spiking artifact.
    json error_layers = nullptr;
    std::string error_note = "dnn weights not found; error report omitted";
    const std::string dnn_path = dnn_weights_path(cfg, p);
    if (fs::exists(dnn_path)) {
        NetworkSpec dnn_net = load_dnn_weights(dnn_path);
        auto sample_sets = collect_preacts(dnn_net, train_data);
        error_layers = json::array();
        for (auto& [layer, samples] : sample_sets) {
            analysis::EmpiricalDistribution dist;
            dist.samples = std::move(samples);
            LayerErrorEntry e = build_layer_error(dnn_net, art.net, train_data, dist, layer,
                                                  cfg.T, cfg.analyze.resamples,
                                                  cfg.seed + kSaltBootstrap + layer);
            error_layers.push_back(layer_error_json(e));
        }
        error_note = "error statistics estimated on the training set";
    }

    json metrics{{"schema_version", kSchemaVersion},
                 {"stage", "evaluate"},
                 {"T", cfg.T},
                 {"mode", snn::to_string(art.mode)},
                 {"accuracy", accuracy},
                 {"cost", cost_report_json(cost)},
                 {"error_layers", error_layers},
                 {"error_note", error_note},
                 {"definitions", report_definitions()}};
    write_text(p.in(kMetrics), dump(metrics));
    write_text(p.in(kCostCsv), cost_report_csv(cost));
    record_stage(p, cfg.config_hash, "evaluate", timer.ms(), {kMetrics, kCostCsv});
}

void cmd_analyze(const ExperimentConfig& cfg) {
    Paths p = paths_for(cfg);
    StageTimer timer;
    NetworkSpec dnn_net = load_dnn_weights(dnn_weights_path(cfg, p));
    SnnArtifact art = load_snn_weights(spiking_weights_path(cfg, p));
    auto [train_data, test_data] = build_datasets(cfg);
    (void)test_data;
    check_dataset_shape(dnn_net.input_shape, train_data, "analyze", false);

    auto sample_sets = collect_preacts(dnn_net, train_data);
    json reports = json::array();
    std::string csv = "layer,T,quantity,value,se\n";
    for (auto& [layer, samples] : sample_sets) {
        analysis::EmpiricalDistribution dist;
        if (cfg.analyze.inject == "uniform") {
            dist = analysis::uniform_samples(*dnn_net.layers[layer].mu, cfg.analyze.sample_count,
                                             cfg.seed + kSaltInject + layer);
        } else {
            dist.samples = std::move(samples);
        }
        for (std::size_t T : cfg.analyze.t_sweep) {
            LayerErrorEntry e =
                build_layer_error(dnn_net, art.net, train_data, dist, layer, T,
                                  cfg.analyze.resamples, cfg.seed + kSaltBootstrap + layer);
            reports.push_back(layer_error_json(e));
            append_error_csv(csv, e);
        }
    }

    json out{{"schema_version", kSchemaVersion},
             {"stage", "analyze"},
             {"inject", cfg.analyze.inject},
             {"t_sweep", cfg.analyze.t_sweep},
             {"reports", reports},
             {"definitions", report_definitions()}};
    write_text(p.in(kErrorJson), dump(out));
    write_text(p.in(kErrorCsv), csv);
    record_stage(p, cfg.config_hash, "analyze", timer.ms(), {kErrorJson, kErrorCsv});
}

void cmd_energy_report(const ExperimentConfig& cfg) {
    Paths p = paths_for(cfg);
    StageTimer timer;
    SnnArtifact art = load_checked_snn(cfg, spiking_weights_path(cfg, p));
    auto [train_data, test_data] = build_datasets(cfg);
    (void)train_data;
    check_dataset_shape(art.net.input_shape, test_data, "energy-report", false);

    energy::CostReport cost =
        averaged_cost_report(art.net, test_data, cfg.T, energy_model_of(cfg), presets_of(cfg));
    json out{{"schema_version", kSchemaVersion},
             {"stage", "energy-report"},
             {"mode", snn::to_string(art.mode)},
             {"cost", cost_report_json(cost)},
             {"definitions", report_definitions()}};
    write_text(p.in(kEnergyJson), dump(out));
    write_text(p.in(kEnergyCsv), cost_report_csv(cost));
    record_stage(p, cfg.config_hash, "energy-report", timer.ms(), {kEnergyJson, kEnergyCsv});
}

void cmd_pipeline(const ExperimentConfig& cfg) {
    cmd_train_dnn(cfg);
    cmd_calibrate_convert(cfg);
    cmd_finetune(cfg);
    cmd_evaluate(cfg);
    cmd_analyze(cfg);
    cmd_energy_report(cfg);
}

}  // namespace snnkit::experiment
