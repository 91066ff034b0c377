#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snnkit/dataset.hpp"
#include "snnkit/dnn.hpp"
#include "snnkit/network.hpp"

namespace snnkit::experiment {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "SNNKIT_OUTPUT_ROOT";

struct DatasetConfig {
    std::string kind = "blobs";  // blobs | arcs | idx
    std::size_t classes = 4;
    std::size_t dim = 8;
    std::size_t train_count = 640;
    std::size_t test_count = 400;
    double separation = 3.0;
    double noise = 0.5;
    std::string train_images, train_labels, test_images, test_labels;  // idx only
    bool normalize = true;
};

struct AnalyzeConfig {
    std::vector<std::size_t> t_sweep = {1, 2, 5};
    std::string inject = "none";  // none | uniform (seeded Uniform[0, mu_l] samples)
    std::size_t sample_count = 200000;
    std::size_t resamples = 200;
};

struct EnergyConfig {
    double e_mac_pj = 3.2;
    double e_ac_pj = 0.1;
    std::vector<std::string> presets = {"truenorth", "spinnaker"};
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    std::size_t T = 2;
    std::string mode = "scaled";
    DatasetConfig dataset;
    NetworkSpec network;  // shapes resolved at load time, weights zero until init
    dnn::TrainConfig train;
    dnn::TrainConfig finetune;
    EnergyConfig energy;
    AnalyzeConfig analyze;
    // Stage-input overrides (empty = derive from output_dir).
    std::string weights_path;
    std::string spiking_weights_path;
    std::string config_hash;  // FNV-1a of the canonical config JSON
};

// Strict parse: unknown keys anywhere are ConfigError; referenced dataset
// paths must exist. The documented schema lives in README.md.
ExperimentConfig load_experiment_config(const std::string& path);

struct CliOverrides {
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> T;
    std::optional<std::string> mode;
    std::optional<std::string> inject;
    std::optional<std::string> weights_path;
    std::optional<std::string> spiking_weights_path;
};
void apply_overrides(ExperimentConfig& cfg, const CliOverrides& o);

// Relative output dirs resolve under $SNNKIT_OUTPUT_ROOT when it is set.
std::string effective_output_dir(const ExperimentConfig& cfg);

// Exclusive ownership of an output directory for the process lifetime.
class DirectoryLock {
  public:
    explicit DirectoryLock(const std::string& dir);  // ArtifactError if already locked
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

  private:
    std::string path_;
};

std::pair<Dataset, Dataset> build_datasets(const ExperimentConfig& cfg);  // train, test
NetworkSpec build_network(const ExperimentConfig& cfg);                   // Glorot-initialized

// Pipeline stages. Each persists its artifacts under the output directory and
// records them (path + CRC-32) in manifest.json.
void cmd_train_dnn(const ExperimentConfig& cfg);
void cmd_calibrate_convert(const ExperimentConfig& cfg);
void cmd_finetune(const ExperimentConfig& cfg);
void cmd_evaluate(const ExperimentConfig& cfg);
void cmd_analyze(const ExperimentConfig& cfg);
void cmd_energy_report(const ExperimentConfig& cfg);
void cmd_pipeline(const ExperimentConfig& cfg);

}  // namespace snnkit::experiment
