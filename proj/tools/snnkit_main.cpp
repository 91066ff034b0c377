#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "snnkit/errors.hpp"
#include "snnkit/experiment.hpp"

namespace {

using snnkit::experiment::CliOverrides;
using snnkit::experiment::ExperimentConfig;

struct Invocation {
    std::string config_path;
    CliOverrides overrides;
    std::function<void(const ExperimentConfig&)> run;
};

void add_common_flags(CLI::App* sub, Invocation& inv) {
    sub->add_option("-c,--config", inv.config_path, "experiment config JSON")->required();
    sub->add_option("--output-dir", inv.overrides.output_dir,
                    "override the config's output directory");
    sub->add_option("--seed", inv.overrides.seed, "override the master seed");
    sub->add_option("--T", inv.overrides.T, "override the simulation length");
    sub->add_option("--mode", inv.overrides.mode,
                    "override the conversion mode (naive|max_act_bias|scaled)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"snnkit: threshold-ReLU DNN training, IF-SNN conversion, and analysis"};
    app.require_subcommand(1);
    Invocation inv;

    auto* train = app.add_subcommand("train-dnn", "train the source DNN");
    add_common_flags(train, inv);
    train->callback([&] { inv.run = snnkit::experiment::cmd_train_dnn; });

    auto* calib = app.add_subcommand("calibrate-convert",
                                     "collect activation statistics and convert to an SNN");
    add_common_flags(calib, inv);
    calib->add_option("--weights", inv.overrides.weights_path, "DNN weight file to convert");
    calib->callback([&] { inv.run = snnkit::experiment::cmd_calibrate_convert; });

    auto* tune = app.add_subcommand("finetune", "surrogate-gradient fine-tuning of the SNN");
    add_common_flags(tune, inv);
    tune->add_option("--spiking-weights", inv.overrides.spiking_weights_path,
                     "spiking weight file to fine-tune");
    tune->callback([&] { inv.run = snnkit::experiment::cmd_finetune; });

    auto* eval = app.add_subcommand("evaluate", "accuracy, cost, and error metrics");
    add_common_flags(eval, inv);
    eval->add_option("--weights", inv.overrides.weights_path, "source DNN weight file");
    eval->add_option("--spiking-weights", inv.overrides.spiking_weights_path,
                     "spiking weight file to evaluate");
    eval->callback([&] { inv.run = snnkit::experiment::cmd_evaluate; });

    auto* analyze = app.add_subcommand("analyze", "conversion-error estimators over a T sweep");
    add_common_flags(analyze, inv);
    analyze->add_option("--weights", inv.overrides.weights_path, "source DNN weight file");
    analyze->add_option("--spiking-weights", inv.overrides.spiking_weights_path,
                        "spiking weight file to analyze");
    analyze->add_option("--inject", inv.overrides.inject,
                        "replace measured activations (none|uniform)");
    analyze->callback([&] { inv.run = snnkit::experiment::cmd_analyze; });

    auto* energy = app.add_subcommand("energy-report", "FLOP and energy accounting");
    add_common_flags(energy, inv);
    energy->add_option("--spiking-weights", inv.overrides.spiking_weights_path,
                       "spiking weight file to cost");
    energy->callback([&] { inv.run = snnkit::experiment::cmd_energy_report; });

    auto* pipe = app.add_subcommand("pipeline", "run every stage in order");
    add_common_flags(pipe, inv);
    pipe->callback([&] { inv.run = snnkit::experiment::cmd_pipeline; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg = snnkit::experiment::load_experiment_config(inv.config_path);
        snnkit::experiment::apply_overrides(cfg, inv.overrides);
        snnkit::experiment::DirectoryLock lock(snnkit::experiment::effective_output_dir(cfg));
        inv.run(cfg);
        return 0;
    } catch (const snnkit::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const snnkit::TrainingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const snnkit::CalibrationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const snnkit::ArtifactError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const snnkit::MismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    } catch (const snnkit::StatsError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 6;
    } catch (const snnkit::EstimationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 6;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}
