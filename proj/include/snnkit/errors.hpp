#pragma once

#include <stdexcept>
#include <string>

namespace snnkit {

// Base for all toolkit errors. The CLI maps subclasses onto its exit-code
// contract, so new failure categories should subclass one of these rather
// than throwing std::runtime_error directly.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor / layer geometry does not compose.
struct DimensionError : Error {
    using Error::Error;
};

// A caller-supplied value is outside an operation's domain (T = 0, bad layer
// index, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// A public operation produced a non-finite value outside of training.
struct NumericError : Error {
    using Error::Error;
};

// Training diverged (non-finite loss); message carries the epoch index.
struct TrainingError : Error {
    using Error::Error;
};

// Activation-statistics collection failed (empty sample set, ...).
struct StatsError : Error {
    using Error::Error;
};

// DNN-to-SNN calibration failed (missing stats layer, empty percentile set).
struct CalibrationError : Error {
    using Error::Error;
};

// An analysis estimator was invoked below the sample floor or on an empty
// range.
struct EstimationError : Error {
    using Error::Error;
};

// Experiment configuration is invalid (unknown key, missing path, bad value).
struct ConfigError : Error {
    using Error::Error;
};

// A persisted artifact is unreadable, corrupt, or missing.
struct ArtifactError : Error {
    using Error::Error;
};

// Two artifacts disagree (e.g. requested T differs from the conversion plan).
struct MismatchError : Error {
    using Error::Error;
};

}  // namespace snnkit
