#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmfusion/synthdata.hpp"
#include "mmfusion/trainer.hpp"

namespace mmfusion {

// Every experiment knob as flat dotted keys. Precedence is command-line
// override > config file > default; unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 12345;
    std::string out_dir = "runs/latest";
    ModelSpec model;
    TrainConfig train;
    SyntheticSpec data;

    TrainConfig train_config() const;
    SyntheticSpec data_spec() const;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string description;
};

// The key registry: names, defaults, one-line descriptions.
std::vector<ConfigKey> config_keys();

RunConfig default_config();

// Apply "key = value" lines from a file; '#' starts a comment.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Apply one "key=value" token; throws ConfigError on unknown keys.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Deterministic echo of the effective configuration, one "key = value" per
// line in registry order.
std::string config_echo(const RunConfig& cfg);

// Benchmark presets used by the demo workflow: one modality's signal is
// three times the other's. The sample-varying variant flips the informative
// modality on 30% of samples.
RunConfig global_bias_benchmark();
RunConfig sample_varying_benchmark();

}  // namespace mmfusion
