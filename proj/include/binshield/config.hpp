#pragma once

#include <string>

#include "binshield/evaluate.hpp"

namespace binshield {

/// Parsed and validated experiment configuration. The on-disk form is a JSON
/// document with a fixed key grammar (see README); unknown keys are errors.
struct CliConfig {
  ExperimentConfig experiment;
};

CliConfig parse_config(const std::string& path);
CliConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

/// Synthetic-data profiles referenced by configs.
/// "flow": heavy-tailed flow-feature benchmark with class separation
/// controlled by overlap. "heavy_tie": zero-inflated grid-valued columns
/// (80% of mass at zero) that degrade equal-frequency binning.
SynthSpec synth_profile(const std::string& profile, int class_count, int samples_per_class,
                        int feature_count, Real overlap, std::uint64_t seed);

/// The desk-scale benchmark: flow profile, 8 classes, 200 samples/class,
/// 7 features.
SynthSpec benchmark_synth_spec(std::uint64_t seed);

}  // namespace binshield
