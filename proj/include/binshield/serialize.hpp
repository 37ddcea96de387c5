#pragma once

#include <string>

#include "binshield/attacks.hpp"
#include "binshield/dataset.hpp"
#include "binshield/ensemble.hpp"
#include "binshield/models.hpp"

namespace binshield {

// Plain-text artifact formats. Every file starts with a format tag line
// "binshield/<kind>/v1"; reals print in shortest round-trip decimal form so
// rewriting an artifact is byte-stable.

std::string format_real(Real v);
Real parse_real(const std::string& s);

std::string scheme_to_text(const DiscretizationScheme& scheme);
DiscretizationScheme scheme_from_text(const std::string& text);
void save_scheme(const DiscretizationScheme& scheme, const std::string& path);
DiscretizationScheme load_scheme(const std::string& path);

std::string model_to_text(const TrainedModel& model);
TrainedModel model_from_text(const std::string& text);
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

std::string standardizer_to_text(const Standardizer& s);
Standardizer standardizer_from_text(const std::string& text);
void save_standardizer(const Standardizer& s, const std::string& path);
Standardizer load_standardizer(const std::string& path);

/// CSV: original row, perturbed row, L-inf norm, modified-feature count.
void save_batch_csv(const AdversarialBatch& batch, const std::string& path);
AdversarialBatch load_batch_csv(const std::string& path);

/// Stack artifacts live in a directory: manifest plus per-base scheme/model
/// files and the meta model.
void save_stack(const StackedModel& stack, const std::string& dir);
StackedModel load_stack(const std::string& dir);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace binshield
