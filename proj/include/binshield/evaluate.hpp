#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "binshield/attacks.hpp"
#include "binshield/dataset.hpp"
#include "binshield/ensemble.hpp"

namespace binshield {

/// RM = |acc_clean - acc_adv| / acc_clean. Lower is more robust.
Real robustness_measure(Real acc_clean, Real acc_adv);

enum class DefenseKind { None, EqualWidth, EqualFrequency, Mdl, Ebd, StackLr, StackRf };

std::string to_string(DefenseKind k);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::None;
  int bins = 10;  // EW/EF bin count, EBD cap
  Encoding encoding = Encoding::OneHot;

  bool is_stack() const {
    return kind == DefenseKind::StackLr || kind == DefenseKind::StackRf;
  }
};

/// One cell of the result tables.
struct EvaluationRecord {
  std::string family;
  std::string defense;
  std::string attack;      // e.g. "FGSM LR", "JSMA"
  std::string threat;      // "white", "white-transfer", "black"
  std::string substitute;  // empty for white box
  Real acc_clean = 0.0;
  Real acc_adv = 0.0;
  Real rm = 0.0;
  std::uint64_t seed = 0;
  long long wall_ms = 0;
  std::string status = "ok";  // "ok", "not-applicable", "error"
  std::string note;

  bool operator==(const EvaluationRecord&) const = default;
};

enum class ReportFormat { Csv, Markdown, SvgPlot };

struct ExperimentConfig {
  std::optional<std::string> csv_path;
  FeatureSchema csv_schema;
  std::optional<SynthSpec> synth;
  Real train_fraction = 0.75;
  std::uint64_t seed = 1;
  std::vector<ModelFamily> families;
  std::vector<ModelSpec> family_specs;  // aligned with families
  std::vector<DefenseSpec> defenses;
  std::vector<AttackSpec> attacks;
  int stack_fold_count = 5;
  std::vector<DefenseKind> stack_bases = {DefenseKind::EqualWidth, DefenseKind::Mdl,
                                          DefenseKind::Ebd};
  std::string out_dir = "out";
  std::vector<ReportFormat> formats = {ReportFormat::Csv, ReportFormat::Markdown};
  int threads = 1;

  void validate() const;
};

using DefendedClassifier = std::variant<Pipeline, StackedModel>;

/// Applicability and target encoding of one grid cell. White-box cells over
/// single defenses run straight-through against the midpoint encoding;
/// white-box cells on stacks or non-differentiable families are
/// not-applicable and reported as such.
struct CellPlan {
  bool applicable = true;
  std::string reason;
  Encoding target_encoding = Encoding::OneHot;
};

CellPlan plan_cell(ModelFamily family, const DefenseSpec& defense, const AttackSpec& attack);

Matrix predict_proba(const DefendedClassifier& c, const Matrix& X);
std::vector<int> predict_labels(const DefendedClassifier& c, const Matrix& X);
AdversarialBatch craft_attack(const DefendedClassifier& c, const AttackSpec& spec,
                              const Matrix& X, const Labels& y,
                              const AttackEnvironment& env);

/// Clean accuracy on the untouched rows, adversarial accuracy on the crafted
/// batch over the same rows, RM from the two.
EvaluationRecord evaluate_under_attack(const DefendedClassifier& pipeline,
                                       const AttackSpec& attack, const Matrix& X_test,
                                       const Labels& y_test, const AttackEnvironment& env);

/// Pre-split, pre-standardized experiment state shared across grid cells.
struct GridContext {
  Dataset train_raw;
  Dataset test_raw;
  Standardizer scaler;
  Matrix train_X;  // standardized
  Matrix test_X;
  FeatureBox box;  // training-range box in standardized units
};

GridContext prepare_grid_context(const ExperimentConfig& config);

/// Full Cartesian product of families x defenses x attacks. Inapplicable
/// cells (white-box on a non-differentiable target) become explicit
/// "not-applicable" records; per-cell errors are recorded, not thrown.
std::vector<EvaluationRecord> run_grid(const ExperimentConfig& config);
std::vector<EvaluationRecord> run_grid(const ExperimentConfig& config, GridContext& ctx);

/// Writes report.csv / report.md / rm_plot.svg under out_dir. When
/// zero_timing is set the wall_ms column renders as 0 so reports are
/// byte-identical across runs; real timings belong in timings.txt.
std::vector<std::string> render_report(const std::vector<EvaluationRecord>& records,
                                       const std::vector<ReportFormat>& formats,
                                       const std::string& out_dir, bool zero_timing = true);

std::string records_to_csv(const std::vector<EvaluationRecord>& records, bool zero_timing);
std::vector<EvaluationRecord> records_from_csv(const std::string& csv_text);

}  // namespace binshield
