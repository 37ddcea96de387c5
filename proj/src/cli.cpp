#include "binshield/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>

#include "binshield/errors.hpp"
#include "binshield/rng.hpp"
#include "binshield/serialize.hpp"

namespace binshield {

namespace fs = std::filesystem;

Command command_from_string(const std::string& s) {
  if (s == "synth") return Command::Synth;
  if (s == "discretize") return Command::Discretize;
  if (s == "train") return Command::Train;
  if (s == "attack") return Command::Attack;
  if (s == "evaluate") return Command::Evaluate;
  if (s == "reproduce") return Command::Reproduce;
  throw InvalidValue("command", "unknown command '" + s + "'");
}

namespace {

std::string slug(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  std::replace(s.begin(), s.end(), ' ', '_');
  return s;
}

std::string defense_tag(DefenseKind kind) { return slug(to_string(kind)); }

struct Paths {
  std::string out;

  std::string train_csv() const { return out + "/train.csv"; }
  std::string test_csv() const { return out + "/test.csv"; }
  std::string scaler() const { return out + "/scaler.txt"; }
  std::string scheme(DefenseKind kind, bool midpoint) const {
    return out + "/scheme_" + defense_tag(kind) + (midpoint ? "_mid" : "") + ".txt";
  }
  std::string model(ModelFamily family, DefenseKind kind, bool midpoint) const {
    return out + "/model_" + to_string(family) + "_" + defense_tag(kind) +
           (midpoint ? "_mid" : "") + ".txt";
  }
  std::string stack_dir(ModelFamily family, DefenseKind kind) const {
    return out + "/stack_" + to_string(family) + "_" + defense_tag(kind);
  }
  std::string substitute(ModelFamily family) const {
    return out + "/substitute_" + to_string(family) + ".txt";
  }
  std::string batch(const AttackSpec& attack, ModelFamily family, DefenseKind kind) const {
    std::string name = "batch_" + slug(attack.label());
    if (attack.threat == ThreatModel::WhiteBoxTransfer)
      name += "_wt__" + to_string(family);
    else if (attack.threat == ThreatModel::WhiteBox)
      name += "_w__" + to_string(family) + "_" + defense_tag(kind);
    return out + "/" + name + ".csv";
  }
  std::string records() const { return out + "/records.csv"; }
  std::string timings() const { return out + "/timings.txt"; }
};

void need(const std::string& path, const std::string& artifact) {
  if (!fs::exists(path)) throw MissingArtifact(artifact + " (" + path + ")");
}

Dataset load_csv_auto(const std::string& path, FeatureSchema hint) {
  const std::string text = read_text_file(path);
  const size_t eol = text.find('\n');
  if (eol == std::string::npos) throw EmptyFile(path);
  std::string header = text.substr(0, eol);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  FeatureSchema schema;
  schema.class_names = hint.class_names;
  std::string cell;
  std::vector<std::string> cols;
  for (char c : header + ",") {
    if (c == ',') {
      cols.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (cols.size() < 2) throw IoError("dataset header needs features and a label");
  schema.label_name = cols.back();
  cols.pop_back();
  schema.feature_names = cols;
  return load_csv(path, schema);
}

struct StageContext {
  Dataset train_raw;
  Dataset test_raw;
  Standardizer scaler;
  Matrix train_X;
  Matrix test_X;
  FeatureBox box;
};

StageContext load_stage_context(const Paths& paths) {
  need(paths.train_csv(), "dataset");
  need(paths.test_csv(), "dataset");
  need(paths.scaler(), "scaler");
  StageContext ctx;
  ctx.train_raw = load_csv_auto(paths.train_csv(), FeatureSchema{});
  ctx.test_raw = load_csv_auto(paths.test_csv(), ctx.train_raw.schema);
  ctx.scaler = load_standardizer(paths.scaler());
  ctx.train_X = ctx.scaler.apply(ctx.train_raw.features);
  ctx.test_X = ctx.scaler.apply(ctx.test_raw.features);
  ctx.box = FeatureBox::from_data(ctx.train_X);
  return ctx;
}

bool differentiable_family(ModelFamily family) {
  return family == ModelFamily::LogisticRegression || family == ModelFamily::Feedforward;
}

bool any_white_box(const ExperimentConfig& exp) {
  return std::any_of(exp.attacks.begin(), exp.attacks.end(), [](const AttackSpec& a) {
    return a.threat == ThreatModel::WhiteBox;
  });
}

ModelSpec spec_for(const ExperimentConfig& exp, int family_idx, std::uint64_t stream) {
  ModelSpec spec =
      exp.family_specs.empty() ? ModelSpec{} : exp.family_specs[size_t(family_idx)];
  spec.family = exp.families[size_t(family_idx)];
  spec.seed = derive_seed(exp.seed, stream);
  return spec;
}

std::uint64_t stage_stream(int family_idx, int defense_idx, bool midpoint) {
  return 9000 + std::uint64_t(family_idx) * 64 + std::uint64_t(defense_idx) * 4 +
         (midpoint ? 1 : 0);
}

void stage_synth(const ExperimentConfig& exp, const Paths& paths) {
  GridContext ctx = prepare_grid_context(exp);
  save_csv(ctx.train_raw, paths.train_csv());
  save_csv(ctx.test_raw, paths.test_csv());
  save_standardizer(ctx.scaler, paths.scaler());
  std::cout << "synth: wrote " << ctx.train_raw.sample_count() << " train / "
            << ctx.test_raw.sample_count() << " test rows\n";
}

void stage_discretize(const ExperimentConfig& exp, const Paths& paths) {
  const StageContext ctx = load_stage_context(paths);
  const bool white = any_white_box(exp);
  int written = 0;
  for (const DefenseSpec& defense : exp.defenses) {
    if (defense.kind == DefenseKind::None || defense.is_stack()) continue;
    DiscretizerSpec disc;
    disc.encoding = defense.encoding;
    disc.bins = defense.bins;
    disc.method = defense.kind == DefenseKind::EqualWidth      ? BinMethod::EqualWidth
                  : defense.kind == DefenseKind::EqualFrequency ? BinMethod::EqualFrequency
                  : defense.kind == DefenseKind::Mdl            ? BinMethod::Mdlp
                                                                : BinMethod::EntropyBins;
    save_scheme(fit_scheme(disc, ctx.train_X, ctx.train_raw.labels),
                paths.scheme(defense.kind, false));
    ++written;
    if (white) {
      disc.encoding = Encoding::BinMidpoint;
      save_scheme(fit_scheme(disc, ctx.train_X, ctx.train_raw.labels),
                  paths.scheme(defense.kind, true));
      ++written;
    }
  }
  std::cout << "discretize: wrote " << written << " schemes\n";
}

void stage_train(const ExperimentConfig& exp, const Paths& paths) {
  const StageContext ctx = load_stage_context(paths);
  const bool white = any_white_box(exp);
  int written = 0;
  for (int fi = 0; fi < int(exp.families.size()); ++fi) {
    const ModelFamily family = exp.families[size_t(fi)];
    for (int di = 0; di < int(exp.defenses.size()); ++di) {
      const DefenseSpec& defense = exp.defenses[size_t(di)];
      if (defense.kind == DefenseKind::None) {
        save_model(train(spec_for(exp, fi, stage_stream(fi, di, false)), ctx.train_X,
                         ctx.train_raw.labels),
                   paths.model(family, defense.kind, false));
        ++written;
      } else if (defense.is_stack()) {
        StackSpec stack_spec;
        for (DefenseKind base_kind : exp.stack_bases) {
          DiscretizerSpec disc;
          disc.method = base_kind == DefenseKind::EqualWidth      ? BinMethod::EqualWidth
                        : base_kind == DefenseKind::EqualFrequency ? BinMethod::EqualFrequency
                        : base_kind == DefenseKind::Mdl            ? BinMethod::Mdlp
                                                                   : BinMethod::EntropyBins;
          disc.bins = defense.bins;
          for (const auto& d : exp.defenses)
            if (d.kind == base_kind) disc.bins = d.bins;
          stack_spec.base_configs.emplace_back(disc, spec_for(exp, fi, stage_stream(fi, di, false)));
        }
        stack_spec.meta_spec = spec_for(exp, fi, stage_stream(fi, di, true));
        stack_spec.meta_spec.family = defense.kind == DefenseKind::StackLr
                                          ? ModelFamily::LogisticRegression
                                          : ModelFamily::RandomForest;
        stack_spec.fold_count = exp.stack_fold_count;
        stack_spec.seed = derive_seed(exp.seed, 7000 + stage_stream(fi, di, false));
        save_stack(fit_stack(stack_spec, ctx.train_X, ctx.train_raw.labels),
                   paths.stack_dir(family, defense.kind));
        ++written;
      } else {
        need(paths.scheme(defense.kind, false), "scheme");
        const DiscretizationScheme scheme = load_scheme(paths.scheme(defense.kind, false));
        save_model(train(spec_for(exp, fi, stage_stream(fi, di, false)),
                         apply_scheme(scheme, ctx.train_X), ctx.train_raw.labels),
                   paths.model(family, defense.kind, false));
        ++written;
        if (white && differentiable_family(family)) {
          need(paths.scheme(defense.kind, true), "scheme");
          const DiscretizationScheme mid = load_scheme(paths.scheme(defense.kind, true));
          save_model(train(spec_for(exp, fi, stage_stream(fi, di, true)),
                           apply_scheme(mid, ctx.train_X), ctx.train_raw.labels),
                     paths.model(family, defense.kind, true));
          ++written;
        }
      }
    }
  }
  std::cout << "train: wrote " << written << " models\n";
}

void stage_attack(const ExperimentConfig& exp, const Paths& paths) {
  const StageContext ctx = load_stage_context(paths);
  // zero or more model artifacts must exist before attacks make sense
  bool any_model = false;
  for (const auto& entry : fs::directory_iterator(paths.out)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("model_", 0) == 0 || name.rfind("stack_", 0) == 0) any_model = true;
  }
  if (!any_model) throw MissingArtifact("model");

  const AttackEnvironment env(ctx.train_X, ctx.train_raw.labels, ctx.box,
                              derive_seed(exp.seed, 3), exp.threads);
  int written = 0;
  for (const AttackSpec& attack : exp.attacks) {
    if (attack.threat == ThreatModel::BlackBox) {
      const TrainedModel& sub = env.substitute(attack.substitute);
      save_model(sub, paths.substitute(attack.substitute));
      save_batch_csv(craft_with_source(GradientSource(sub), attack, ctx.test_X,
                                       ctx.test_raw.labels, env.box(), env.threads(),
                                       family_short_name(attack.substitute)),
                     paths.batch(attack, ModelFamily::DecisionTree, DefenseKind::None));
      ++written;
      continue;
    }
    for (int fi = 0; fi < int(exp.families.size()); ++fi) {
      const ModelFamily family = exp.families[size_t(fi)];
      if (!differentiable_family(family)) continue;
      if (attack.threat == ThreatModel::WhiteBoxTransfer) {
        const TrainedModel& twin = env.substitute(family);
        save_batch_csv(craft_with_source(GradientSource(twin), attack, ctx.test_X,
                                         ctx.test_raw.labels, env.box(), env.threads(),
                                         "twin:" + family_short_name(family)),
                       paths.batch(attack, family, DefenseKind::None));
        ++written;
        continue;
      }
      for (const DefenseSpec& defense : exp.defenses) {
        const CellPlan plan = plan_cell(family, defense, attack);
        if (!plan.applicable) continue;
        Pipeline target;
        if (defense.kind == DefenseKind::None) {
          need(paths.model(family, defense.kind, false), "model");
          target.model = load_model(paths.model(family, defense.kind, false));
        } else {
          need(paths.scheme(defense.kind, true), "scheme");
          need(paths.model(family, defense.kind, true), "model");
          target.defense = load_scheme(paths.scheme(defense.kind, true));
          target.model = load_model(paths.model(family, defense.kind, true));
        }
        save_batch_csv(craft_attack(target, attack, ctx.test_X, ctx.test_raw.labels, env),
                       paths.batch(attack, family, defense.kind));
        ++written;
      }
    }
  }
  std::cout << "attack: wrote " << written << " adversarial batches\n";
}

void stage_evaluate(const ExperimentConfig& exp, const Paths& paths) {
  const StageContext ctx = load_stage_context(paths);
  std::map<std::string, DefendedClassifier> classifiers;
  std::map<std::string, std::pair<Real, bool>> clean_cache;
  std::map<std::string, AdversarialBatch> batches;

  auto classifier_for = [&](ModelFamily family, const DefenseSpec& defense,
                            Encoding encoding) -> const DefendedClassifier& {
    const bool midpoint = encoding == Encoding::BinMidpoint && defense.kind != DefenseKind::None;
    const std::string key = to_string(family) + "/" + defense_tag(defense.kind) +
                            (midpoint ? "/mid" : "/deploy");
    auto it = classifiers.find(key);
    if (it != classifiers.end()) return it->second;
    DefendedClassifier built = Pipeline{};
    if (defense.is_stack()) {
      need(paths.stack_dir(family, defense.kind) + "/manifest.txt", "stack");
      built = load_stack(paths.stack_dir(family, defense.kind));
    } else if (defense.kind == DefenseKind::None) {
      need(paths.model(family, defense.kind, false), "model");
      built = Pipeline{std::nullopt, load_model(paths.model(family, defense.kind, false))};
    } else {
      need(paths.scheme(defense.kind, midpoint), "scheme");
      need(paths.model(family, defense.kind, midpoint), "model");
      built = Pipeline{load_scheme(paths.scheme(defense.kind, midpoint)),
                       load_model(paths.model(family, defense.kind, midpoint))};
    }
    return classifiers.emplace(key, std::move(built)).first->second;
  };

  std::vector<EvaluationRecord> records;
  for (int fi = 0; fi < int(exp.families.size()); ++fi) {
    const ModelFamily family = exp.families[size_t(fi)];
    for (const DefenseSpec& defense : exp.defenses) {
      for (const AttackSpec& attack : exp.attacks) {
        EvaluationRecord record;
        record.family = to_string(family);
        record.defense = to_string(defense.kind);
        record.attack = attack.label();
        record.threat = to_string(attack.threat);
        record.seed = exp.seed;
        const auto start = std::chrono::steady_clock::now();
        const CellPlan plan = plan_cell(family, defense, attack);
        if (!plan.applicable) {
          record.status = "not-applicable";
          record.note = plan.reason;
        } else {
          const DefendedClassifier& target =
              classifier_for(family, defense, plan.target_encoding);
          const std::string batch_path = paths.batch(attack, family, defense.kind);
          need(batch_path, "batch");
          auto bit = batches.find(batch_path);
          if (bit == batches.end())
            bit = batches.emplace(batch_path, load_batch_csv(batch_path)).first;
          record.substitute = bit->second.substitute_id;
          record.acc_clean = accuracy(predict_labels(target, ctx.test_X), ctx.test_raw.labels);
          record.acc_adv =
              accuracy(predict_labels(target, bit->second.perturbed), ctx.test_raw.labels);
          record.rm = robustness_measure(record.acc_clean, record.acc_adv);
        }
        record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
        records.push_back(std::move(record));
      }
    }
  }
  write_text_file(paths.records(), records_to_csv(records, true));
  render_report(records, exp.formats, paths.out, true);
  std::string timings;
  for (const auto& r : records)
    timings += r.family + " " + r.defense + " " + r.attack + " " + r.threat + " " +
               std::to_string(r.wall_ms) + "ms\n";
  write_text_file(paths.timings(), timings);
  std::cout << "evaluate: wrote " << records.size() << " records\n";
}

}  // namespace

int execute(Command command, const CliConfig& config) {
  const ExperimentConfig& exp = config.experiment;
  const Paths paths{exp.out_dir};
  const char* stage_name = "";
  try {
    exp.validate();
    set_training_threads(exp.threads);
    fs::create_directories(exp.out_dir);
    switch (command) {
      case Command::Synth:
        stage_name = "synth";
        stage_synth(exp, paths);
        break;
      case Command::Discretize:
        stage_name = "discretize";
        stage_discretize(exp, paths);
        break;
      case Command::Train:
        stage_name = "train";
        stage_train(exp, paths);
        break;
      case Command::Attack:
        stage_name = "attack";
        stage_attack(exp, paths);
        break;
      case Command::Evaluate:
        stage_name = "evaluate";
        stage_evaluate(exp, paths);
        break;
      case Command::Reproduce:
        stage_name = "reproduce";
        stage_synth(exp, paths);
        stage_discretize(exp, paths);
        stage_train(exp, paths);
        stage_attack(exp, paths);
        stage_evaluate(exp, paths);
        break;
    }
    return 0;
  } catch (const Error& e) {
    const bool config_error = e.kind() == "ParseError" || e.kind() == "UnknownKey" ||
                              e.kind() == "InvalidValue" || e.kind() == "ConfigInvalid";
    std::cerr << "error: stage=" << stage_name << " kind=" << e.kind() << " msg=" << e.what()
              << "\n";
    return config_error ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: stage=" << stage_name << " kind=Internal msg=" << e.what() << "\n";
    return 3;
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"discretization-based ensemble defense toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::string formats;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "experiment config file")->required();
  app.add_option("--out", out_dir, "output directory override");
  auto* seed_opt = app.add_option("--seed", seed, "global seed override");
  app.add_option("--format", formats, "comma-separated report formats (csv,markdown,svg)");
  app.add_option("--threads", threads, "worker thread cap");
  for (const char* name : {"synth", "discretize", "train", "attack", "evaluate", "reproduce"})
    app.add_subcommand(name)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CliConfig config = parse_config(config_path);
    if (!out_dir.empty()) config.experiment.out_dir = out_dir;
    if (seed_opt->count() > 0) config.experiment.seed = seed;
    if (threads > 0) config.experiment.threads = threads;
    if (!formats.empty()) {
      config.experiment.formats.clear();
      std::string token;
      for (char c : formats + ",") {
        if (c != ',') {
          token.push_back(c);
          continue;
        }
        if (token == "csv") config.experiment.formats.push_back(ReportFormat::Csv);
        else if (token == "markdown") config.experiment.formats.push_back(ReportFormat::Markdown);
        else if (token == "svg") config.experiment.formats.push_back(ReportFormat::SvgPlot);
        else if (!token.empty()) throw InvalidValue("--format", "unknown format '" + token + "'");
        token.clear();
      }
    }
    return execute(command_from_string(app.get_subcommands().front()->get_name()), config);
  } catch (const Error& e) {
    std::cerr << "error: stage=config kind=" << e.kind() << " msg=" << e.what() << "\n";
    return 2;
  }
}

}  // namespace binshield
