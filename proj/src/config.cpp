#include "binshield/config.hpp"

#include <json.hpp>

#include <algorithm>

#include "binshield/errors.hpp"
#include "binshield/rng.hpp"
#include "binshield/serialize.hpp"

namespace binshield {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed)
      if (it.key() == key) known = true;
    if (!known) throw UnknownKey(path.empty() ? it.key() : path + "." + it.key());
  }
}

std::string dotted(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

Real get_real(const json& obj, const std::string& path, const std::string& key, Real fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw InvalidValue(dotted(path, key), "expected a number");
  return obj[key].get<Real>();
}

std::int64_t get_int(const json& obj, const std::string& path, const std::string& key,
                     std::int64_t fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) throw InvalidValue(dotted(path, key), "expected an integer");
  return obj[key].get<std::int64_t>();
}

std::string get_string(const json& obj, const std::string& path, const std::string& key,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) throw InvalidValue(dotted(path, key), "expected a string");
  return obj[key].get<std::string>();
}

bool get_bool(const json& obj, const std::string& path, const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) throw InvalidValue(dotted(path, key), "expected a boolean");
  return obj[key].get<bool>();
}

DefenseKind defense_kind_from_string(const std::string& s, const std::string& key) {
  if (s == "none") return DefenseKind::None;
  if (s == "ew") return DefenseKind::EqualWidth;
  if (s == "ef") return DefenseKind::EqualFrequency;
  if (s == "mdl" || s == "mdlp") return DefenseKind::Mdl;
  if (s == "ebd") return DefenseKind::Ebd;
  if (s == "en-lr") return DefenseKind::StackLr;
  if (s == "en-rf") return DefenseKind::StackRf;
  throw InvalidValue(key, "unknown defense '" + s + "'");
}

Encoding encoding_from_config(const std::string& s, const std::string& key) {
  if (s == "one-hot") return Encoding::OneHot;
  if (s == "bin-index") return Encoding::BinIndex;
  if (s == "bin-midpoint") return Encoding::BinMidpoint;
  throw InvalidValue(key, "unknown encoding '" + s + "'");
}

ModelSpec parse_model_overrides(const json& obj, const std::string& path, ModelSpec spec) {
  check_keys(obj, path,
             {"max_depth", "min_leaf", "tree_count", "feature_subsample", "bootstrap",
              "learning_rate", "epoch_count", "batch_size", "hidden_layer_widths",
              "l2_penalty"});
  spec.max_depth = int(get_int(obj, path, "max_depth", spec.max_depth));
  spec.min_leaf = int(get_int(obj, path, "min_leaf", spec.min_leaf));
  spec.tree_count = int(get_int(obj, path, "tree_count", spec.tree_count));
  spec.feature_subsample = int(get_int(obj, path, "feature_subsample", spec.feature_subsample));
  spec.bootstrap = get_bool(obj, path, "bootstrap", spec.bootstrap);
  spec.learning_rate = get_real(obj, path, "learning_rate", spec.learning_rate);
  spec.epoch_count = int(get_int(obj, path, "epoch_count", spec.epoch_count));
  spec.batch_size = int(get_int(obj, path, "batch_size", spec.batch_size));
  spec.l2_penalty = get_real(obj, path, "l2_penalty", spec.l2_penalty);
  if (obj.contains("hidden_layer_widths")) {
    if (!obj["hidden_layer_widths"].is_array())
      throw InvalidValue(dotted(path, "hidden_layer_widths"), "expected an array");
    spec.hidden_layer_widths.clear();
    for (const auto& w : obj["hidden_layer_widths"]) {
      if (!w.is_number_integer())
        throw InvalidValue(dotted(path, "hidden_layer_widths"), "expected integers");
      spec.hidden_layer_widths.push_back(w.get<int>());
    }
  }
  return spec;
}

AttackSpec parse_attack(const json& obj, const std::string& path) {
  check_keys(obj, path,
             {"family", "threat", "substitute", "epsilon", "alpha", "max_iterations", "theta",
              "gamma"});
  AttackSpec spec;
  const std::string family = get_string(obj, path, "family", "");
  if (family == "fgsm") spec.family = AttackFamily::Fgsm;
  else if (family == "bim") spec.family = AttackFamily::Bim;
  else if (family == "jsma") spec.family = AttackFamily::Jsma;
  else throw InvalidValue(dotted(path, "family"), "unknown attack family '" + family + "'");

  const std::string threat = get_string(obj, path, "threat", "black");
  if (threat == "black") spec.threat = ThreatModel::BlackBox;
  else if (threat == "white") spec.threat = ThreatModel::WhiteBox;
  else if (threat == "white-transfer") spec.threat = ThreatModel::WhiteBoxTransfer;
  else throw InvalidValue(dotted(path, "threat"), "unknown threat '" + threat + "'");

  if (obj.contains("substitute"))
    spec.substitute = model_family_from_string(get_string(obj, path, "substitute", "lr"));
  spec.epsilon = get_real(obj, path, "epsilon", spec.epsilon);
  spec.alpha = get_real(obj, path, "alpha", spec.alpha);
  spec.max_iterations = int(get_int(obj, path, "max_iterations", spec.max_iterations));
  spec.theta = get_real(obj, path, "theta", spec.theta);
  spec.gamma = get_real(obj, path, "gamma", spec.gamma);
  spec.validate();
  return spec;
}

}  // namespace

SynthSpec synth_profile(const std::string& profile, int class_count, int samples_per_class,
                        int feature_count, Real overlap, std::uint64_t seed) {
  SynthSpec spec;
  spec.class_count = class_count;
  spec.samples_per_class = samples_per_class;
  spec.overlap = overlap;
  spec.seed = seed;
  spec.class_feature_dists.assign(size_t(class_count),
                                  std::vector<FeatureDist>(size_t(feature_count)));

  if (profile == "flow") {
    if (feature_count == 7) spec.schema = default_flow_schema();
    Rng prof(derive_seed(seed, 0xF10));
    // log-space medians for volume-like features, shift bases for intervals
    const DistFamily kinds[7] = {DistFamily::LogNormal,   DistFamily::LogNormal,
                                 DistFamily::LogNormal,   DistFamily::Exponential,
                                 DistFamily::Exponential, DistFamily::Exponential,
                                 DistFamily::LogNormal};
    const Real bases[7] = {3.9, 8.5, 3.4, 50.0, 300.0, 100.0, 2.0};
    for (int c = 0; c < class_count; ++c) {
      for (int f = 0; f < feature_count; ++f) {
        FeatureDist& dist = spec.class_feature_dists[size_t(c)][size_t(f)];
        dist.family = kinds[f % 7];
        const Real base = bases[f % 7];
        if (dist.family == DistFamily::LogNormal) {
          dist.location = base + prof.normal(0.0, 1.0);
          dist.scale = prof.uniform(0.35, 0.65);
        } else {
          dist.location = base * prof.uniform(0.0, 2.0);
          dist.scale = base * prof.uniform(0.15, 0.35);
        }
      }
    }
    return spec;
  }

  if (profile == "heavy_tie") {
    // zero-inflated grid columns: 80% of mass at exactly zero, the rest on a
    // per-class signature grid that interleaves across classes, so quantile
    // bins merge neighboring signatures while equal-width bins keep them apart
    for (int c = 0; c < class_count; ++c) {
      for (int f = 0; f < feature_count; ++f) {
        FeatureDist& dist = spec.class_feature_dists[size_t(c)][size_t(f)];
        dist.family = DistFamily::Grid;
        dist.location = Real(c + 1);
        dist.scale = 1.0;
        dist.zero_prob = 0.8;
      }
    }
    for (int f = 0; f < feature_count; ++f)
      spec.schema.feature_names.push_back("tie_" + std::to_string(f));
    return spec;
  }

  throw InvalidValue("dataset.synthetic.profile", "unknown profile '" + profile + "'");
}

SynthSpec benchmark_synth_spec(std::uint64_t seed) {
  return synth_profile("flow", 8, 200, 7, 0.35, seed);
}

CliConfig parse_config_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw ParseError(origin + ":" + std::to_string(line) + " " + e.what());
  }
  if (!root.is_object()) throw ParseError(origin + ": top level must be an object");

  check_keys(root, "",
             {"seed", "out_dir", "threads", "formats", "dataset", "split", "families", "model",
              "defenses", "attacks", "stack"});

  CliConfig config;
  ExperimentConfig& exp = config.experiment;
  exp.seed = std::uint64_t(get_int(root, "", "seed", 1));
  exp.out_dir = get_string(root, "", "out_dir", "out");
  exp.threads = int(get_int(root, "", "threads", 1));

  if (root.contains("formats")) {
    if (!root["formats"].is_array()) throw InvalidValue("formats", "expected an array");
    exp.formats.clear();
    for (const auto& f : root["formats"]) {
      const std::string name = f.is_string() ? f.get<std::string>() : "";
      if (name == "csv") exp.formats.push_back(ReportFormat::Csv);
      else if (name == "markdown") exp.formats.push_back(ReportFormat::Markdown);
      else if (name == "svg") exp.formats.push_back(ReportFormat::SvgPlot);
      else throw InvalidValue("formats", "unknown format '" + name + "'");
    }
  }

  if (!root.contains("dataset") || !root["dataset"].is_object())
    throw InvalidValue("dataset", "required object");
  const json& dataset = root["dataset"];
  check_keys(dataset, "dataset", {"synthetic", "csv"});
  if (dataset.contains("synthetic") == dataset.contains("csv"))
    throw InvalidValue("dataset", "exactly one of synthetic/csv is required");
  if (dataset.contains("synthetic")) {
    const json& synth = dataset["synthetic"];
    check_keys(synth, "dataset.synthetic",
               {"profile", "class_count", "samples_per_class", "feature_count", "overlap",
                "seed", "dists"});
    const std::string profile = get_string(synth, "dataset.synthetic", "profile", "flow");
    const int classes = int(get_int(synth, "dataset.synthetic", "class_count", 8));
    const int per_class = int(get_int(synth, "dataset.synthetic", "samples_per_class", 200));
    const int features = int(get_int(synth, "dataset.synthetic", "feature_count", 7));
    const Real overlap = get_real(synth, "dataset.synthetic", "overlap", 0.35);
    const std::uint64_t synth_seed =
        std::uint64_t(get_int(synth, "dataset.synthetic", "seed",
                              std::int64_t(derive_seed(exp.seed, 1))));
    if (synth.contains("dists")) {
      // explicit per-class per-feature distribution table overriding the profile
      if (!synth["dists"].is_array())
        throw InvalidValue("dataset.synthetic.dists", "expected an array of class rows");
      SynthSpec spec;
      spec.samples_per_class = per_class;
      spec.overlap = overlap;
      spec.seed = synth_seed;
      for (const auto& row : synth["dists"]) {
        if (!row.is_array())
          throw InvalidValue("dataset.synthetic.dists", "class rows must be arrays");
        std::vector<FeatureDist> dists;
        for (const auto& cell : row) {
          check_keys(cell, "dataset.synthetic.dists", {"family", "location", "scale", "zero_prob"});
          FeatureDist dist;
          const std::string family =
              get_string(cell, "dataset.synthetic.dists", "family", "lognormal");
          if (family == "lognormal") dist.family = DistFamily::LogNormal;
          else if (family == "exponential") dist.family = DistFamily::Exponential;
          else if (family == "normal") dist.family = DistFamily::Normal;
          else if (family == "grid") dist.family = DistFamily::Grid;
          else throw InvalidValue("dataset.synthetic.dists.family", "unknown family '" + family + "'");
          dist.location = get_real(cell, "dataset.synthetic.dists", "location", 0.0);
          dist.scale = get_real(cell, "dataset.synthetic.dists", "scale", 1.0);
          dist.zero_prob = get_real(cell, "dataset.synthetic.dists", "zero_prob", 0.0);
          dists.push_back(dist);
        }
        spec.class_feature_dists.push_back(std::move(dists));
      }
      spec.class_count = int(spec.class_feature_dists.size());
      spec.validate();
      exp.synth = std::move(spec);
    } else {
      exp.synth = synth_profile(profile, classes, per_class, features, overlap, synth_seed);
    }
  } else {
    const json& csv = dataset["csv"];
    check_keys(csv, "dataset.csv", {"path", "feature_names", "label_name", "class_names"});
    exp.csv_path = get_string(csv, "dataset.csv", "path", "");
    if (exp.csv_path->empty()) throw InvalidValue("dataset.csv.path", "required");
    exp.csv_schema = default_flow_schema();
    if (csv.contains("feature_names")) {
      exp.csv_schema.feature_names.clear();
      for (const auto& n : csv["feature_names"])
        exp.csv_schema.feature_names.push_back(n.get<std::string>());
    }
    exp.csv_schema.label_name = get_string(csv, "dataset.csv", "label_name", "device");
    if (csv.contains("class_names"))
      for (const auto& n : csv["class_names"])
        exp.csv_schema.class_names.push_back(n.get<std::string>());
  }

  if (root.contains("split")) {
    check_keys(root["split"], "split", {"train_fraction"});
    exp.train_fraction = get_real(root["split"], "split", "train_fraction", 0.75);
  }

  if (!root.contains("families") || !root["families"].is_array())
    throw InvalidValue("families", "required array");
  for (const auto& f : root["families"])
    exp.families.push_back(model_family_from_string(f.is_string() ? f.get<std::string>() : ""));

  const json model_overrides = root.contains("model") ? root["model"] : json::object();
  check_keys(model_overrides, "model",
             {"decision_tree", "random_forest", "logistic_regression", "feedforward"});
  for (ModelFamily family : exp.families) {
    ModelSpec spec;
    spec.family = family;
    const std::string name = to_string(family);
    if (model_overrides.contains(name))
      spec = parse_model_overrides(model_overrides[name], "model." + name, spec);
    spec.family = family;
    spec.validate();
    exp.family_specs.push_back(spec);
  }

  if (!root.contains("defenses") || !root["defenses"].is_array())
    throw InvalidValue("defenses", "required array");
  for (const auto& d : root["defenses"]) {
    if (!d.is_object()) throw InvalidValue("defenses", "entries must be objects");
    check_keys(d, "defenses", {"name", "bins", "encoding"});
    DefenseSpec defense;
    defense.kind = defense_kind_from_string(get_string(d, "defenses", "name", ""), "defenses.name");
    defense.bins = int(get_int(d, "defenses", "bins", 10));
    if (defense.bins < 1) throw InvalidValue("defenses.bins", "must be >= 1");
    defense.encoding =
        encoding_from_config(get_string(d, "defenses", "encoding", "one-hot"), "defenses.encoding");
    exp.defenses.push_back(defense);
  }

  if (!root.contains("attacks") || !root["attacks"].is_array())
    throw InvalidValue("attacks", "required array");
  for (const auto& a : root["attacks"]) {
    if (!a.is_object()) throw InvalidValue("attacks", "entries must be objects");
    exp.attacks.push_back(parse_attack(a, "attacks"));
  }

  if (root.contains("stack")) {
    const json& stack = root["stack"];
    check_keys(stack, "stack", {"fold_count", "bases"});
    exp.stack_fold_count = int(get_int(stack, "stack", "fold_count", 5));
    if (stack.contains("bases")) {
      exp.stack_bases.clear();
      for (const auto& b : stack["bases"])
        exp.stack_bases.push_back(defense_kind_from_string(
            b.is_string() ? b.get<std::string>() : "", "stack.bases"));
    }
  }

  exp.validate();
  return config;
}

CliConfig parse_config(const std::string& path) {
  return parse_config_text(read_text_file(path), path);
}

}  // namespace binshield
