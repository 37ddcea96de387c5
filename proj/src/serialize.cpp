#include "binshield/serialize.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "binshield/errors.hpp"

namespace binshield {

namespace fs = std::filesystem;

std::string format_real(Real v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IoError("failed to format real");
  return std::string(buf, ptr);
}

Real parse_real(const std::string& s) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  Real v = 0;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  while (ptr < end && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
  if (ec != std::errc() || ptr != end)
    throw IoError("unparsable real '" + s + "'");
  return v;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

namespace {

constexpr const char* kSchemeTag = "binshield/scheme/v1";
constexpr const char* kModelTag = "binshield/model/v1";
constexpr const char* kScalerTag = "binshield/scaler/v1";
constexpr const char* kStackTag = "binshield/stack/v1";

class LineReader {
 public:
  explicit LineReader(const std::string& text) : stream_(text) {}

  std::string line() {
    std::string l;
    if (!std::getline(stream_, l)) throw IoError("unexpected end of artifact");
    if (!l.empty() && l.back() == '\r') l.pop_back();
    return l;
  }

  std::vector<std::string> tokens() {
    std::istringstream ls(line());
    std::vector<std::string> out;
    std::string tok;
    while (ls >> tok) out.push_back(tok);
    return out;
  }

 private:
  std::istringstream stream_;
};

void expect_tag(LineReader& reader, const char* tag) {
  if (reader.line() != tag) throw IoError(std::string("bad artifact tag, expected ") + tag);
}

Encoding encoding_from_string(const std::string& s) {
  if (s == "bin-index") return Encoding::BinIndex;
  if (s == "bin-midpoint") return Encoding::BinMidpoint;
  if (s == "one-hot") return Encoding::OneHot;
  throw IoError("unknown encoding " + s);
}

BinMethod method_from_string(const std::string& s) {
  if (s == "EW") return BinMethod::EqualWidth;
  if (s == "EF") return BinMethod::EqualFrequency;
  if (s == "MDL") return BinMethod::Mdlp;
  if (s == "EBD") return BinMethod::EntropyBins;
  if (s == "none") return BinMethod::None;
  throw IoError("unknown bin method " + s);
}

void append_matrix(std::string& out, const Matrix& m) {
  out += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += " ";
      out += format_real(m(r, c));
    }
    out += "\n";
  }
}

Matrix read_matrix(LineReader& reader) {
  const auto dims = reader.tokens();
  if (dims.size() != 2) throw IoError("bad matrix header");
  Matrix m(std::stol(dims[0]), std::stol(dims[1]));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto row = reader.tokens();
    if (Eigen::Index(row.size()) != m.cols()) throw IoError("bad matrix row");
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = parse_real(row[size_t(c)]);
  }
  return m;
}

void append_vector(std::string& out, const Vector& v) {
  out += std::to_string(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out += " " + format_real(v[i]);
  out += "\n";
}

Vector read_vector(const std::vector<std::string>& tokens, size_t offset = 0) {
  if (tokens.size() <= offset) throw IoError("bad vector line");
  const long n = std::stol(tokens[offset]);
  if (long(tokens.size()) != long(offset) + 1 + n) throw IoError("bad vector length");
  Vector v(n);
  for (long i = 0; i < n; ++i) v[i] = parse_real(tokens[offset + 1 + size_t(i)]);
  return v;
}

void append_tree(std::string& out, const DecisionTreeModel& tree) {
  out += "tree " + std::to_string(tree.nodes.size()) + "\n";
  for (const auto& node : tree.nodes) {
    out += std::to_string(node.feature) + " " + format_real(node.threshold) + " " +
           std::to_string(node.left) + " " + std::to_string(node.right) + " ";
    append_vector(out, node.class_probs);
  }
}

DecisionTreeModel read_tree(LineReader& reader) {
  const auto head = reader.tokens();
  if (head.size() != 2 || head[0] != "tree") throw IoError("bad tree header");
  DecisionTreeModel tree;
  tree.nodes.resize(size_t(std::stol(head[1])));
  for (auto& node : tree.nodes) {
    const auto toks = reader.tokens();
    if (toks.size() < 5) throw IoError("bad tree node");
    node.feature = std::stoi(toks[0]);
    node.threshold = parse_real(toks[1]);
    node.left = std::stoi(toks[2]);
    node.right = std::stoi(toks[3]);
    node.class_probs = read_vector(toks, 4);
  }
  return tree;
}

}  // namespace

std::string scheme_to_text(const DiscretizationScheme& scheme) {
  std::string out = std::string(kSchemeTag) + "\n";
  out += "method " + to_string(scheme.method) + "\n";
  out += "encoding " + to_string(scheme.encoding) + "\n";
  out += "features " + std::to_string(scheme.feature_count()) + "\n";
  for (const auto& bins : scheme.features) {
    out += format_real(bins.train_min) + " " + format_real(bins.train_max) + " " +
           std::to_string(bins.cuts.size());
    for (Real c : bins.cuts) out += " " + format_real(c);
    out += "\n";
  }
  return out;
}

DiscretizationScheme scheme_from_text(const std::string& text) {
  LineReader reader(text);
  expect_tag(reader, kSchemeTag);
  DiscretizationScheme scheme;
  auto method = reader.tokens();
  if (method.size() != 2 || method[0] != "method") throw IoError("bad scheme method line");
  scheme.method = method_from_string(method[1]);
  auto encoding = reader.tokens();
  if (encoding.size() != 2 || encoding[0] != "encoding") throw IoError("bad scheme encoding");
  scheme.encoding = encoding_from_string(encoding[1]);
  auto count = reader.tokens();
  if (count.size() != 2 || count[0] != "features") throw IoError("bad scheme feature count");
  scheme.features.resize(size_t(std::stol(count[1])));
  for (auto& bins : scheme.features) {
    const auto toks = reader.tokens();
    if (toks.size() < 3) throw IoError("bad scheme feature line");
    bins.train_min = parse_real(toks[0]);
    bins.train_max = parse_real(toks[1]);
    const size_t n_cuts = size_t(std::stol(toks[2]));
    if (toks.size() != 3 + n_cuts) throw IoError("bad cut list");
    for (size_t i = 0; i < n_cuts; ++i) bins.cuts.push_back(parse_real(toks[3 + i]));
  }
  scheme.validate();
  return scheme;
}

void save_scheme(const DiscretizationScheme& scheme, const std::string& path) {
  write_text_file(path, scheme_to_text(scheme));
}

DiscretizationScheme load_scheme(const std::string& path) {
  return scheme_from_text(read_text_file(path));
}

std::string model_to_text(const TrainedModel& model) {
  const ModelSpec& s = model.spec;
  std::string out = std::string(kModelTag) + "\n";
  out += "family " + to_string(s.family) + "\n";
  out += "dims " + std::to_string(model.input_dim) + " " + std::to_string(model.class_count) +
         "\n";
  out += "spec " + std::to_string(s.max_depth) + " " + std::to_string(s.min_leaf) + " " +
         std::to_string(s.tree_count) + " " + std::to_string(s.feature_subsample) + " " +
         std::to_string(int(s.bootstrap)) + " " + format_real(s.learning_rate) + " " +
         std::to_string(s.epoch_count) + " " + std::to_string(s.batch_size) + " " +
         format_real(s.l2_penalty) + " " + std::to_string(s.seed);
  out += " " + std::to_string(s.hidden_layer_widths.size());
  for (int w : s.hidden_layer_widths) out += " " + std::to_string(w);
  out += "\n";

  if (const auto* tree = std::get_if<DecisionTreeModel>(&model.impl)) {
    out += "kind tree\n";
    append_tree(out, *tree);
  } else if (const auto* forest = std::get_if<RandomForestModel>(&model.impl)) {
    out += "kind forest " + std::to_string(forest->trees.size()) + "\n";
    for (const auto& tree : forest->trees) append_tree(out, tree);
  } else if (const auto* lr = std::get_if<LogisticRegressionModel>(&model.impl)) {
    out += "kind logistic\n";
    append_matrix(out, lr->weights);
    append_vector(out, lr->bias);
  } else {
    const auto& ff = std::get<FeedforwardModel>(model.impl);
    out += "kind feedforward " + std::to_string(ff.weights.size()) + "\n";
    for (size_t l = 0; l < ff.weights.size(); ++l) {
      append_matrix(out, ff.weights[l]);
      append_vector(out, ff.biases[l]);
    }
  }
  return out;
}

TrainedModel model_from_text(const std::string& text) {
  LineReader reader(text);
  expect_tag(reader, kModelTag);
  TrainedModel model;

  auto family = reader.tokens();
  if (family.size() != 2 || family[0] != "family") throw IoError("bad model family line");
  model.spec.family = model_family_from_string(family[1]);

  auto dims = reader.tokens();
  if (dims.size() != 3 || dims[0] != "dims") throw IoError("bad model dims line");
  model.input_dim = std::stoi(dims[1]);
  model.class_count = std::stoi(dims[2]);

  auto spec = reader.tokens();
  if (spec.size() < 12 || spec[0] != "spec") throw IoError("bad model spec line");
  ModelSpec& s = model.spec;
  s.max_depth = std::stoi(spec[1]);
  s.min_leaf = std::stoi(spec[2]);
  s.tree_count = std::stoi(spec[3]);
  s.feature_subsample = std::stoi(spec[4]);
  s.bootstrap = spec[5] == "1";
  s.learning_rate = parse_real(spec[6]);
  s.epoch_count = std::stoi(spec[7]);
  s.batch_size = std::stoi(spec[8]);
  s.l2_penalty = parse_real(spec[9]);
  s.seed = std::stoull(spec[10]);
  const size_t n_hidden = size_t(std::stol(spec[11]));
  if (spec.size() != 12 + n_hidden) throw IoError("bad hidden width list");
  s.hidden_layer_widths.clear();
  for (size_t i = 0; i < n_hidden; ++i) s.hidden_layer_widths.push_back(std::stoi(spec[12 + i]));

  auto kind = reader.tokens();
  if (kind.empty() || kind[0] != "kind") throw IoError("bad model kind line");
  if (kind[1] == "tree") {
    model.impl = read_tree(reader);
  } else if (kind[1] == "forest") {
    RandomForestModel forest;
    forest.trees.resize(size_t(std::stol(kind.at(2))));
    for (auto& tree : forest.trees) tree = read_tree(reader);
    model.impl = std::move(forest);
  } else if (kind[1] == "logistic") {
    LogisticRegressionModel lr;
    lr.weights = read_matrix(reader);
    lr.bias = read_vector(reader.tokens());
    model.impl = std::move(lr);
  } else if (kind[1] == "feedforward") {
    FeedforwardModel ff;
    const size_t layers = size_t(std::stol(kind.at(2)));
    for (size_t l = 0; l < layers; ++l) {
      ff.weights.push_back(read_matrix(reader));
      ff.biases.push_back(read_vector(reader.tokens()));
    }
    model.impl = std::move(ff);
  } else {
    throw IoError("unknown model kind " + kind[1]);
  }
  return model;
}

void save_model(const TrainedModel& model, const std::string& path) {
  write_text_file(path, model_to_text(model));
}

TrainedModel load_model(const std::string& path) {
  return model_from_text(read_text_file(path));
}

std::string standardizer_to_text(const Standardizer& s) {
  std::string out = std::string(kScalerTag) + "\n";
  append_vector(out, s.mean);
  append_vector(out, s.stddev);
  return out;
}

Standardizer standardizer_from_text(const std::string& text) {
  LineReader reader(text);
  expect_tag(reader, kScalerTag);
  Standardizer s;
  s.mean = read_vector(reader.tokens());
  s.stddev = read_vector(reader.tokens());
  return s;
}

void save_standardizer(const Standardizer& s, const std::string& path) {
  write_text_file(path, standardizer_to_text(s));
}

Standardizer load_standardizer(const std::string& path) {
  return standardizer_from_text(read_text_file(path));
}

void save_batch_csv(const AdversarialBatch& batch, const std::string& path) {
  const int d = int(batch.original.cols());
  std::string out = "# attack=" + batch.attack_label + " substitute=" + batch.substitute_id +
                    "\n";
  for (int f = 0; f < d; ++f) out += "orig_" + std::to_string(f) + ",";
  for (int f = 0; f < d; ++f) out += "adv_" + std::to_string(f) + ",";
  out += "linf,modified\n";
  for (Eigen::Index r = 0; r < batch.original.rows(); ++r) {
    for (int f = 0; f < d; ++f) out += format_real(batch.original(r, f)) + ",";
    for (int f = 0; f < d; ++f) out += format_real(batch.perturbed(r, f)) + ",";
    out += format_real(batch.linf_norms[r]) + "," + std::to_string(batch.modified_counts[r]) +
           "\n";
  }
  write_text_file(path, out);
}

AdversarialBatch load_batch_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream stream(text);
  std::string line;
  if (!std::getline(stream, line) || line.rfind("# attack=", 0) != 0)
    throw IoError("bad batch header in " + path);
  AdversarialBatch batch;
  const size_t sub_pos = line.find(" substitute=");
  batch.attack_label = line.substr(9, sub_pos - 9);
  batch.substitute_id = line.substr(sub_pos + 12);
  if (!std::getline(stream, line)) throw IoError("missing batch column header");
  const int d = int(std::count(line.begin(), line.end(), ',') - 1) / 2;

  std::vector<std::vector<Real>> rows;
  std::vector<int> modified;
  while (std::getline(stream, line)) {
    if (line.empty()) continue;
    std::vector<Real> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(parse_real(cell));
    if (int(cells.size()) != 2 * d + 2) throw IoError("bad batch row width");
    modified.push_back(int(cells.back()));
    cells.pop_back();
    rows.push_back(std::move(cells));
  }
  const int n = int(rows.size());
  batch.original.resize(n, d);
  batch.perturbed.resize(n, d);
  batch.linf_norms.resize(n);
  batch.modified_counts.resize(n);
  for (int r = 0; r < n; ++r) {
    for (int f = 0; f < d; ++f) {
      batch.original(r, f) = rows[size_t(r)][size_t(f)];
      batch.perturbed(r, f) = rows[size_t(r)][size_t(d + f)];
    }
    batch.linf_norms[r] = rows[size_t(r)][size_t(2 * d)];
    batch.modified_counts[r] = modified[size_t(r)];
  }
  return batch;
}

void save_stack(const StackedModel& stack, const std::string& dir) {
  fs::create_directories(dir);
  std::string manifest = std::string(kStackTag) + "\n";
  manifest += "bases " + std::to_string(stack.bases.size()) + "\n";
  manifest += "dims " + std::to_string(stack.input_dim) + " " +
              std::to_string(stack.class_count) + "\n";
  manifest += "fold_count " + std::to_string(stack.spec.fold_count) + "\n";
  manifest += "seed " + std::to_string(stack.spec.seed) + "\n";
  for (size_t b = 0; b < stack.bases.size(); ++b) {
    const std::string scheme_file = "base" + std::to_string(b) + "_scheme.txt";
    const std::string model_file = "base" + std::to_string(b) + "_model.txt";
    manifest += "base " + std::to_string(b) + " " + scheme_file + " " + model_file + "\n";
    save_scheme(*stack.bases[b].defense, dir + "/" + scheme_file);
    save_model(stack.bases[b].model, dir + "/" + model_file);
  }
  manifest += "meta meta_model.txt\n";
  save_model(stack.meta, dir + "/meta_model.txt");
  write_text_file(dir + "/manifest.txt", manifest);
}

StackedModel load_stack(const std::string& dir) {
  LineReader reader(read_text_file(dir + "/manifest.txt"));
  expect_tag(reader, kStackTag);
  StackedModel stack;
  auto bases = reader.tokens();
  if (bases.size() != 2 || bases[0] != "bases") throw IoError("bad stack manifest");
  const size_t B = size_t(std::stol(bases[1]));
  auto dims = reader.tokens();
  if (dims.size() != 3 || dims[0] != "dims") throw IoError("bad stack dims");
  stack.input_dim = std::stoi(dims[1]);
  stack.class_count = std::stoi(dims[2]);
  auto folds = reader.tokens();
  if (folds.size() != 2 || folds[0] != "fold_count") throw IoError("bad stack folds");
  stack.spec.fold_count = std::stoi(folds[1]);
  auto seed = reader.tokens();
  if (seed.size() != 2 || seed[0] != "seed") throw IoError("bad stack seed");
  stack.spec.seed = std::stoull(seed[1]);
  for (size_t b = 0; b < B; ++b) {
    auto base = reader.tokens();
    if (base.size() != 4 || base[0] != "base") throw IoError("bad stack base line");
    Pipeline p;
    p.defense = load_scheme(dir + "/" + base[2]);
    p.model = load_model(dir + "/" + base[3]);
    stack.bases.push_back(std::move(p));
  }
  auto meta = reader.tokens();
  if (meta.size() != 2 || meta[0] != "meta") throw IoError("bad stack meta line");
  stack.meta = load_model(dir + "/" + meta[1]);
  // reconstruct enough spec for prediction and labeling
  for (const auto& base : stack.bases) {
    DiscretizerSpec disc;
    disc.method = base.defense->method;
    disc.encoding = base.defense->encoding;
    stack.spec.base_configs.emplace_back(disc, base.model.spec);
  }
  stack.spec.meta_spec = stack.meta.spec;
  return stack;
}

}  // namespace binshield
