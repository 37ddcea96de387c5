#include "binshield/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "binshield/errors.hpp"
#include "binshield/rng.hpp"
#include "binshield/serialize.hpp"

namespace binshield {

namespace {

void require_distinct(const std::vector<std::string>& names, const char* what) {
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != names.size())
    throw InvalidSpec(std::string(what) + " must be pairwise distinct");
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

void FeatureSchema::validate() const {
  if (feature_names.empty()) throw InvalidSpec("feature_names must be non-empty");
  require_distinct(feature_names, "feature_names");
  require_distinct(class_names, "class_names");
}

FeatureSchema default_flow_schema() {
  FeatureSchema schema;
  schema.feature_names = {"traffic_flow", "flow_volume",  "flow_duration", "sleep_time",
                          "ntp_interval", "dns_interval", "domain_count"};
  schema.label_name = "device";
  return schema;
}

void Dataset::validate() const {
  schema.validate();
  if (schema.class_names.empty()) throw InvalidSpec("dataset needs at least one class");
  if (features.rows() < 1) throw InvalidSpec("dataset needs at least one row");
  if (features.cols() != Eigen::Index(schema.feature_names.size()))
    throw DimensionMismatch("feature matrix width does not match schema");
  if (Eigen::Index(labels.size()) != features.rows())
    throw DimensionMismatch("label count does not match row count");
  if (!features.allFinite()) throw InvalidSpec("feature matrix contains non-finite values");
  for (int label : labels)
    if (label < 0 || label >= class_count())
      throw InvalidSpec("label index " + std::to_string(label) + " out of range");
}

std::vector<int> Dataset::class_histogram() const {
  std::vector<int> counts(size_t(class_count()), 0);
  for (int label : labels) counts[size_t(label)]++;
  return counts;
}

void SynthSpec::validate() const {
  if (class_count < 1) throw InvalidSpec("class_count must be positive");
  if (samples_per_class < 1) throw InvalidSpec("samples_per_class must be positive");
  if (overlap < 0.0 || overlap > 1.0) throw InvalidSpec("overlap must lie in [0,1]");
  if (int(class_feature_dists.size()) != class_count)
    throw InvalidSpec("class_feature_dists must have one row per class");
  const int d = feature_count();
  if (d < 1) throw InvalidSpec("need at least one feature distribution");
  for (const auto& row : class_feature_dists) {
    if (int(row.size()) != d)
      throw InvalidSpec("all classes must declare the same feature count");
    for (const auto& dist : row) {
      if (!(dist.scale > 0.0)) throw InvalidSpec("scale parameters must be positive");
      if (dist.zero_prob < 0.0 || dist.zero_prob >= 1.0)
        throw InvalidSpec("zero_prob must lie in [0,1)");
    }
  }
}

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const int C = spec.class_count;
  const int d = spec.feature_count();
  const int n = C * spec.samples_per_class;

  // Class locations shrink toward the per-feature center as overlap grows.
  Matrix location(C, d);
  for (int c = 0; c < C; ++c)
    for (int f = 0; f < d; ++f) location(c, f) = spec.class_feature_dists[c][f].location;
  const Vector center = location.colwise().mean().transpose();
  for (int c = 0; c < C; ++c)
    for (int f = 0; f < d; ++f)
      location(c, f) = center[f] + (1.0 - spec.overlap) * (location(c, f) - center[f]);

  Dataset data;
  data.schema = spec.schema;
  if (data.schema.feature_names.empty())
    for (int f = 0; f < d; ++f) data.schema.feature_names.push_back("feature_" + std::to_string(f));
  if (data.schema.class_names.empty())
    for (int c = 0; c < C; ++c) data.schema.class_names.push_back("class_" + std::to_string(c));
  if (int(data.schema.class_names.size()) != C)
    throw InvalidSpec("schema class_names must match class_count");

  data.features.resize(n, d);
  data.labels.assign(size_t(n), 0);

  Rng rng(spec.seed);
  int row = 0;
  for (int c = 0; c < C; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      data.labels[size_t(row)] = c;
      for (int f = 0; f < d; ++f) {
        const FeatureDist& dist = spec.class_feature_dists[c][f];
        const double gate = rng.uniform();
        Real v = 0.0;
        if (gate >= dist.zero_prob) {
          const Real loc = location(c, f);
          switch (dist.family) {
            case DistFamily::LogNormal:
              v = rng.lognormal(loc, dist.scale);
              break;
            case DistFamily::Exponential:
              v = loc + rng.exponential(dist.scale);
              break;
            case DistFamily::Normal:
              v = rng.normal(loc, dist.scale);
              break;
            case DistFamily::Grid:
              v = loc + Real(rng.uniform_int(8)) * 8.0 * dist.scale;
              break;
          }
          v = std::max(Real(0), v);  // flow features are non-negative
        }
        data.features(row, f) = v;
      }
    }
  }
  data.validate();
  return data;
}

Dataset load_csv(const std::string& path, FeatureSchema schema) {
  const std::string text = read_text_file(path);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw EmptyFile(path);

  std::vector<std::string> lines;
  std::string line;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(line);
      line.clear();
    } else {
      line.push_back(c);
    }
  }
  if (!line.empty()) lines.push_back(line);

  const std::vector<std::string> header = split_line(lines.front());
  std::vector<int> feature_cols;
  for (const std::string& name : schema.feature_names) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingColumn(name);
    feature_cols.push_back(int(it - header.begin()));
  }
  auto label_it = std::find(header.begin(), header.end(), schema.label_name);
  if (label_it == header.end()) throw MissingColumn(schema.label_name);
  const int label_col = int(label_it - header.begin());

  const bool open_classes = schema.class_names.empty();
  const int d = int(schema.feature_names.size());
  std::vector<Real> values;
  Labels labels;
  int row = 0;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;  // data rows count from 1
    const std::vector<std::string> cells = split_line(lines[i]);
    if (int(cells.size()) <= label_col ||
        int(cells.size()) <= *std::max_element(feature_cols.begin(), feature_cols.end()))
      throw UnparsableCell(row, "row has too few cells");
    for (int f = 0; f < d; ++f) {
      const std::string& cell = cells[size_t(feature_cols[size_t(f)])];
      Real v;
      try {
        v = parse_real(cell);
      } catch (const Error&) {
        throw UnparsableCell(row, schema.feature_names[size_t(f)]);
      }
      if (!std::isfinite(v)) throw NonFiniteValue(row, schema.feature_names[size_t(f)]);
      values.push_back(v);
    }
    const std::string& label_cell = cells[size_t(label_col)];
    auto it = std::find(schema.class_names.begin(), schema.class_names.end(), label_cell);
    if (it == schema.class_names.end()) {
      if (!open_classes) throw UnparsableCell(row, schema.label_name);
      schema.class_names.push_back(label_cell);
      it = schema.class_names.end() - 1;
    }
    labels.push_back(int(it - schema.class_names.begin()));
  }
  if (row == 0) throw EmptyFile(path);

  Dataset data;
  data.schema = std::move(schema);
  data.features.resize(row, d);
  for (int r = 0; r < row; ++r)
    for (int f = 0; f < d; ++f) data.features(r, f) = values[size_t(r) * size_t(d) + size_t(f)];
  data.labels = std::move(labels);
  data.validate();
  return data;
}

void save_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::string out;
  for (const std::string& name : data.schema.feature_names) out += name + ",";
  out += data.schema.label_name + "\n";
  for (int r = 0; r < data.sample_count(); ++r) {
    for (int f = 0; f < data.feature_count(); ++f) out += format_real(data.features(r, f)) + ",";
    out += data.schema.class_names[size_t(data.labels[size_t(r)])] + "\n";
  }
  write_text_file(path, out);
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& data, Real train_fraction,
                                             std::uint64_t seed) {
  data.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidSpec("train_fraction must lie in (0,1)");

  const int C = data.class_count();
  std::vector<std::vector<int>> by_class(static_cast<size_t>(C));
  for (int r = 0; r < data.sample_count(); ++r)
    by_class[size_t(data.labels[size_t(r)])].push_back(r);
  for (int c = 0; c < C; ++c)
    if (by_class[size_t(c)].size() < 2) throw ClassTooSmall(c);

  Rng rng(seed);
  std::vector<char> in_train(size_t(data.sample_count()), 0);
  for (int c = 0; c < C; ++c) {
    auto& rows = by_class[size_t(c)];
    rng.shuffle(rows);
    const int n_c = int(rows.size());
    const int want = int(std::lround(train_fraction * n_c));
    const int take = std::clamp(want, 1, n_c - 1);
    for (int i = 0; i < take; ++i) in_train[size_t(rows[size_t(i)])] = 1;
  }

  auto subset = [&](bool train) {
    Dataset part;
    part.schema = data.schema;
    std::vector<int> keep;
    for (int r = 0; r < data.sample_count(); ++r)
      if (bool(in_train[size_t(r)]) == train) keep.push_back(r);
    part.features.resize(Eigen::Index(keep.size()), data.feature_count());
    for (size_t i = 0; i < keep.size(); ++i) {
      part.features.row(Eigen::Index(i)) = data.features.row(keep[i]);
      part.labels.push_back(data.labels[size_t(keep[i])]);
    }
    return part;
  };
  return {subset(true), subset(false)};
}

}  // namespace binshield
