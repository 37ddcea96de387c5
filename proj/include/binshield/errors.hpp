#pragma once

#include <stdexcept>
#include <string>

namespace binshield {

/// Base class for all toolkit errors. `kind()` is a stable machine-readable tag.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// dataset
struct MissingColumn : Error {
  explicit MissingColumn(const std::string& name)
      : Error("MissingColumn", name), column(name) {}
  std::string column;
};
struct UnparsableCell : Error {
  UnparsableCell(int r, const std::string& col)
      : Error("UnparsableCell", "row " + std::to_string(r) + ", column " + col),
        row(r),
        column(col) {}
  int row;
  std::string column;
};
struct EmptyFile : Error {
  explicit EmptyFile(const std::string& path) : Error("EmptyFile", path) {}
};
struct NonFiniteValue : Error {
  NonFiniteValue(int r, const std::string& col)
      : Error("NonFiniteValue", "row " + std::to_string(r) + ", column " + col),
        row(r),
        column(col) {}
  int row;
  std::string column;
};
struct InvalidSpec : Error {
  explicit InvalidSpec(const std::string& reason) : Error("InvalidSpec", reason) {}
};
struct ClassTooSmall : Error {
  explicit ClassTooSmall(int cls)
      : Error("ClassTooSmall", "class " + std::to_string(cls)), class_index(cls) {}
  int class_index;
};

// discretize
struct EmptyColumn : Error {
  explicit EmptyColumn(int col) : Error("EmptyColumn", "column " + std::to_string(col)) {}
};
struct LabelMismatch : Error {
  explicit LabelMismatch(const std::string& why) : Error("LabelMismatch", why) {}
};
struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& why) : Error("DimensionMismatch", why) {}
};

// models
struct DegenerateData : Error {
  explicit DegenerateData(const std::string& why) : Error("DegenerateData", why) {}
};
struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(const std::string& why) : Error("NonFiniteLoss", why) {}
};
struct NotDifferentiable : Error {
  explicit NotDifferentiable(const std::string& why) : Error("NotDifferentiable", why) {}
};
struct NoTargetAvailable : Error {
  NoTargetAvailable() : Error("NoTargetAvailable", "single-class model has no target") {}
};

// evaluate
struct ZeroCleanAccuracy : Error {
  ZeroCleanAccuracy() : Error("ZeroCleanAccuracy", "clean accuracy must be > 0") {}
};
struct ConfigInvalid : Error {
  explicit ConfigInvalid(const std::string& why) : Error("ConfigInvalid", why) {}
};

// config / cli
struct ParseError : Error {
  explicit ParseError(const std::string& location)
      : Error("ParseError", location), location(location) {}
  std::string location;
};
struct UnknownKey : Error {
  explicit UnknownKey(const std::string& k) : Error("UnknownKey", k), key(k) {}
  std::string key;
};
struct InvalidValue : Error {
  InvalidValue(const std::string& k, const std::string& reason)
      : Error("InvalidValue", k + ": " + reason), key(k), reason(reason) {}
  std::string key;
  std::string reason;
};
struct MissingArtifact : Error {
  explicit MissingArtifact(const std::string& name)
      : Error("MissingArtifact", name), artifact(name) {}
  std::string artifact;
};
struct IoError : Error {
  explicit IoError(const std::string& why) : Error("IoError", why) {}
};

}  // namespace binshield
