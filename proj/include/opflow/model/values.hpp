#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace opflow {

/// Upper bound on parameter text; anything larger belongs in an artifact.
inline constexpr std::size_t kMaxParameterBytes = 1024 * 1024;

enum class TypeTag { String, Int, Float, Bool, Json };

std::string_view to_string(TypeTag tag);
std::optional<TypeTag> parse_type_tag(std::string_view text);

/// Returns the canonical text for `text` under `tag`, or nullopt if the text
/// does not parse. Canonicalization is idempotent.
std::optional<std::string> canonicalize(TypeTag tag, std::string_view text);

/// A parameter as it travels through a workflow: serialized text plus tag.
struct ParameterValue {
  std::string text;
  TypeTag type_tag = TypeTag::String;

  static ParameterValue string(std::string text) {
    return {std::move(text), TypeTag::String};
  }
  static ParameterValue integer(std::int64_t value) {
    return {std::to_string(value), TypeTag::Int};
  }

  friend bool operator==(const ParameterValue&, const ParameterValue&) = default;
};

/// An artifact reference. `location` is a storage key, or a local path when it
/// starts with '/' or '.'.
struct ArtifactValue {
  std::string location;
  bool optional = false;

  bool is_local_path() const {
    return !location.empty() && (location.front() == '/' || location.front() == '.');
  }
  bool absent() const { return location.empty(); }

  friend bool operator==(const ArtifactValue&, const ArtifactValue&) = default;
};

using Value = std::variant<ParameterValue, ArtifactValue>;

/// Inputs or outputs of one template instance, keyed by name.
struct IoValues {
  std::map<std::string, ParameterValue> parameters;
  std::map<std::string, ArtifactValue> artifacts;

  bool empty() const { return parameters.empty() && artifacts.empty(); }
  std::optional<Value> find(const std::string& name) const;
  void set(const std::string& name, Value value);

  friend bool operator==(const IoValues&, const IoValues&) = default;
};

/// Exact rational in (0, 1], parsed from decimal text such as "0.7".
struct Ratio {
  std::int64_t numerator = 1;
  std::int64_t denominator = 1;

  static std::optional<Ratio> parse(std::string_view text);
  /// ceil(ratio * n) computed without floating point.
  std::int64_t ceil_times(std::int64_t n) const;
  std::string to_string() const;

  friend bool operator==(const Ratio&, const Ratio&) = default;
};

}  // namespace opflow
