#include "opflow/model/values.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <system_error>

#include <nlohmann/json.hpp>

#include "opflow/error.hpp"

namespace opflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidIdentifier: return "InvalidIdentifier";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::ValueTooLarge: return "ValueTooLarge";
    case ErrorCode::UnresolvedReference: return "UnresolvedReference";
    case ErrorCode::UnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::SliceLengthMismatch: return "SliceLengthMismatch";
    case ErrorCode::RecursionLimitExceeded: return "RecursionLimitExceeded";
    case ErrorCode::UnavailableOutput: return "UnavailableOutput";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::MissingOutputFile: return "MissingOutputFile";
    case ErrorCode::SourceMissing: return "SourceMissing";
    case ErrorCode::KeyInvalid: return "KeyInvalid";
    case ErrorCode::KeyMissing: return "KeyMissing";
    case ErrorCode::NotAFile: return "NotAFile";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::UnknownWorkflow: return "UnknownWorkflow";
    case ErrorCode::UnknownOutput: return "UnknownOutput";
    case ErrorCode::UnknownJobId: return "UnknownJobId";
    case ErrorCode::SubmissionFailed: return "SubmissionFailed";
    case ErrorCode::MachineUnreachable: return "MachineUnreachable";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(TypeTag tag) {
  switch (tag) {
    case TypeTag::String: return "string";
    case TypeTag::Int: return "int";
    case TypeTag::Float: return "float";
    case TypeTag::Bool: return "bool";
    case TypeTag::Json: return "json";
  }
  return "string";
}

std::optional<TypeTag> parse_type_tag(std::string_view text) {
  if (text == "string") return TypeTag::String;
  if (text == "int") return TypeTag::Int;
  if (text == "float") return TypeTag::Float;
  if (text == "bool") return TypeTag::Bool;
  if (text == "json") return TypeTag::Json;
  return std::nullopt;
}

namespace {

std::optional<std::string> canonical_int(std::string_view text) {
  std::string_view digits = text;
  bool negative = false;
  if (!digits.empty() && (digits.front() == '-' || digits.front() == '+')) {
    negative = digits.front() == '-';
    digits.remove_prefix(1);
  }
  if (digits.empty()) return std::nullopt;
  std::int64_t magnitude = 0;
  // Parse through int64 so out-of-range texts are rejected.
  std::string signed_text = negative ? "-" + std::string(digits) : std::string(digits);
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  auto [ptr, ec] = std::from_chars(signed_text.data(), signed_text.data() + signed_text.size(),
                                   magnitude);
  if (ec != std::errc{} || ptr != signed_text.data() + signed_text.size()) return std::nullopt;
  return std::to_string(magnitude);
}

std::optional<std::string> canonical_float(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::string_view body = text;
  if (body.front() == '+') body.remove_prefix(1);
  double value = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (ec != std::errc{} || ptr != body.data() + body.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

}  // namespace

std::optional<std::string> canonicalize(TypeTag tag, std::string_view text) {
  switch (tag) {
    case TypeTag::String:
      return std::string(text);
    case TypeTag::Int:
      return canonical_int(text);
    case TypeTag::Float:
      return canonical_float(text);
    case TypeTag::Bool:
      if (text == "true" || text == "True" || text == "TRUE") return "true";
      if (text == "false" || text == "False" || text == "FALSE") return "false";
      return std::nullopt;
    case TypeTag::Json: {
      auto doc = nlohmann::ordered_json::parse(text, nullptr, false);
      if (doc.is_discarded()) return std::nullopt;
      return doc.dump();
    }
  }
  return std::nullopt;
}

std::optional<Value> IoValues::find(const std::string& name) const {
  if (auto it = parameters.find(name); it != parameters.end()) return Value{it->second};
  if (auto it = artifacts.find(name); it != artifacts.end()) return Value{it->second};
  return std::nullopt;
}

void IoValues::set(const std::string& name, Value value) {
  if (auto* p = std::get_if<ParameterValue>(&value)) {
    artifacts.erase(name);
    parameters[name] = std::move(*p);
  } else {
    parameters.erase(name);
    artifacts[name] = std::get<ArtifactValue>(std::move(value));
  }
}

std::optional<Ratio> Ratio::parse(std::string_view text) {
  std::int64_t whole = 0;
  std::int64_t frac = 0;
  std::int64_t scale = 1;
  std::size_t i = 0;
  bool any_digit = false;
  for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i) {
    whole = whole * 10 + (text[i] - '0');
    any_digit = true;
    if (whole > 1) return std::nullopt;
  }
  if (i < text.size() && text[i] == '.') {
    ++i;
    for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i) {
      if (scale >= 1'000'000'000) return std::nullopt;
      frac = frac * 10 + (text[i] - '0');
      scale *= 10;
      any_digit = true;
    }
  }
  if (!any_digit || i != text.size()) return std::nullopt;
  Ratio r{whole * scale + frac, scale};
  if (r.numerator <= 0 || r.numerator > r.denominator) return std::nullopt;
  while (r.denominator > 1 && r.numerator % 10 == 0 && r.denominator % 10 == 0) {
    r.numerator /= 10;
    r.denominator /= 10;
  }
  return r;
}

std::int64_t Ratio::ceil_times(std::int64_t n) const {
  std::int64_t product = numerator * n;
  return (product + denominator - 1) / denominator;
}

std::string Ratio::to_string() const {
  if (numerator == denominator) return "1";
  std::string digits = std::to_string(numerator);
  std::size_t width = std::to_string(denominator).size() - 1;
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "0." + digits;
}

}  // namespace opflow
