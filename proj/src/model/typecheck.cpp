#include "opflow/model/typecheck.hpp"

#include <nlohmann/json.hpp>

#include "opflow/error.hpp"

namespace opflow {

namespace {

ParameterValue check_parameter(const ParameterSpec& spec, const ParameterValue& value) {
  if (value.text.size() > kMaxParameterBytes) {
    throw Error(ErrorCode::ValueTooLarge,
                "parameter '" + spec.name + "' exceeds " + std::to_string(kMaxParameterBytes) +
                    " bytes; pass it as an artifact");
  }
  auto canonical = canonicalize(spec.type_tag, value.text);
  if (!canonical) {
    throw Error(ErrorCode::TypeMismatch, "parameter '" + spec.name + "' value '" +
                                             value.text.substr(0, 64) + "' is not a valid " +
                                             std::string(to_string(spec.type_tag)));
  }
  return ParameterValue{std::move(*canonical), spec.type_tag};
}

}  // namespace

IoValues typecheck_io(const Signature& signature, const IoValues& values) {
  for (const auto& [name, _] : values.parameters) {
    if (signature.find_parameter(name) == nullptr) {
      if (signature.find_artifact(name) != nullptr) {
        throw Error(ErrorCode::TypeMismatch, "'" + name + "' is an artifact, got a parameter");
      }
      throw Error(ErrorCode::UnknownKey, "unknown parameter '" + name + "'");
    }
  }
  for (const auto& [name, _] : values.artifacts) {
    if (signature.find_artifact(name) == nullptr) {
      if (signature.find_parameter(name) != nullptr) {
        throw Error(ErrorCode::TypeMismatch, "'" + name + "' is a parameter, got an artifact");
      }
      throw Error(ErrorCode::UnknownKey, "unknown artifact '" + name + "'");
    }
  }

  IoValues checked;
  for (const auto& spec : signature.parameters) {
    if (auto it = values.parameters.find(spec.name); it != values.parameters.end()) {
      checked.parameters[spec.name] = check_parameter(spec, it->second);
    } else if (spec.default_value) {
      checked.parameters[spec.name] =
          check_parameter(spec, ParameterValue{*spec.default_value, spec.type_tag});
    } else if (!spec.optional) {
      throw Error(ErrorCode::MissingInput, "missing parameter '" + spec.name + "'");
    }
  }
  for (const auto& spec : signature.artifacts) {
    auto it = values.artifacts.find(spec.name);
    if (it != values.artifacts.end() && !it->second.absent()) {
      checked.artifacts[spec.name] = ArtifactValue{it->second.location, spec.optional};
    } else if (spec.default_location) {
      checked.artifacts[spec.name] = ArtifactValue{*spec.default_location, spec.optional};
    } else if (!spec.optional) {
      throw Error(ErrorCode::MissingInput, "missing artifact '" + spec.name + "'");
    }
  }
  return checked;
}

std::string parameter_to_json_text(const ParameterValue& value) {
  switch (value.type_tag) {
    case TypeTag::Int:
    case TypeTag::Float:
    case TypeTag::Bool:
    case TypeTag::Json: {
      auto doc = nlohmann::ordered_json::parse(value.text, nullptr, false);
      if (!doc.is_discarded()) return doc.dump();
      break;
    }
    case TypeTag::String:
      break;
  }
  return nlohmann::ordered_json(value.text).dump();
}

}  // namespace opflow
