#pragma once

#include "opflow/model/values.hpp"
#include "opflow/model/workflow.hpp"

namespace opflow {

/// Checks `values` against `signature` and returns the normalized map:
/// defaults injected for absent entries, parameter texts canonicalized.
/// Throws Error with MissingInput, TypeMismatch, UnknownKey or ValueTooLarge.
/// Idempotent: typecheck_io(sig, typecheck_io(sig, v)) == typecheck_io(sig, v).
IoValues typecheck_io(const Signature& signature, const IoValues& values);

/// Converts a parameter into a JSON document text (numbers stay numbers,
/// strings become JSON strings).
std::string parameter_to_json_text(const ParameterValue& value);

}  // namespace opflow
