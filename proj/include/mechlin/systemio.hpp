#pragma once

// On-disk formats: system definition files, transformation artifacts, and
// check reports.
//
// A system file is a JSON object with fields
//   n       integer dimension (>= 2)
//   params  object mapping parameter names to numbers
//   gamma   list of {i, j, k, expr} entries with 1-based indices and j <= k;
//           omitted entries are zero
//   e, g    n expression strings each
//   domain  n [lo, hi] pairs
//   name    optional label
// Expressions use the grammar of parse_expr.
//
// A transformation artifact stores the synthesized diffeomorphism, feedback,
// and linear model as expression strings and numeric arrays, together with a
// fingerprint of the system it was built from.  Numerically tabulated
// univariate functions appearing in the expressions are serialized as knot
// tables and re-registered on load.

#include "mechlin/checker.hpp"
#include "mechlin/synthesis.hpp"
#include "mechlin/system.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mechlin {

/// Malformed or inconsistent input file; the message carries the origin
/// (path or label) and, for syntax errors, the line and column.
struct FileFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The artifact was built from a different system than the one supplied.
struct ArtifactMismatch : FileFormatError {
    using FileFormatError::FileFormatError;
};

/// Parse and validate a system definition.  `origin` labels diagnostics when
/// loading from text.
MechanicalSystem load_system(const std::string& path);
MechanicalSystem load_system_text(const std::string& text, const std::string& origin);

/// Serialize a system back into the definition format (canonical expression
/// rendering, sorted parameters).
std::string system_to_json(const MechanicalSystem& sys);

/// FNV-1a 64 over a canonical rendering of dimension, parameters, domain,
/// and simplified field expressions.  The label is excluded: renaming a
/// system does not invalidate artifacts built from it.
std::uint64_t system_fingerprint(const MechanicalSystem& sys);

/// Write / read a transformation artifact.  Loading verifies the embedded
/// fingerprint against `sys` and throws ArtifactMismatch when they differ.
void save_artifact(const Linearization& lin, const MechanicalSystem& sys,
                   const std::string& path);
std::string artifact_to_json(const Linearization& lin, const MechanicalSystem& sys);
Linearization load_artifact(const std::string& path, const MechanicalSystem& sys);
Linearization load_artifact_text(const std::string& text, const std::string& origin,
                                 const MechanicalSystem& sys);

/// Check report rendered as JSON (stable key order:
/// overall / conditions[{condition, status, residual, witness,
/// samples_failed}] / notes) or as an aligned text table.
std::string report_to_json(const MFReport& report);
std::string report_to_text(const MFReport& report);

}  // namespace mechlin
