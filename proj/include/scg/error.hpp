#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scg {

enum class Errc {
  // parsing
  MissingKey,
  BadNumber,
  UnknownAction,
  UnknownKind,
  UnknownLabel,
  MalformedQuote,
  MalformedToken,
  DuplicateKey,
  FieldCount,
  SyntaxError,
  TypeMismatch,
  KindMismatch,
  Io,
  // graph
  BadKey,
  OutOfOrder,
  MappingGap,
  UnknownNode,
  UnknownEdge,
  // features / model
  NegativeDelta,
  TimeRegression,
  EmptyBatch,
  BadEpsilon,
  ShapeMismatch,
  EmptySample,
  // detection
  NonFinite,
  MissingLabels,
  // simgen
  BadConfig,
  BadFraction,
  // cli / persistence
  UnknownCommand,
  ConfigError,
  BadMagic,
  Truncated,
  VersionUnsupported,
};

inline constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::MissingKey: return "MissingKey";
    case Errc::BadNumber: return "BadNumber";
    case Errc::UnknownAction: return "UnknownAction";
    case Errc::UnknownKind: return "UnknownKind";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::MalformedQuote: return "MalformedQuote";
    case Errc::MalformedToken: return "MalformedToken";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::FieldCount: return "FieldCount";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::TypeMismatch: return "TypeMismatch";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::Io: return "Io";
    case Errc::BadKey: return "BadKey";
    case Errc::OutOfOrder: return "OutOfOrder";
    case Errc::MappingGap: return "MappingGap";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::UnknownEdge: return "UnknownEdge";
    case Errc::NegativeDelta: return "NegativeDelta";
    case Errc::TimeRegression: return "TimeRegression";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::BadEpsilon: return "BadEpsilon";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptySample: return "EmptySample";
    case Errc::NonFinite: return "NonFinite";
    case Errc::MissingLabels: return "MissingLabels";
    case Errc::BadConfig: return "BadConfig";
    case Errc::BadFraction: return "BadFraction";
    case Errc::UnknownCommand: return "UnknownCommand";
    case Errc::ConfigError: return "ConfigError";
    case Errc::BadMagic: return "BadMagic";
    case Errc::Truncated: return "Truncated";
    case Errc::VersionUnsupported: return "VersionUnsupported";
  }
  return "Unknown";
}

/// Error carrying a machine-checkable code plus the offending token/key/value.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail)
      : std::runtime_error(std::string(errc_name(code)) + "(" + detail + ")"),
        code_(code),
        detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace scg
