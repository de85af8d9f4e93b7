#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gotcqa {

/// Failure categories raised by the library. Every public error path throws
/// `gotcqa::Error` carrying one of these codes so callers can branch on kind.
enum class Errc {
  // tensor core
  ShapeMismatch,
  HeadDivisibility,
  IndexOutOfVocab,
  NoTape,
  InvalidStep,
  NonFiniteValue,
  // graph IR
  UnknownNode,
  CyclicGraph,
  SchemaError,
  // question parsing
  RuleSyntaxError,
  SlotMismatch,
  NoTemplateMatch,
  ProviderUnreachable,
  ProviderSchemaError,
  ProviderGraphInvalid,
  Unparseable,
  // chart features
  FormatError,
  EmptyChart,
  // reasoning / decoding
  EmptyPrecursors,
  EmptyGuidance,
  UnsupportedType,
  EmptyTarget,
  // symbolic executor
  UnresolvableEntity,
  ArityMismatch,
  UnknownLogOp,
  UndefinedValue,
  // harness
  CorpusError,
  NonFiniteLoss,
  CheckpointMismatch,
  ConfigError,
  IoError,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::HeadDivisibility: return "HeadDivisibility";
    case Errc::IndexOutOfVocab: return "IndexOutOfVocab";
    case Errc::NoTape: return "NoTape";
    case Errc::InvalidStep: return "InvalidStep";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::CyclicGraph: return "CyclicGraph";
    case Errc::SchemaError: return "SchemaError";
    case Errc::RuleSyntaxError: return "RuleSyntaxError";
    case Errc::SlotMismatch: return "SlotMismatch";
    case Errc::NoTemplateMatch: return "NoTemplateMatch";
    case Errc::ProviderUnreachable: return "ProviderUnreachable";
    case Errc::ProviderSchemaError: return "ProviderSchemaError";
    case Errc::ProviderGraphInvalid: return "ProviderGraphInvalid";
    case Errc::Unparseable: return "Unparseable";
    case Errc::FormatError: return "FormatError";
    case Errc::EmptyChart: return "EmptyChart";
    case Errc::EmptyPrecursors: return "EmptyPrecursors";
    case Errc::EmptyGuidance: return "EmptyGuidance";
    case Errc::UnsupportedType: return "UnsupportedType";
    case Errc::EmptyTarget: return "EmptyTarget";
    case Errc::UnresolvableEntity: return "UnresolvableEntity";
    case Errc::ArityMismatch: return "ArityMismatch";
    case Errc::UnknownLogOp: return "UnknownLogOp";
    case Errc::UndefinedValue: return "UndefinedValue";
    case Errc::CorpusError: return "CorpusError";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::CheckpointMismatch: return "CheckpointMismatch";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code), message_(message) {}

  Errc code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace gotcqa
