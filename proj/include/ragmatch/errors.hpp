#pragma once

#include <stdexcept>
#include <string>

namespace ragmatch {

enum class ErrorCode {
  LabelOutOfRange,
  EmptyKnowledgeBase,
  DuplicateId,
  OrdinalOutOfRange,
  EmptyEvidence,
  EmptyGeneration,
  GenerationFailed,
  EmptySequence,
  EmptyBatch,
  TemplateFieldMissing,
  MalformedJson,
  MissingKey,
  EmptyCot,
  AnnotationRejected,
  LengthMismatch,
  NonPositiveBeta,
  NonFiniteInput,
  PositiveLogProb,
  DivergenceDetected,
  EmptyItems,
  NoComparablePairs,
  EmptyInput,
  MissingGold,
  DuplicateItem,
  Transport,
  RemoteRejected,
  InvalidScorePayload,
  ConfigInvalid,
  InputParse,
  InvariantViolation,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyKnowledgeBase: return "EmptyKnowledgeBase";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::OrdinalOutOfRange: return "OrdinalOutOfRange";
    case ErrorCode::EmptyEvidence: return "EmptyEvidence";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::TemplateFieldMissing: return "TemplateFieldMissing";
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::EmptyCot: return "EmptyCot";
    case ErrorCode::AnnotationRejected: return "AnnotationRejected";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonPositiveBeta: return "NonPositiveBeta";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::PositiveLogProb: return "PositiveLogProb";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::EmptyItems: return "EmptyItems";
    case ErrorCode::NoComparablePairs: return "NoComparablePairs";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingGold: return "MissingGold";
    case ErrorCode::DuplicateItem: return "DuplicateItem";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::RemoteRejected: return "RemoteRejected";
    case ErrorCode::InvalidScorePayload: return "InvalidScorePayload";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::InputParse: return "InputParse";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Typed error carried by every failure path in the toolkit.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ragmatch
