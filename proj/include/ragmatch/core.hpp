#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ragmatch/errors.hpp"

namespace ragmatch {

/// Ordinal relevance judgment: 0=Irrelevant, 1=Fair, 2=Good, 3=Excellent.
class RelevanceLabel {
 public:
  static constexpr int kMin = 0;
  static constexpr int kMax = 3;

  explicit RelevanceLabel(int value) : value_(value) {
    if (value < kMin || value > kMax) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label must be in [0,3], got " + std::to_string(value));
    }
  }

  int value() const noexcept { return value_; }

  const char* name() const noexcept {
    switch (value_) {
      case 0: return "Irrelevant";
      case 1: return "Fair";
      case 2: return "Good";
      default: return "Excellent";
    }
  }

  /// String form used at the JSON boundary.
  std::string format() const { return std::to_string(value_); }

  friend bool operator==(RelevanceLabel a, RelevanceLabel b) { return a.value_ == b.value_; }
  friend bool operator!=(RelevanceLabel a, RelevanceLabel b) { return a.value_ != b.value_; }
  friend bool operator<(RelevanceLabel a, RelevanceLabel b) { return a.value_ < b.value_; }
  friend bool operator>(RelevanceLabel a, RelevanceLabel b) { return a.value_ > b.value_; }

 private:
  int value_;
};

/// Labels differing from y by exactly one step, clipped to [0,3].
/// Never contains y itself and never empty.
inline std::vector<RelevanceLabel> adjacent_labels(RelevanceLabel y) {
  std::vector<RelevanceLabel> out;
  if (y.value() - 1 >= RelevanceLabel::kMin) out.emplace_back(y.value() - 1);
  if (y.value() + 1 <= RelevanceLabel::kMax) out.emplace_back(y.value() + 1);
  return out;
}

/// Parses the string label form ("0".."3", surrounding whitespace allowed).
inline RelevanceLabel parse_label(const std::string& raw) {
  std::size_t begin = 0, end = raw.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1]))) --end;
  const std::string trimmed = raw.substr(begin, end - begin);
  if (trimmed.size() != 1 || trimmed[0] < '0' || trimmed[0] > '3') {
    throw Error(ErrorCode::LabelOutOfRange, "not a label in {0,1,2,3}: \"" + raw + "\"");
  }
  return RelevanceLabel(trimmed[0] - '0');
}

inline std::string trim_copy(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct Query {
  std::string id;
  std::string text;

  static Query make(std::string id, std::string text) {
    if (trim_copy(text).empty()) {
      throw Error(ErrorCode::InputParse, "query text empty for id " + id);
    }
    return Query{std::move(id), std::move(text)};
  }
};

struct CandidateDoc {
  std::string id;
  std::string title;
  std::string content;

  static CandidateDoc make(std::string id, std::string title, std::string content) {
    if (title.empty() && content.empty()) {
      throw Error(ErrorCode::InputParse, "candidate doc " + id + " has neither title nor content");
    }
    return CandidateDoc{std::move(id), std::move(title), std::move(content)};
  }
};

struct EvidenceDoc {
  std::string id;
  std::string text;
  double score = 0.0;
};

struct SynthesizedDoc {
  std::string query_id;
  std::string text;
  std::vector<std::string> evidence_ids;

  static SynthesizedDoc make(std::string query_id, std::string text,
                             std::vector<std::string> evidence_ids) {
    if (evidence_ids.empty()) {
      throw Error(ErrorCode::EmptyEvidence, "synthesized doc needs at least one evidence id");
    }
    if (text.empty()) {
      throw Error(ErrorCode::EmptyGeneration, "synthesized text empty for query " + query_id);
    }
    return SynthesizedDoc{std::move(query_id), std::move(text), std::move(evidence_ids)};
  }
};

/// Six-field query grounding frame: intent, answer type, object range,
/// minimal elements, constraints, synopsis.
struct GroundingFrame {
  std::string intent;
  std::string answer_type;
  std::string object_range;
  std::vector<std::string> minimal_elements;
  std::vector<std::string> constraints;
  std::string synopsis;

  bool valid() const {
    return !intent.empty() && !answer_type.empty() && !object_range.empty() &&
           !synopsis.empty();
  }
};

/// Four-dimension candidate analysis plus a free-form summary.
struct AlignmentRationale {
  std::string intent_consistency;
  std::string entity_fidelity;
  std::string logical_completeness;
  std::string information_density;
  std::string summary;

  bool valid() const {
    return !intent_consistency.empty() && !entity_fidelity.empty() &&
           !logical_completeness.empty() && !information_density.empty();
  }
};

/// (grounding, alignment, label) triple with the verbatim teacher text.
/// Structured fields are best-effort; raw_cot is always kept.
struct ReasoningTrajectory {
  std::optional<GroundingFrame> grounding;
  std::optional<AlignmentRationale> alignment;
  RelevanceLabel label;
  std::string raw_cot;
  bool extraction_ok = false;

  static ReasoningTrajectory make(RelevanceLabel label, std::string raw_cot,
                                  std::optional<GroundingFrame> grounding = std::nullopt,
                                  std::optional<AlignmentRationale> alignment = std::nullopt) {
    if (raw_cot.empty()) {
      throw Error(ErrorCode::EmptyCot, "trajectory requires non-empty cot");
    }
    bool ok = grounding.has_value() && grounding->valid() && alignment.has_value() &&
              alignment->valid();
    return ReasoningTrajectory{std::move(grounding), std::move(alignment), label,
                               std::move(raw_cot), ok};
  }
};

/// Per-token natural-log probabilities of a scored target sequence.
struct TokenScoreSeq {
  std::vector<double> logprobs;

  static TokenScoreSeq make(std::vector<double> logprobs) {
    for (double lp : logprobs) {
      if (!std::isfinite(lp)) {
        throw Error(ErrorCode::InvalidScorePayload, "non-finite logprob");
      }
      if (lp > 0.0) {
        throw Error(ErrorCode::InvalidScorePayload,
                    "positive logprob " + std::to_string(lp));
      }
    }
    return TokenScoreSeq{std::move(logprobs)};
  }

  /// Compensated (Kahan) sum of the token logprobs.
  double sum() const {
    double s = 0.0, c = 0.0;
    for (double x : logprobs) {
      double y = x - c;
      double t = s + y;
      c = (t - s) - y;
      s = t;
    }
    return s;
  }

  bool empty() const { return logprobs.empty(); }
  std::size_t size() const { return logprobs.size(); }
};

/// Kahan accumulator shared by the loss implementations.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace ragmatch
