#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragmatch/clients.hpp"
#include "ragmatch/core.hpp"
#include "ragmatch/errors.hpp"
#include "ragmatch/phase1.hpp"
#include "ragmatch/templates.hpp"
#include "ragmatch/util.hpp"

namespace ragmatch {

struct AnnotationTriplet {
  Query query;
  CandidateDoc candidate;
  SynthesizedDoc synthesized;

  static AnnotationTriplet make(Query q, CandidateDoc d, SynthesizedDoc s) {
    if (s.query_id != q.id) {
      throw Error(ErrorCode::InputParse,
                  "synthesized doc " + s.query_id + " does not belong to query " + q.id);
    }
    return AnnotationTriplet{std::move(q), std::move(d), std::move(s)};
  }
};

struct AnnotatedExample {
  AnnotationTriplet triplet;
  ReasoningTrajectory trajectory;
  std::string teacher_id;
  std::string prompt_hash;
};

inline std::string build_hra_prompt(const AnnotationTriplet& t) {
  return templates::hra_annotation().render(
      {{"query", t.query.text},
       {"rag_doc", t.synthesized.text},
       {"title", nlohmann::json(t.candidate.title).dump()},
       {"content", nlohmann::json(t.candidate.content).dump()}});
}

namespace detail {

// Strips a markdown code fence (``` or ```json) if the payload is wrapped.
inline std::string unwrap_fence(const std::string& raw) {
  std::string s = trim_copy(raw);
  if (s.rfind("```", 0) != 0) return s;
  std::size_t first_nl = s.find('\n');
  if (first_nl == std::string::npos) return s;
  std::size_t close = s.rfind("```");
  if (close <= first_nl) return s;
  return trim_copy(s.substr(first_nl + 1, close - first_nl - 1));
}

struct CotSections {
  std::vector<std::pair<std::string, std::string>> step_a;  // lowercased key -> value
  std::vector<std::pair<std::string, std::string>> step_b;
};

inline std::string lower_copy(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Splits the cot at the Step A / Step B headers and parses "- key: value"
// bullets within each section.
inline CotSections split_cot(const std::string& cot) {
  CotSections out;
  const std::string lowered = lower_copy(cot);
  std::size_t a = lowered.find("step a");
  std::size_t b = lowered.find("step b");
  if (a == std::string::npos || b == std::string::npos || b <= a) return out;
  auto parse_bullets = [](const std::string& section) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::size_t pos = 0;
    while (pos < section.size()) {
      std::size_t end = section.find('\n', pos);
      if (end == std::string::npos) end = section.size();
      std::string line = trim_copy(section.substr(pos, end - pos));
      pos = end + 1;
      if (line.empty()) continue;
      if (line[0] == '-' || line[0] == '*') line = trim_copy(line.substr(1));
      std::size_t colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string key = lower_copy(trim_copy(line.substr(0, colon)));
      std::string value = trim_copy(line.substr(colon + 1));
      if (!key.empty() && !value.empty()) kv.emplace_back(key, value);
    }
    return kv;
  };
  out.step_a = parse_bullets(cot.substr(a, b - a));
  out.step_b = parse_bullets(cot.substr(b));
  return out;
}

inline std::string find_value(const std::vector<std::pair<std::string, std::string>>& kv,
                              std::initializer_list<const char*> needles,
                              std::initializer_list<const char*> reject = {}) {
  for (const auto& [key, value] : kv) {
    bool rejected = false;
    for (const char* r : reject) {
      if (key.find(r) != std::string::npos) { rejected = true; break; }
    }
    if (rejected) continue;
    for (const char* n : needles) {
      if (key.find(n) != std::string::npos) return value;
    }
  }
  return "";
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t end = s.find(';', pos);
    if (end == std::string::npos) end = s.size();
    std::string item = trim_copy(s.substr(pos, end - pos));
    if (!item.empty()) out.push_back(std::move(item));
    pos = end + 1;
  }
  return out;
}

inline std::optional<GroundingFrame> extract_grounding(const CotSections& sections) {
  GroundingFrame g;
  g.intent = find_value(sections.step_a, {"intent"}, {"consistency", "alignment"});
  g.answer_type = find_value(sections.step_a, {"answer type", "task type"});
  g.object_range = find_value(sections.step_a, {"object"});
  g.minimal_elements = split_list(find_value(sections.step_a, {"element"}));
  g.constraints = split_list(find_value(sections.step_a, {"constraint"}));
  g.synopsis = find_value(sections.step_a, {"synopsis", "knowledge"});
  if (!g.valid()) return std::nullopt;
  return g;
}

inline std::optional<AlignmentRationale> extract_alignment(const CotSections& sections) {
  AlignmentRationale a;
  a.intent_consistency = find_value(sections.step_b, {"intent"});
  a.entity_fidelity = find_value(sections.step_b, {"entity"});
  a.logical_completeness = find_value(sections.step_b, {"completeness", "logical"});
  a.information_density = find_value(sections.step_b, {"density", "proportion"});
  a.summary = find_value(sections.step_b, {"summary", "rationale"});
  if (!a.valid()) return std::nullopt;
  return a;
}

}  // namespace detail

/// Strict parse of the teacher payload: exactly the keys "score" and "cot",
/// score a valid label string, cot non-empty. Structured grounding/alignment
/// extraction from the cot bullets is best-effort; failure to extract is
/// flagged via extraction_ok, not fatal.
inline ReasoningTrajectory parse_teacher_output(const std::string& raw) {
  const std::string unwrapped = detail::unwrap_fence(raw);
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(unwrapped);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedJson, e.what());
  }
  if (!parsed.is_object()) throw Error(ErrorCode::MalformedJson, "payload is not an object");
  if (!parsed.contains("score")) throw Error(ErrorCode::MissingKey, "score");
  if (!parsed.contains("cot")) throw Error(ErrorCode::MissingKey, "cot");
  if (parsed.size() != 2) throw Error(ErrorCode::MalformedJson, "unexpected extra keys");

  std::string score_str;
  const auto& score = parsed["score"];
  if (score.is_string()) {
    score_str = score.get<std::string>();
  } else if (score.is_number_integer()) {
    score_str = std::to_string(score.get<long long>());
  } else {
    throw Error(ErrorCode::MalformedJson, "score must be a string");
  }
  RelevanceLabel label = parse_label(score_str);

  if (!parsed["cot"].is_string()) throw Error(ErrorCode::MalformedJson, "cot must be a string");
  std::string cot = parsed["cot"].get<std::string>();
  if (trim_copy(cot).empty()) throw Error(ErrorCode::EmptyCot, "cot is empty");

  auto sections = detail::split_cot(cot);
  return ReasoningTrajectory::make(label, std::move(cot), detail::extract_grounding(sections),
                                   detail::extract_alignment(sections));
}

/// Calls the teacher, resampling on parse/validation failure up to
/// max_resamples extra attempts.
inline AnnotatedExample annotate(const AnnotationTriplet& t, GenerationClient& teacher,
                                 int max_resamples, const ClientConfig& cfg = {}) {
  if (max_resamples < 0) {
    throw Error(ErrorCode::ConfigInvalid, "max_resamples must be >= 0");
  }
  const std::string prompt = build_hra_prompt(t);
  std::string last_error;
  for (int attempt = 0; attempt <= max_resamples; ++attempt) {
    std::string raw = with_retries(cfg, [&] { return teacher.generate(prompt); });
    try {
      ReasoningTrajectory traj = parse_teacher_output(raw);
      return AnnotatedExample{t, std::move(traj), cfg.model,
                              templates::hra_annotation().hash_prompt(prompt)};
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::AnnotationRejected,
              "all " + std::to_string(max_resamples + 1) + " attempts invalid; last: " +
                  last_error);
}

struct CotDatasetReport {
  std::vector<std::pair<std::string, std::string>> rejections;  // (query_id:doc_id, reason)
  std::map<int, std::size_t> label_counts;

  std::map<int, double> label_distribution() const {
    std::size_t total = 0;
    for (const auto& [label, n] : label_counts) total += n;
    std::map<int, double> out;
    for (const auto& [label, n] : label_counts) {
      out[label] = total ? static_cast<double>(n) / static_cast<double>(total) : 0.0;
    }
    return out;
  }
};

/// Order-preserving dataset build with a per-item rejection ledger and a
/// label-distribution summary.
inline std::vector<AnnotatedExample> build_cot_dataset(
    const std::vector<AnnotationTriplet>& triplets, GenerationClient& teacher,
    int max_resamples, CotDatasetReport& report, const ClientConfig& cfg = {},
    std::size_t parallel_width = 1) {
  struct Slot {
    std::optional<AnnotatedExample> example;
    std::string error;
  };
  auto slots = parallel_map(triplets, parallel_width, [&](const AnnotationTriplet& t) {
    Slot slot;
    try {
      slot.example = annotate(t, teacher, max_resamples, cfg);
    } catch (const Error& e) {
      slot.error = e.what();
    }
    return slot;
  });
  std::vector<AnnotatedExample> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].example) {
      ++report.label_counts[slots[i].example->trajectory.label.value()];
      out.push_back(std::move(*slots[i].example));
    } else {
      report.rejections.emplace_back(triplets[i].query.id + ":" + triplets[i].candidate.id,
                                     slots[i].error);
    }
  }
  return out;
}

/// Same contract as pretrain_loss: NLL of the reasoning target tokens.
inline double sft_loss(const std::vector<TokenScoreSeq>& batch) { return pretrain_loss(batch); }

enum class PredictMode { plain, with_synthesized };

struct Prediction {
  ReasoningTrajectory trajectory;
  std::string prompt_hash;
};

/// Student-style inference: plain mode judges (q, d) alone; with_synthesized
/// appends the synthesized evidence block during prediction.
inline Prediction predict(const Query& q, const CandidateDoc& d, GenerationClient& policy,
                          PredictMode mode,
                          const std::optional<SynthesizedDoc>& synthesized = std::nullopt,
                          int max_resamples = 0, const ClientConfig& cfg = {}) {
  std::string prompt;
  const PromptTemplate* tmpl = nullptr;
  if (mode == PredictMode::with_synthesized) {
    if (!synthesized || synthesized->query_id != q.id) {
      throw Error(ErrorCode::InputParse,
                  "with_synthesized mode requires a synthesized doc for query " + q.id);
    }
    tmpl = &templates::hra_annotation();
    prompt = tmpl->render({{"query", q.text},
                           {"rag_doc", synthesized->text},
                           {"title", nlohmann::json(d.title).dump()},
                           {"content", nlohmann::json(d.content).dump()}});
  } else {
    tmpl = &templates::inference_plain();
    prompt = tmpl->render({{"query", q.text},
                           {"title", nlohmann::json(d.title).dump()},
                           {"content", nlohmann::json(d.content).dump()}});
  }
  std::string last_error;
  for (int attempt = 0; attempt <= max_resamples; ++attempt) {
    std::string raw = with_retries(cfg, [&] { return policy.generate(prompt); });
    try {
      return Prediction{parse_teacher_output(raw), tmpl->hash_prompt(prompt)};
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::AnnotationRejected, "prediction invalid; last: " + last_error);
}

}  // namespace ragmatch
