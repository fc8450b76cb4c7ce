#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ragmatch/core.hpp"
#include "ragmatch/errors.hpp"
#include "ragmatch/util.hpp"

namespace ragmatch {

/// A versioned prompt template. The version participates in prompt hashes so
/// re-runs against a changed template are distinguishable.
struct PromptTemplate {
  std::string version;
  std::string body;  // uses {placeholder} substitution

  std::string render(const std::vector<std::pair<std::string, std::string>>& fields) const {
    std::string out = body;
    for (const auto& [key, value] : fields) {
      const std::string needle = "{" + key + "}";
      std::size_t pos = out.find(needle);
      if (pos == std::string::npos) {
        throw Error(ErrorCode::TemplateFieldMissing,
                    "template " + version + " has no field {" + key + "}");
      }
      while (pos != std::string::npos) {
        out.replace(pos, needle.size(), value);
        pos = out.find(needle, pos + value.size());
      }
    }
    return out;
  }

  std::string hash_prompt(const std::string& rendered) const {
    return content_hash(version + '\0' + rendered);
  }
};

namespace templates {

/// Phase I synthesis instruction; the evidence block is appended by the caller.
inline const PromptTemplate& synthesis() {
  static const PromptTemplate t{
      "synth-en-v1",
      "Given the query and the evidence passages, write one compact document "
      "that best answers the query.\n\nQuery: {query}\n{evidence_block}"};
  return t;
}

/// Annotation prompt: role, constraints, Step A grounding items, Step B
/// alignment dimensions, the four scoring criteria and the strict-JSON
/// output schema.
inline const PromptTemplate& hra_annotation() {
  static const PromptTemplate t{
      "hra-en-v1",
      "Role: You are an expert in semantic understanding and relevance analysis. "
      "Given a Query, Retrieved Evidence, and a Candidate Document, determine the "
      "relevance score of the candidate document with respect to the query and "
      "explain the scoring logic in detail.\n"
      "\n"
      "Important constraints:\n"
      "- Avoid explicitly mentioning terms such as \"retrieved evidence\", "
      "\"reference knowledge\", or \"RAG\" in the reasoning whenever possible.\n"
      "- Judge relevance by the extent to which the document satisfies the "
      "information need of the query; evidence is for factual supplementation and "
      "verification, not literal similarity comparison.\n"
      "- Avoid overly strict entity matching; reasonable partial alignment to the "
      "same category of core object, event chain, or thematic set still earns "
      "partial credit.\n"
      "- If the query does not specify year, version, region, or stage, do not "
      "penalize a document merely because other versions exist, unless there is a "
      "clear contradiction.\n"
      "- Downgrade the score for off-topic extensions, insufficient coverage, or "
      "content that requires substantial reader-side filtering.\n"
      "\n"
      "Step A (Knowledge-Infused Grounding): extract from the evidence the "
      "information directly relevant to the query, covering:\n"
      "- query intent and task type\n"
      "- expected answer type\n"
      "- core object and scope\n"
      "- minimal answer elements\n"
      "- key constraints and common pitfalls\n"
      "- core knowledge synopsis that directly supports answering the query\n"
      "\n"
      "Step B (Holistic Multi-Dimensional Alignment): evaluate the candidate "
      "document against the Step A frame, considering:\n"
      "- intent consistency\n"
      "- entity fidelity\n"
      "- logical completeness\n"
      "- information density\n"
      "\n"
      "Scoring criteria:\n"
      "- 3 (Fully Satisfied): covers the minimal answer elements, aligns well with "
      "the query intent and object scope, and most of the document is directly "
      "useful for answering the query.\n"
      "- 2 (Mostly Satisfied): covers most key elements and answers the core "
      "question, with minor omissions, slight formulation deviations, or limited "
      "extension to closely related secondary objects.\n"
      "- 1 (Partially Satisfied): only touches peripheral aspects, or is related "
      "to the topic but misses many key conclusions or essential points.\n"
      "- 0 (Not Satisfied): fundamentally irrelevant to the query, or contains "
      "conflicting information that prevents support for the query.\n"
      "\n"
      "Query: {query}\n"
      "Retrieved Evidence: {rag_doc}\n"
      "Candidate Document: {\"title\": {title}, \"content\": {content}}\n"
      "\n"
      "Output format: Return strict JSON with the following schema:\n"
      "{\"score\": \"relevance score (0-3)\", \"cot\": \"First provide the Step A "
      "knowledge extraction in bullet points, then provide the Step B alignment "
      "analysis and final scoring rationale in bullet points\"}\n"};
  return t;
}

/// Inference prompt without an evidence block (the online plain mode).
inline const PromptTemplate& inference_plain() {
  static const PromptTemplate t{
      "infer-plain-en-v1",
      "Role: You are an expert in semantic understanding and relevance analysis. "
      "Given a Query and a Candidate Document, determine the relevance score of "
      "the candidate document with respect to the query.\n"
      "\n"
      "Reason in two steps: first ground the query (Step A: query intent and task "
      "type, expected answer type, core object and scope, minimal answer "
      "elements, key constraints, core knowledge synopsis), then evaluate the "
      "candidate document (Step B: intent consistency, entity fidelity, logical "
      "completeness, information density).\n"
      "\n"
      "Scoring: 3 = Fully Satisfied, 2 = Mostly Satisfied, 1 = Partially "
      "Satisfied, 0 = Not Satisfied.\n"
      "\n"
      "Query: {query}\n"
      "Candidate Document: {\"title\": {title}, \"content\": {content}}\n"
      "\n"
      "Output format: Return strict JSON with the following schema:\n"
      "{\"score\": \"relevance score (0-3)\", \"cot\": \"Step A then Step B in "
      "bullet points\"}\n"};
  return t;
}

/// Label-conditioned rationale prompt used for preference-pair construction.
inline const PromptTemplate& rationale() {
  static const PromptTemplate t{
      "rationale-en-v1",
      "Given the query and the candidate document, explain why the relevance is "
      "{label}.\n\nQuery: {query}\nCandidate Document: {\"title\": {title}, "
      "\"content\": {content}}\n"};
  return t;
}

/// Label-only prompt used to score the gold label token for the auxiliary
/// term of the calibrated preference loss.
inline const PromptTemplate& label_only() {
  static const PromptTemplate t{
      "label-only-en-v1",
      "Given the query and the candidate document, answer with the relevance "
      "score alone (0-3).\n\nQuery: {query}\nCandidate Document: {\"title\": "
      "{title}, \"content\": {content}}\n"};
  return t;
}

}  // namespace templates
}  // namespace ragmatch
