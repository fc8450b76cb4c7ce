#pragma once

#include <string>
#include <vector>

#include "ragmatch/clients.hpp"
#include "ragmatch/core.hpp"
#include "ragmatch/errors.hpp"
#include "ragmatch/retrieval.hpp"
#include "ragmatch/templates.hpp"
#include "ragmatch/util.hpp"

namespace ragmatch {

struct PretrainExample {
  Query query;
  SynthesizedDoc synthesized;
};

/// Per-query outcome ledger for a corpus build.
struct CorpusBuildReport {
  std::size_t n_examples = 0;
  std::size_t n_skipped_empty_retrieval = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (query_id, reason)
};

inline std::string render_synthesis_prompt(const Query& q,
                                           const std::vector<EvidenceDoc>& evidence) {
  std::string block;
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    block += "Evidence " + std::to_string(i + 1) + ": " + evidence[i].text + "\n";
  }
  return templates::synthesis().render({{"query", q.text}, {"evidence_block", block}});
}

/// Generates one compact document for the query from its evidence set.
/// Evidence ids are recorded in retrieval order.
inline SynthesizedDoc synthesize_document(const Query& q,
                                          const std::vector<EvidenceDoc>& evidence,
                                          GenerationClient& gen,
                                          const ClientConfig& cfg = {}) {
  if (evidence.empty()) {
    throw Error(ErrorCode::EmptyEvidence, "no evidence for query " + q.id);
  }
  const std::string prompt = render_synthesis_prompt(q, evidence);
  std::string text = with_retries(cfg, [&] { return gen.generate(prompt); });
  if (trim_copy(text).empty()) {
    throw Error(ErrorCode::EmptyGeneration, "generator returned blank for query " + q.id);
  }
  std::vector<std::string> ids;
  ids.reserve(evidence.size());
  for (const auto& e : evidence) ids.push_back(e.id);
  return SynthesizedDoc::make(q.id, std::move(text), std::move(ids));
}

/// One example per query with non-empty retrieval, in input order. Queries
/// with empty retrieval are skipped and counted; generation failures go to
/// the failure ledger and the run continues.
inline std::vector<PretrainExample> build_pretrain_corpus(
    const std::vector<Query>& queries, const InvertedIndex& index, std::size_t k,
    GenerationClient& gen, CorpusBuildReport& report, const ClientConfig& cfg = {},
    std::size_t parallel_width = 1) {
  struct Slot {
    bool ok = false;
    bool skipped = false;
    std::string error;
    std::optional<PretrainExample> example;
  };
  auto slots = parallel_map(queries, parallel_width, [&](const Query& q) {
    Slot slot;
    auto evidence = retrieve_topk(index, q, k);
    if (evidence.empty()) {
      slot.skipped = true;
      return slot;
    }
    try {
      slot.example = PretrainExample{q, synthesize_document(q, evidence, gen, cfg)};
      slot.ok = true;
    } catch (const Error& e) {
      slot.error = e.what();
    }
    return slot;
  });
  std::vector<PretrainExample> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].ok) {
      out.push_back(std::move(*slots[i].example));
      ++report.n_examples;
    } else if (slots[i].skipped) {
      ++report.n_skipped_empty_retrieval;
    } else {
      report.failures.emplace_back(queries[i].id, slots[i].error);
    }
  }
  return out;
}

/// Negative log-likelihood of the target tokens: per-example token sum,
/// batch mean, compensated summation throughout. Always >= 0.
inline double pretrain_loss(const std::vector<TokenScoreSeq>& batch) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "loss over empty batch");
  KahanSum total;
  for (const auto& seq : batch) {
    if (seq.empty()) throw Error(ErrorCode::EmptySequence, "loss over empty sequence");
    total.add(-seq.sum());
  }
  return total.value() / static_cast<double>(batch.size());
}

}  // namespace ragmatch
