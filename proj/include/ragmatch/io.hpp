#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragmatch/core.hpp"
#include "ragmatch/dgpo.hpp"
#include "ragmatch/errors.hpp"
#include "ragmatch/eval.hpp"
#include "ragmatch/hra.hpp"
#include "ragmatch/phase1.hpp"
#include "ragmatch/retrieval.hpp"
#include "ragmatch/util.hpp"

namespace ragmatch {

inline constexpr const char* kToolkitVersion = "0.1.0";

namespace io {

/// Parses one JSON object per non-empty line; errors carry file and line.
inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::InputParse, path + ": cannot open");
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim_copy(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InputParse,
                  path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string()) {
    throw Error(ErrorCode::InputParse, where + ": missing string field '" + key + "'");
  }
  return obj[key].get<std::string>();
}

inline RelevanceLabel require_label(const nlohmann::json& obj, const char* key,
                                    const std::string& where) {
  if (!obj.contains(key)) {
    throw Error(ErrorCode::InputParse, where + ": missing field '" + key + "'");
  }
  try {
    if (obj[key].is_string()) return parse_label(obj[key].get<std::string>());
    if (obj[key].is_number_integer()) return RelevanceLabel(obj[key].get<int>());
  } catch (const Error&) {
    throw Error(ErrorCode::InputParse, where + ": field '" + key + "' is not a label in 0..3");
  }
  throw Error(ErrorCode::InputParse, where + ": field '" + key + "' is not a label in 0..3");
}

inline KnowledgeBase load_knowledge_base(const std::string& path) {
  KnowledgeBase kb;
  auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path + " record " + std::to_string(i + 1);
    kb.docs.push_back(EvidenceDoc{require_string(rows[i], "id", where),
                                  require_string(rows[i], "text", where), 0.0});
  }
  return kb;
}

inline std::vector<Query> load_queries(const std::string& path) {
  std::vector<Query> out;
  auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path + " record " + std::to_string(i + 1);
    out.push_back(Query::make(require_string(rows[i], "id", where),
                              require_string(rows[i], "text", where)));
  }
  return out;
}

inline std::vector<AnnotationTriplet> load_triplets(const std::string& path) {
  std::vector<AnnotationTriplet> out;
  auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path + " record " + std::to_string(i + 1);
    const auto& r = rows[i];
    Query q = Query::make(require_string(r, "query_id", where),
                          require_string(r, "query_text", where));
    CandidateDoc d = CandidateDoc::make(require_string(r, "doc_id", where),
                                        require_string(r, "title", where),
                                        require_string(r, "content", where));
    std::vector<std::string> evidence_ids;
    if (r.contains("evidence_ids") && r["evidence_ids"].is_array()) {
      for (const auto& e : r["evidence_ids"]) {
        if (e.is_string()) evidence_ids.push_back(e.get<std::string>());
      }
    }
    if (evidence_ids.empty()) evidence_ids.push_back("(unrecorded)");
    SynthesizedDoc s = SynthesizedDoc::make(
        q.id, require_string(r, "synthesized_text", where), std::move(evidence_ids));
    out.push_back(AnnotationTriplet::make(std::move(q), std::move(d), std::move(s)));
  }
  return out;
}

struct PairInput {
  Query query;
  CandidateDoc candidate;
  RelevanceLabel gold;
};

inline std::vector<PairInput> load_pair_inputs(const std::string& path) {
  std::vector<PairInput> out;
  auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path + " record " + std::to_string(i + 1);
    const auto& r = rows[i];
    out.push_back(PairInput{Query::make(require_string(r, "query_id", where),
                                        require_string(r, "query_text", where)),
                            CandidateDoc::make(require_string(r, "doc_id", where),
                                               require_string(r, "title", where),
                                               require_string(r, "content", where)),
                            require_label(r, "gold", where)});
  }
  return out;
}

struct GoldRecord {
  std::string query_id;
  std::string doc_id;
  RelevanceLabel gold;
};

inline std::vector<GoldRecord> load_gold(const std::string& path) {
  std::vector<GoldRecord> out;
  auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path + " record " + std::to_string(i + 1);
    out.push_back(GoldRecord{require_string(rows[i], "query_id", where),
                             require_string(rows[i], "doc_id", where),
                             require_label(rows[i], "gold", where)});
  }
  return out;
}

struct RunRecord {
  std::string query_id;
  std::string doc_id;
  double predicted_score;
};

inline std::vector<RunRecord> load_run(const std::string& path) {
  std::vector<RunRecord> out;
  auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path + " record " + std::to_string(i + 1);
    const auto& r = rows[i];
    double score;
    if (r.contains("predicted_label")) {
      score = static_cast<double>(require_label(r, "predicted_label", where).value());
    } else if (r.contains("predicted_score") && r["predicted_score"].is_number()) {
      score = r["predicted_score"].get<double>();
      if (!std::isfinite(score)) {
        throw Error(ErrorCode::InputParse, where + ": predicted_score not finite");
      }
    } else {
      throw Error(ErrorCode::InputParse, where + ": needs predicted_score or predicted_label");
    }
    out.push_back(RunRecord{require_string(r, "query_id", where),
                            require_string(r, "doc_id", where), score});
  }
  return out;
}

/// Joins run records against gold; every run item must have a gold record
/// and (query_id, doc_id) must be unique.
inline std::vector<QueryRun> join_runs(const std::vector<RunRecord>& run,
                                       const std::vector<GoldRecord>& gold) {
  std::map<std::pair<std::string, std::string>, RelevanceLabel> gold_map;
  for (const auto& g : gold) {
    if (!gold_map.emplace(std::make_pair(g.query_id, g.doc_id), g.gold).second) {
      throw Error(ErrorCode::DuplicateItem, "duplicate gold record " + g.query_id + ":" + g.doc_id);
    }
  }
  std::map<std::string, QueryRun> by_query;
  std::map<std::pair<std::string, std::string>, bool> seen;
  for (const auto& r : run) {
    auto key = std::make_pair(r.query_id, r.doc_id);
    if (!seen.emplace(key, true).second) {
      throw Error(ErrorCode::DuplicateItem, "duplicate run item " + r.query_id + ":" + r.doc_id);
    }
    auto git = gold_map.find(key);
    if (git == gold_map.end()) {
      throw Error(ErrorCode::MissingGold, "no gold record for doc_id " + r.doc_id +
                                              " (query " + r.query_id + ")");
    }
    auto& qr = by_query[r.query_id];
    qr.query_id = r.query_id;
    qr.items.push_back(JudgedItem{r.doc_id, git->second, r.predicted_score});
  }
  std::vector<QueryRun> out;
  out.reserve(by_query.size());
  for (auto& [id, qr] : by_query) out.push_back(std::move(qr));
  return out;
}

// ---- Canonical report serialization: keys sorted, reals at 6 decimals ----

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string serialize_report(const MetricsReport& r) {
  std::string out = "{";
  out += "\"mean_bias\":" + fmt6(r.mean_bias);
  out += ",\"n_queries\":" + std::to_string(r.n_queries);
  out += ",\"n_skipped_zero_gain\":" + std::to_string(r.n_skipped_zero_gain);
  out += ",\"n_tied_pairs\":" + std::to_string(r.n_tied_pairs);
  out += ",\"ndcg\":{";
  bool first = true;
  std::map<std::string, double> ndcg_by_key;
  for (const auto& [k, v] : r.ndcg) ndcg_by_key[std::to_string(k)] = v;
  for (const auto& [k, v] : ndcg_by_key) {
    if (!first) out += ",";
    first = false;
    out += "\"" + k + "\":" + fmt6(v);
  }
  out += "}";
  out += ",\"npnr\":" + fmt6(r.npnr);
  out += ",\"over_rate\":" + fmt6(r.over_rate);
  out += std::string(",\"pnr\":") + (r.pnr_infinite ? "null" : fmt6(r.pnr));
  out += std::string(",\"pnr_infinite\":") + (r.pnr_infinite ? "true" : "false");
  out += ",\"under_rate\":" + fmt6(r.under_rate);
  out += "}\n";
  return out;
}

inline std::string serialize_bias(const BiasMetrics& b) {
  return "{\"mean_bias\":" + fmt6(b.mean_bias) + ",\"over_rate\":" + fmt6(b.over_rate) +
         ",\"under_rate\":" + fmt6(b.under_rate) + "}";
}

inline std::string serialize_calibration_report(const CalibrationReport& r) {
  return "{\"after\":" + serialize_bias(r.after) + ",\"before\":" + serialize_bias(r.before) +
         ",\"final_loss\":" + fmt6(r.final_loss) + ",\"initial_loss\":" + fmt6(r.initial_loss) +
         ",\"steps\":" + std::to_string(r.steps) + "}\n";
}

// ---- Run manifest -----------------------------------------------------

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<std::string> input_hashes;
  std::uint64_t seed = 0;
  std::string toolkit_version = kToolkitVersion;
  std::string started_at;
  std::string finished_at;
};

inline std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

/// Manifests are written next to the output file, before it is finalized.
inline void write_manifest(const RunManifest& m, const std::string& out_path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["finished_at"] = m.finished_at;
  j["input_hashes"] = m.input_hashes;
  j["seed"] = m.seed;
  j["started_at"] = m.started_at;
  j["toolkit_version"] = m.toolkit_version;
  write_file(out_path + ".manifest.json", j.dump(2) + "\n");
}

}  // namespace io
}  // namespace ragmatch
