// ragmatch: batch pipeline CLI
//   index           build an inverted index from a knowledge base
//   synthesize      retrieval + generation of the pretraining corpus
//   annotate        teacher annotation of (query, doc, synthesized) triplets
//   pairs           preference-pair construction from gold-labeled inputs
//   evaluate        ranking and calibration metrics for a run file
//   calibrate-demo  desk-scale preference-calibration demonstration
//
// Exit codes: 0 ok, 2 config, 3 input parse, 4 remote failure, 5 internal.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ragmatch/config.hpp"
#include "ragmatch/core.hpp"
#include "ragmatch/dgpo.hpp"
#include "ragmatch/eval.hpp"
#include "ragmatch/hra.hpp"
#include "ragmatch/http_client.hpp"
#include "ragmatch/io.hpp"
#include "ragmatch/phase1.hpp"
#include "ragmatch/retrieval.hpp"
#include "ragmatch/templates.hpp"
#include "ragmatch/util.hpp"

namespace {

using namespace ragmatch;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::NonPositiveBeta:
      return 2;
    case ErrorCode::InputParse:
    case ErrorCode::LabelOutOfRange:
    case ErrorCode::MissingGold:
    case ErrorCode::DuplicateItem:
    case ErrorCode::DuplicateId:
    case ErrorCode::EmptyKnowledgeBase:
      return 3;
    case ErrorCode::Transport:
    case ErrorCode::RemoteRejected:
    case ErrorCode::GenerationFailed:
    case ErrorCode::AnnotationRejected:
      return 4;
    default:
      return 5;
  }
}

struct FlagOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<double> beta;
  std::optional<std::string> tie_policy;
  std::optional<std::string> gain;
  std::optional<int> max_inflight;
  bool mock = false;
  std::optional<int> max_resamples;
  std::optional<int> steps;
  std::optional<double> lr;
};

ToolkitConfig resolve_config(const FlagOverrides& f) {
  ToolkitConfig cfg;
  if (!f.config_path.empty()) cfg = load_config(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.k) cfg.retrieval_k = *f.k;
  if (f.beta) cfg.beta = *f.beta;
  if (f.tie_policy) cfg.tie_policy = parse_tie_policy(*f.tie_policy);
  if (f.gain) cfg.gain = parse_gain(*f.gain);
  if (f.max_inflight) cfg.client.max_inflight = *f.max_inflight;
  if (f.mock) cfg.client.endpoint = "mock:";
  if (f.max_resamples) cfg.max_resamples = *f.max_resamples;
  if (f.steps) cfg.steps = *f.steps;
  if (f.lr) cfg.lr = *f.lr;
  cfg.client.mock_seed = cfg.seed;
  cfg.client.validate();
  if (cfg.beta <= 0) throw Error(ErrorCode::NonPositiveBeta, "beta must be > 0");
  if (cfg.retrieval_k < 1) throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");
  return cfg;
}

io::RunManifest start_manifest(const std::string& command, const ToolkitConfig& cfg,
                               const std::vector<std::string>& input_paths) {
  io::RunManifest m;
  m.command = command;
  m.config_hash = cfg.hash();
  m.seed = cfg.seed;
  m.started_at = io::now_iso8601();
  for (const auto& p : input_paths) m.input_hashes.push_back(content_hash(read_file(p)));
  return m;
}

void finish(io::RunManifest& m, const std::string& out_path, const std::string& content) {
  m.finished_at = io::now_iso8601();
  io::write_manifest(m, out_path);
  write_file(out_path, content);
}

int cmd_index(const std::string& kb_path, const std::string& out_path,
              const ToolkitConfig& cfg) {
  auto kb = io::load_knowledge_base(kb_path);
  auto index = build_index(kb);
  auto manifest = start_manifest("index", cfg, {kb_path});
  manifest.finished_at = io::now_iso8601();
  io::write_manifest(manifest, out_path);
  save_index(index, out_path);
  std::cerr << "indexed " << index.doc_count << " docs, " << index.postings.size()
            << " terms\n";
  return 0;
}

int cmd_synthesize(const std::string& queries_path, const std::string& index_path,
                   const std::string& out_path, const ToolkitConfig& cfg) {
  auto queries = io::load_queries(queries_path);
  auto index = load_index(index_path);
  auto gen = make_generation_client(cfg.client);

  CorpusBuildReport report;
  auto corpus = build_pretrain_corpus(queries, index, cfg.retrieval_k, *gen, report,
                                      cfg.client, cfg.parallel_width);
  std::string out;
  for (const auto& ex : corpus) {
    nlohmann::json row;
    row["evidence_ids"] = ex.synthesized.evidence_ids;
    row["query_id"] = ex.query.id;
    row["query_text"] = ex.query.text;
    row["synthesized_text"] = ex.synthesized.text;
    out += row.dump() + "\n";
  }
  auto manifest = start_manifest("synthesize", cfg, {queries_path, index_path});
  finish(manifest, out_path, out);
  std::cerr << "synthesized " << report.n_examples << " examples, skipped "
            << report.n_skipped_empty_retrieval << " (empty retrieval), "
            << report.failures.size() << " failures\n";
  for (const auto& [qid, reason] : report.failures) {
    std::cerr << "  failed " << qid << ": " << reason << "\n";
  }
  return 0;
}

int cmd_annotate(const std::string& triplets_path, const std::string& out_path,
                 const ToolkitConfig& cfg) {
  auto triplets = io::load_triplets(triplets_path);
  auto teacher = make_generation_client(cfg.client);

  CotDatasetReport report;
  auto dataset = build_cot_dataset(triplets, *teacher, cfg.max_resamples, report, cfg.client,
                                   cfg.parallel_width);
  std::string out;
  for (const auto& ex : dataset) {
    nlohmann::json row;
    row["cot"] = ex.trajectory.raw_cot;
    row["doc_id"] = ex.triplet.candidate.id;
    row["extraction_ok"] = ex.trajectory.extraction_ok;
    if (ex.trajectory.grounding) {
      const auto& g = *ex.trajectory.grounding;
      row["grounding"] = {{"answer_type", g.answer_type},
                          {"constraints", g.constraints},
                          {"intent", g.intent},
                          {"minimal_elements", g.minimal_elements},
                          {"object_range", g.object_range},
                          {"synopsis", g.synopsis}};
    }
    if (ex.trajectory.alignment) {
      const auto& a = *ex.trajectory.alignment;
      row["alignment"] = {{"entity_fidelity", a.entity_fidelity},
                          {"information_density", a.information_density},
                          {"intent_consistency", a.intent_consistency},
                          {"logical_completeness", a.logical_completeness},
                          {"summary", a.summary}};
    }
    row["prompt_hash"] = ex.prompt_hash;
    row["query_id"] = ex.triplet.query.id;
    row["score"] = ex.trajectory.label.format();
    out += row.dump() + "\n";
  }
  auto manifest = start_manifest("annotate", cfg, {triplets_path});
  finish(manifest, out_path, out);

  std::cerr << "annotated " << dataset.size() << " examples, rejected "
            << report.rejections.size() << "\n";
  for (const auto& [label, share] : report.label_distribution()) {
    std::cerr << "  label " << label << ": " << io::fmt6(share * 100.0) << "%\n";
  }
  for (const auto& [key, reason] : report.rejections) {
    std::cerr << "  rejected " << key << ": " << reason << "\n";
  }
  return 0;
}

int cmd_pairs(const std::string& gold_path, const std::string& out_path,
              const ToolkitConfig& cfg) {
  auto inputs = io::load_pair_inputs(gold_path);
  auto policy = make_generation_client(cfg.client);
  auto rng = make_rng(cfg.seed, "pairs");

  std::string out;
  for (const auto& input : inputs) {
    PreferencePair pair =
        construct_pair(input.query, input.candidate, input.gold, *policy, rng, cfg.client);
    nlohmann::json row;
    row["doc_id"] = input.candidate.id;
    row["query_id"] = input.query.id;
    row["r_l"] = pair.dispreferred.raw_cot;
    row["r_w"] = pair.preferred.raw_cot;
    row["seed"] = cfg.seed;
    row["y_l"] = pair.dispreferred.label.format();
    row["y_w"] = pair.preferred.label.format();
    out += row.dump() + "\n";
  }
  auto manifest = start_manifest("pairs", cfg, {gold_path});
  finish(manifest, out_path, out);
  std::cerr << "constructed " << inputs.size() << " preference pairs\n";
  return 0;
}

int cmd_evaluate(const std::string& run_path, const std::string& gold_path,
                 const std::string& out_path, const ToolkitConfig& cfg) {
  auto run = io::load_run(run_path);
  auto gold = io::load_gold(gold_path);
  auto runs = io::join_runs(run, gold);
  MetricsReport report = evaluate_runs(std::move(runs), cfg.tie_policy, cfg.gain);
  auto manifest = start_manifest("evaluate", cfg, {run_path, gold_path});
  finish(manifest, out_path, io::serialize_report(report));
  std::cerr << "evaluated " << report.n_queries << " queries\n";
  return 0;
}

int cmd_calibrate_demo(const std::string& out_path, const ToolkitConfig& cfg) {
  auto [policy, pairs] = make_overestimation_world(cfg.demo_items, cfg.seed);
  CalibrationReport report =
      calibrate_toy_policy(policy, pairs, cfg.beta, cfg.lr, cfg.steps, cfg.seed);
  auto manifest = start_manifest("calibrate-demo", cfg, {});
  finish(manifest, out_path, io::serialize_calibration_report(report));
  std::cerr << "calibration: over_rate " << io::fmt6(report.before.over_rate) << " -> "
            << io::fmt6(report.after.over_rate) << ", mean_bias "
            << io::fmt6(report.before.mean_bias) << " -> " << io::fmt6(report.after.mean_bias)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RAG-Match relevance pipeline toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  FlagOverrides flags;
  app.add_option("--config", flags.config_path, "Config file (INI sections)");
  app.add_option("--seed", flags.seed, "Root seed for all random substreams");
  app.add_option("--k", flags.k, "Top-k evidence docs per query");
  app.add_option("--beta", flags.beta, "Preference strength");
  app.add_option("--tie-policy", flags.tie_policy, "exclude|half");
  app.add_option("--gain", flags.gain, "exp|linear");
  app.add_option("--max-inflight", flags.max_inflight, "Max in-flight client requests");
  app.add_flag("--mock", flags.mock, "Force the deterministic offline mock client");
  app.add_option("--max-resamples", flags.max_resamples,
                 "Extra teacher attempts on invalid output");
  app.add_option("--steps", flags.steps, "Gradient steps for calibrate-demo");
  app.add_option("--lr", flags.lr, "Learning rate for calibrate-demo");

  std::string kb_path, queries_path, index_path, triplets_path, gold_path, run_path, out_path;

  auto* sub_index = app.add_subcommand("index", "Build an inverted index");
  sub_index->add_option("kb", kb_path, "Knowledge base JSON-lines {id, text}")->required();
  sub_index->add_option("out", out_path, "Output index file")->required();

  auto* sub_synth = app.add_subcommand("synthesize", "Build the pretraining corpus");
  sub_synth->add_option("queries", queries_path, "Queries JSON-lines {id, text}")->required();
  sub_synth->add_option("index", index_path, "Index file from 'index'")->required();
  sub_synth->add_option("out", out_path, "Output corpus JSON-lines")->required();

  auto* sub_annot = app.add_subcommand("annotate", "Teacher-annotate triplets");
  sub_annot->add_option("triplets", triplets_path, "Triplets JSON-lines")->required();
  sub_annot->add_option("out", out_path, "Output dataset JSON-lines")->required();

  auto* sub_pairs = app.add_subcommand("pairs", "Construct preference pairs");
  sub_pairs->add_option("gold", gold_path, "Gold-labeled inputs JSON-lines")->required();
  sub_pairs->add_option("out", out_path, "Output pairs JSON-lines")->required();

  auto* sub_eval = app.add_subcommand("evaluate", "Compute ranking and bias metrics");
  sub_eval->add_option("run", run_path, "Run file JSON-lines")->required();
  sub_eval->add_option("gold", gold_path, "Gold file JSON-lines")->required();
  sub_eval->add_option("out", out_path, "Output report JSON");

  auto* sub_demo = app.add_subcommand("calibrate-demo", "Toy preference-calibration demo");
  sub_demo->add_option("out", out_path, "Output report JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    ToolkitConfig cfg = resolve_config(flags);
    if (sub_index->parsed()) return cmd_index(kb_path, out_path, cfg);
    if (sub_synth->parsed()) return cmd_synthesize(queries_path, index_path, out_path, cfg);
    if (sub_annot->parsed()) return cmd_annotate(triplets_path, out_path, cfg);
    if (sub_pairs->parsed()) return cmd_pairs(gold_path, out_path, cfg);
    if (sub_eval->parsed()) {
      if (out_path.empty()) out_path = "report.json";
      return cmd_evaluate(run_path, gold_path, out_path, cfg);
    }
    if (sub_demo->parsed()) return cmd_calibrate_demo(out_path, cfg);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 5;
  }
}
