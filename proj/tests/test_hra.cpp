#include <doctest.h>

#include <random>

#include <json.hpp>

#include "ragmatch/hra.hpp"

using namespace ragmatch;

namespace {

AnnotationTriplet toy_triplet() {
  Query q = Query::make("q1", "2024 olympics host city");
  CandidateDoc d = CandidateDoc::make("d1", "Paris 2024", "The 33rd Olympic Games were held in Paris.");
  SynthesizedDoc s = SynthesizedDoc::make("q1", "Paris hosted the 2024 Summer Olympics.", {"e1"});
  return AnnotationTriplet::make(std::move(q), std::move(d), std::move(s));
}

ClientConfig no_backoff() {
  ClientConfig cfg;
  cfg.backoff_base_seconds = 0.0;
  return cfg;
}

const std::string kValidTeacherJson =
    R"({"score":"3","cot":"Step A:\n- intent: find host city\n- answer type: entity\n- object range: olympic games\n- minimal elements: city; year\n- constraints: 2024 edition\n- synopsis: paris hosted 2024\nStep B:\n- intent consistency: direct answer\n- entity fidelity: paris matches\n- logical completeness: covers both elements\n- information density: fully on topic\n- summary: excellent match"})";

}  // namespace

TEST_CASE("build_hra_prompt carries the schema anchor and all section names") {
  auto prompt = build_hra_prompt(toy_triplet());
  CHECK(prompt.find("Return strict JSON") != std::string::npos);
  // six Step A items
  for (const char* item : {"query intent", "expected answer type", "core object and scope",
                           "minimal answer elements", "key constraints", "core knowledge synopsis"}) {
    CHECK_MESSAGE(prompt.find(item) != std::string::npos, item);
  }
  // four Step B dimensions
  for (const char* dim : {"intent consistency", "entity fidelity", "logical completeness",
                          "information density"}) {
    CHECK_MESSAGE(prompt.find(dim) != std::string::npos, dim);
  }
  // substituted fields
  CHECK(prompt.find("2024 olympics host city") != std::string::npos);
  CHECK(prompt.find("Paris hosted the 2024 Summer Olympics.") != std::string::npos);
}

TEST_CASE("identical triplets produce identical prompt hashes") {
  auto p1 = build_hra_prompt(toy_triplet());
  auto p2 = build_hra_prompt(toy_triplet());
  CHECK(templates::hra_annotation().hash_prompt(p1) == templates::hra_annotation().hash_prompt(p2));
}

TEST_CASE("parse_teacher_output happy path with structured extraction") {
  auto traj = parse_teacher_output(kValidTeacherJson);
  CHECK(traj.label.value() == 3);
  CHECK(traj.extraction_ok);
  REQUIRE(traj.grounding.has_value());
  CHECK(traj.grounding->intent == "find host city");
  CHECK(traj.grounding->answer_type == "entity");
  CHECK(traj.grounding->minimal_elements == std::vector<std::string>{"city", "year"});
  REQUIRE(traj.alignment.has_value());
  CHECK(traj.alignment->entity_fidelity == "paris matches");
  // verbatim cot preserved
  CHECK(traj.raw_cot.find("Step A:") == 0);
}

TEST_CASE("parse_teacher_output falls back to raw text when cot is unstructured") {
  auto traj = parse_teacher_output(R"({"score":"1","cot":"just a blob of prose"})");
  CHECK(traj.label.value() == 1);
  CHECK_FALSE(traj.extraction_ok);
  CHECK_FALSE(traj.grounding.has_value());
  CHECK(traj.raw_cot == "just a blob of prose");
}

TEST_CASE("parse_teacher_output unwraps markdown fences") {
  auto traj = parse_teacher_output("```json\n" + kValidTeacherJson + "\n```");
  CHECK(traj.label.value() == 3);
}

TEST_CASE("parse_teacher_output typed failures") {
  auto code_of = [](const std::string& raw) {
    try {
      parse_teacher_output(raw);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvariantViolation;
  };
  CHECK(code_of("not json") == ErrorCode::MalformedJson);
  CHECK(code_of(R"({"score":"7","cot":"x"})") == ErrorCode::LabelOutOfRange);
  CHECK(code_of(R"({"score":"2"})") == ErrorCode::MissingKey);
  CHECK(code_of(R"({"cot":"x"})") == ErrorCode::MissingKey);
  CHECK(code_of(R"({"score":"2","cot":""})") == ErrorCode::EmptyCot);
  CHECK(code_of(R"({"score":"2","cot":"x","extra":1})") == ErrorCode::MalformedJson);
  CHECK(code_of(R"([1,2,3])") == ErrorCode::MalformedJson);
  CHECK(code_of(R"({"score":2.5,"cot":"x"})") == ErrorCode::MalformedJson);
}

TEST_CASE("parse_teacher_output round-trips label and cot through serialization") {
  for (int y = 0; y <= 3; ++y) {
    nlohmann::json j;
    j["score"] = std::to_string(y);
    j["cot"] = "Step A reasoning with label " + std::to_string(y) + " \u00e9\u4e2d";
    auto traj = parse_teacher_output(j.dump());
    CHECK(traj.label.value() == y);
    CHECK(traj.raw_cot == j["cot"].get<std::string>());
  }
}

TEST_CASE("parse_teacher_output never crashes on fuzzed bytes") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 5000; ++i) {
    std::string raw;
    std::size_t len = rng() % 120;
    for (std::size_t b = 0; b < len; ++b) raw.push_back(static_cast<char>(rng() & 0xFF));
    try {
      auto traj = parse_teacher_output(raw);
      CHECK_FALSE(traj.raw_cot.empty());  // valid outputs satisfy trajectory invariants
    } catch (const Error&) {
      // typed error: acceptable outcome
    }
  }
}

TEST_CASE("annotate returns on the first valid attempt") {
  MockGenerationClient teacher(7);
  auto ex = annotate(toy_triplet(), teacher, 2, no_backoff());
  CHECK(teacher.ledger().attempts() == 1);
  CHECK_FALSE(ex.prompt_hash.empty());
  CHECK(ex.trajectory.extraction_ok);  // mock emits structured bullets
}

TEST_CASE("annotate resamples on garbage then succeeds") {
  ScriptedGenerationClient teacher({{false, "garbage"}, {false, kValidTeacherJson}});
  auto ex = annotate(toy_triplet(), teacher, 2, no_backoff());
  CHECK(teacher.ledger().attempts() == 2);
  CHECK(ex.trajectory.label.value() == 3);
}

TEST_CASE("annotate rejects after exhausting resamples") {
  ScriptedGenerationClient teacher({{false, "junk"}, {false, "junk"}});
  try {
    annotate(toy_triplet(), teacher, 1, no_backoff());
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AnnotationRejected);
  }
  CHECK(teacher.ledger().attempts() == 2);
}

TEST_CASE("build_cot_dataset ledgers rejections and summarizes labels") {
  std::vector<AnnotationTriplet> triplets;
  for (int i = 0; i < 4; ++i) triplets.push_back(toy_triplet());
  // item 2 gets garbage (no resamples), the rest are valid
  const std::string good3 = kValidTeacherJson;
  const std::string good2 = R"({"score":"2","cot":"Step A: x Step B: y"})";
  ScriptedGenerationClient teacher({{false, good3}, {false, "junk"}, {false, good2},
                                    {false, good2}});
  CotDatasetReport report;
  auto dataset = build_cot_dataset(triplets, teacher, 0, report, no_backoff());
  REQUIRE(dataset.size() == 3);
  CHECK(report.rejections.size() == 1);
  CHECK(report.label_counts[3] == 1);
  CHECK(report.label_counts[2] == 2);
  auto dist = report.label_distribution();
  CHECK(dist[3] == doctest::Approx(1.0 / 3.0));
  CHECK(dist[2] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("sft_loss shares the pretrain_loss contract") {
  CHECK(sft_loss({TokenScoreSeq::make({0.0})}) == 0.0);
  CHECK(sft_loss({TokenScoreSeq::make({-1.0}), TokenScoreSeq::make({-3.0})}) ==
        doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("predict parses the policy output in both modes") {
  MockGenerationClient policy(7);
  Query q = Query::make("q1", "2024 olympics host city");
  CandidateDoc d = CandidateDoc::make("d1", "Paris 2024", "content");
  SynthesizedDoc s = SynthesizedDoc::make("q1", "synth text", {"e1"});

  auto plain = predict(q, d, policy, PredictMode::plain);
  auto with_s = predict(q, d, policy, PredictMode::with_synthesized, s);
  CHECK(plain.prompt_hash != with_s.prompt_hash);
  CHECK(plain.trajectory.label.value() >= 0);
}

TEST_CASE("predict requires a synthesized doc in with_synthesized mode") {
  MockGenerationClient policy(0);
  Query q = Query::make("q1", "x");
  CandidateDoc d = CandidateDoc::make("d1", "t", "c");
  CHECK_THROWS_AS(predict(q, d, policy, PredictMode::with_synthesized), Error);
}

TEST_CASE("predict rejects malformed policy output with zero resamples") {
  ScriptedGenerationClient policy({{false, "not json"}});
  Query q = Query::make("q1", "x");
  CandidateDoc d = CandidateDoc::make("d1", "t", "c");
  try {
    predict(q, d, policy, PredictMode::plain, std::nullopt, 0, no_backoff());
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AnnotationRejected);
  }
}
