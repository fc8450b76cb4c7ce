#pragma once

#include <atomic>
#include <chrono>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ragmatch/core.hpp"
#include "ragmatch/errors.hpp"
#include "ragmatch/util.hpp"

namespace ragmatch {

struct ClientConfig {
  std::string endpoint;       // "mock:" activates the offline mock
  std::string model = "default";
  double timeout_seconds = 30.0;
  int max_retries = 2;
  double backoff_base_seconds = 0.5;
  double temperature = 0.0;   // deterministic annotation by default
  int max_inflight = 4;
  std::uint64_t mock_seed = 0;
  double mock_per_byte_logprob = -0.1;

  void validate() const {
    if (timeout_seconds <= 0) throw Error(ErrorCode::ConfigInvalid, "timeout must be > 0");
    if (max_retries < 0) throw Error(ErrorCode::ConfigInvalid, "max_retries must be >= 0");
    if (max_inflight < 1) throw Error(ErrorCode::ConfigInvalid, "max_inflight must be >= 1");
  }

  bool is_mock() const { return endpoint.rfind("mock:", 0) == 0; }
};

/// Counts attempts per client, observable in tests.
class CallLedger {
 public:
  void record() { ++attempts_; }
  std::uint64_t attempts() const { return attempts_.load(); }

 private:
  std::atomic<std::uint64_t> attempts_{0};
};

class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual std::string generate(const std::string& prompt) = 0;
  const CallLedger& ledger() const { return ledger_; }

 protected:
  CallLedger ledger_;
};

class ScoringClient {
 public:
  virtual ~ScoringClient() = default;
  virtual TokenScoreSeq score(const std::string& prompt, const std::string& target) = 0;
  const CallLedger& ledger() const { return ledger_; }

 protected:
  CallLedger ledger_;
};

namespace detail {

inline std::string pick_word(std::uint64_t h, int slot) {
  static const char* words[] = {"coverage", "scope",   "entity",  "intent",
                                "context",  "summary", "support", "detail"};
  return words[(h >> (slot * 3)) & 0x7];
}

inline std::string extract_line_after(const std::string& text, const std::string& marker) {
  std::size_t pos = text.find(marker);
  if (pos == std::string::npos) return "";
  pos += marker.size();
  std::size_t end = text.find('\n', pos);
  if (end == std::string::npos) end = text.size();
  return text.substr(pos, end - pos);
}

}  // namespace detail

/// Deterministic offline generator: a pure function of (prompt, seed).
/// Recognizes the shipped prompt families by marker substrings and produces
/// well-formed outputs for each; unknown prompts get a hash-derived stub.
class MockGenerationClient : public GenerationClient {
 public:
  explicit MockGenerationClient(std::uint64_t seed = 0) : seed_(seed) {}

  /// Exact-prompt overrides checked before the rule-based fallback.
  void set_response(const std::string& prompt, const std::string& response) {
    table_[prompt] = response;
  }

  std::string generate(const std::string& prompt) override {
    ledger_.record();
    if (prompt.empty()) throw Error(ErrorCode::InputParse, "prompt must be non-empty");
    if (auto it = table_.find(prompt); it != table_.end()) return it->second;
    const std::uint64_t h = fnv1a64(prompt, seed_ ^ 0xabcdef1234567890ull);

    if (prompt.find("Return strict JSON") != std::string::npos) {
      return annotation_json(h);
    }
    if (prompt.find("write one compact document") != std::string::npos) {
      std::string q = detail::extract_line_after(prompt, "Query: ");
      std::string e = detail::extract_line_after(prompt, "Evidence 1: ");
      if (e.size() > 120) e.resize(120);
      return q + " :: " + e;
    }
    if (std::size_t pos = prompt.find("explain why the relevance is ");
        pos != std::string::npos) {
      char label = prompt[pos + std::strlen("explain why the relevance is ")];
      return std::string("The relevance is ") + label + " because the document's " +
             detail::pick_word(h, 0) + " matches the query's " + detail::pick_word(h, 1) +
             " [" + to_hex(h).substr(0, 8) + "]";
    }
    return "mock-" + to_hex(h);
  }

 private:
  std::string annotation_json(std::uint64_t h) const {
    const int label = static_cast<int>(h % 4);
    std::string cot =
        "Step A:\n"
        "- intent: find " + detail::pick_word(h, 0) + " information\n"
        "- answer type: " + detail::pick_word(h, 1) + " statement\n"
        "- object range: " + detail::pick_word(h, 2) + " domain\n"
        "- minimal elements: " + detail::pick_word(h, 3) + "; " + detail::pick_word(h, 4) + "\n"
        "- constraints: " + detail::pick_word(h, 5) + " required\n"
        "- synopsis: evidence centers on " + detail::pick_word(h, 6) + "\n"
        "Step B:\n"
        "- intent consistency: " + detail::pick_word(h, 7) + " level match\n"
        "- entity fidelity: entities align on " + detail::pick_word(h, 8) + "\n"
        "- logical completeness: covers " + detail::pick_word(h, 9) + " elements\n"
        "- information density: mostly " + detail::pick_word(h, 10) + "\n"
        "- summary: overall relevance " + std::to_string(label);
    nlohmann::json out;
    out["score"] = std::to_string(label);
    out["cot"] = cot;
    return out.dump();
  }

  std::uint64_t seed_;
  std::unordered_map<std::string, std::string> table_;
};

/// Deterministic offline scorer: one token per byte of the target, each with
/// the configured logprob. Pure function of (prompt, target, seed).
class MockScoringClient : public ScoringClient {
 public:
  explicit MockScoringClient(std::uint64_t seed = 0, double per_byte_logprob = -0.1)
      : seed_(seed), per_byte_(per_byte_logprob) {}

  TokenScoreSeq score(const std::string& prompt, const std::string& target) override {
    ledger_.record();
    if (target.empty()) throw Error(ErrorCode::EmptySequence, "target must be non-empty");
    (void)prompt;
    std::vector<double> lps(target.size(), per_byte_);
    return TokenScoreSeq::make(std::move(lps));
  }

 private:
  std::uint64_t seed_;
  double per_byte_;
};

/// Test double with a fixed response script; entries are either a payload or
/// a transient failure marker.
class ScriptedGenerationClient : public GenerationClient {
 public:
  struct Step {
    bool fail = false;
    std::string payload;
  };

  explicit ScriptedGenerationClient(std::vector<Step> script) : script_(std::move(script)) {}

  std::string generate(const std::string&) override {
    ledger_.record();
    std::lock_guard lock(mu_);
    if (cursor_ >= script_.size()) {
      throw Error(ErrorCode::GenerationFailed, "script exhausted");
    }
    const Step& s = script_[cursor_++];
    if (s.fail) throw Error(ErrorCode::Transport, "scripted transport failure");
    return s.payload;
  }

 private:
  std::mutex mu_;
  std::size_t cursor_ = 0;
  std::vector<Step> script_;
};

/// Retries fn on transport/5xx failures with exponential backoff; total
/// attempts never exceed max_retries + 1.
template <typename Fn>
auto with_retries(const ClientConfig& cfg, Fn fn) -> decltype(fn()) {
  int attempt = 0;
  for (;;) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Transport) throw;
      if (attempt >= cfg.max_retries) {
        throw Error(ErrorCode::GenerationFailed,
                    "retry budget exhausted after " + std::to_string(attempt + 1) +
                        " attempts: " + e.what());
      }
      if (cfg.backoff_base_seconds > 0) {
        auto delay = std::chrono::duration<double>(cfg.backoff_base_seconds *
                                                   static_cast<double>(1 << attempt));
        std::this_thread::sleep_for(delay);
      }
      ++attempt;
    }
  }
}

}  // namespace ragmatch
