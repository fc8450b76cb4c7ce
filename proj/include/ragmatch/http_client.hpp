#pragma once

#include <memory>
#include <semaphore>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "ragmatch/clients.hpp"
#include "ragmatch/errors.hpp"

namespace ragmatch {

namespace detail {

// Vendor-neutral completion wire schema. Adapters for vendor-specific
// schemas can subclass and override the request/response mapping.
inline constexpr const char* kGeneratePath = "/v1/generate";
inline constexpr const char* kScorePath = "/v1/score";

class InflightGate {
 public:
  explicit InflightGate(int width) : sem_(width) {}
  struct Pass {
    std::counting_semaphore<>& sem;
    ~Pass() { sem.release(); }
  };
  Pass acquire() {
    sem_.acquire();
    return Pass{sem_};
  }

 private:
  std::counting_semaphore<> sem_;
};

inline httplib::Result post_json(httplib::Client& client, const ClientConfig& cfg,
                                 const char* path, const nlohmann::json& body) {
  client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_seconds));
  client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_seconds));
  return client.Post(path, body.dump(), "application/json");
}

// Maps an HTTP outcome to the retry policy: transport errors and 5xx are
// retryable, 4xx is a hard rejection.
inline std::string check_response(const httplib::Result& res) {
  if (!res) {
    throw Error(ErrorCode::Transport, "transport error: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500) {
    throw Error(ErrorCode::Transport, "server error " + std::to_string(res->status));
  }
  if (res->status >= 400) {
    throw Error(ErrorCode::RemoteRejected,
                "status " + std::to_string(res->status) + ": " + res->body);
  }
  return res->body;
}

}  // namespace detail

class HttpGenerationClient : public GenerationClient {
 public:
  explicit HttpGenerationClient(ClientConfig cfg)
      : cfg_(std::move(cfg)), gate_(cfg_.max_inflight) {
    cfg_.validate();
  }

  std::string generate(const std::string& prompt) override {
    if (prompt.empty()) throw Error(ErrorCode::InputParse, "prompt must be non-empty");
    auto pass = gate_.acquire();
    nlohmann::json body = {{"model", cfg_.model},
                           {"prompt", prompt},
                           {"temperature", cfg_.temperature}};
    std::string raw = with_retries(cfg_, [&] {
      ledger_.record();
      httplib::Client client(cfg_.endpoint);
      return detail::check_response(detail::post_json(client, cfg_, detail::kGeneratePath, body));
    });
    try {
      auto parsed = nlohmann::json::parse(raw);
      return parsed.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::RemoteRejected, std::string("bad generate payload: ") + e.what());
    }
  }

 private:
  ClientConfig cfg_;
  detail::InflightGate gate_;
};

class HttpScoringClient : public ScoringClient {
 public:
  explicit HttpScoringClient(ClientConfig cfg)
      : cfg_(std::move(cfg)), gate_(cfg_.max_inflight) {
    cfg_.validate();
  }

  TokenScoreSeq score(const std::string& prompt, const std::string& target) override {
    if (target.empty()) throw Error(ErrorCode::EmptySequence, "target must be non-empty");
    auto pass = gate_.acquire();
    nlohmann::json body = {{"model", cfg_.model}, {"prompt", prompt}, {"target", target}};
    std::string raw = with_retries(cfg_, [&] {
      ledger_.record();
      httplib::Client client(cfg_.endpoint);
      return detail::check_response(detail::post_json(client, cfg_, detail::kScorePath, body));
    });
    try {
      auto parsed = nlohmann::json::parse(raw);
      std::vector<double> lps = parsed.at("logprobs").get<std::vector<double>>();
      return TokenScoreSeq::make(std::move(lps));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidScorePayload, std::string("bad score payload: ") + e.what());
    }
  }

 private:
  ClientConfig cfg_;
  detail::InflightGate gate_;
};

inline std::shared_ptr<GenerationClient> make_generation_client(const ClientConfig& cfg) {
  cfg.validate();
  if (cfg.is_mock()) return std::make_shared<MockGenerationClient>(cfg.mock_seed);
  return std::make_shared<HttpGenerationClient>(cfg);
}

inline std::shared_ptr<ScoringClient> make_scoring_client(const ClientConfig& cfg) {
  cfg.validate();
  if (cfg.is_mock()) {
    return std::make_shared<MockScoringClient>(cfg.mock_seed, cfg.mock_per_byte_logprob);
  }
  return std::make_shared<HttpScoringClient>(cfg);
}

}  // namespace ragmatch
