#pragma once

#include <string>

#include "ragmatch/clients.hpp"
#include "ragmatch/errors.hpp"
#include "ragmatch/eval.hpp"
#include "ragmatch/util.hpp"

namespace ragmatch {

/// One declarative config file (INI-style sections) plus flag overrides;
/// flags win. Unknown keys are rejected so typos fail loudly.
struct ToolkitConfig {
  ClientConfig client{.endpoint = "mock:"};
  std::size_t retrieval_k = 5;
  std::size_t parallel_width = 1;
  int max_resamples = 2;
  double beta = 0.1;
  double lr = 0.1;
  int steps = 500;
  std::size_t demo_items = 300;
  TiePolicy tie_policy = TiePolicy::exclude;
  GainScheme gain = GainScheme::exponential;
  std::uint64_t seed = 0;

  std::string source_text;  // raw config file content, hashed into manifests

  std::string hash() const { return content_hash(source_text); }
};

namespace detail {

inline double parse_real(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigInvalid, where + ": not a number: " + v);
  }
}

inline long long parse_int(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigInvalid, where + ": not an integer: " + v);
  }
}

}  // namespace detail

inline TiePolicy parse_tie_policy(const std::string& v) {
  if (v == "exclude") return TiePolicy::exclude;
  if (v == "half") return TiePolicy::half;
  throw Error(ErrorCode::ConfigInvalid, "tie_policy must be 'exclude' or 'half', got " + v);
}

inline GainScheme parse_gain(const std::string& v) {
  if (v == "exp" || v == "exponential") return GainScheme::exponential;
  if (v == "linear") return GainScheme::linear;
  throw Error(ErrorCode::ConfigInvalid, "gain must be 'exp' or 'linear', got " + v);
}

inline void apply_config_entry(ToolkitConfig& cfg, const std::string& section,
                               const std::string& key, const std::string& value) {
  const std::string where = "[" + section + "] " + key;
  auto is = [&](const char* s, const char* k) { return section == s && key == k; };
  if (is("clients", "endpoint")) cfg.client.endpoint = value;
  else if (is("clients", "model")) cfg.client.model = value;
  else if (is("clients", "timeout")) cfg.client.timeout_seconds = detail::parse_real(value, where);
  else if (is("clients", "max_retries")) cfg.client.max_retries = static_cast<int>(detail::parse_int(value, where));
  else if (is("clients", "backoff_base")) cfg.client.backoff_base_seconds = detail::parse_real(value, where);
  else if (is("clients", "temperature")) cfg.client.temperature = detail::parse_real(value, where);
  else if (is("clients", "max_inflight")) cfg.client.max_inflight = static_cast<int>(detail::parse_int(value, where));
  else if (is("clients", "mock_per_byte_logprob")) cfg.client.mock_per_byte_logprob = detail::parse_real(value, where);
  else if (is("retrieval", "k")) cfg.retrieval_k = static_cast<std::size_t>(detail::parse_int(value, where));
  else if (is("phase1", "parallel_width")) cfg.parallel_width = static_cast<std::size_t>(detail::parse_int(value, where));
  else if (is("hra", "max_resamples")) cfg.max_resamples = static_cast<int>(detail::parse_int(value, where));
  else if (is("dgpo", "beta")) cfg.beta = detail::parse_real(value, where);
  else if (is("dgpo", "lr")) cfg.lr = detail::parse_real(value, where);
  else if (is("dgpo", "steps")) cfg.steps = static_cast<int>(detail::parse_int(value, where));
  else if (is("dgpo", "demo_items")) cfg.demo_items = static_cast<std::size_t>(detail::parse_int(value, where));
  else if (is("eval", "tie_policy")) cfg.tie_policy = parse_tie_policy(value);
  else if (is("eval", "gain")) cfg.gain = parse_gain(value);
  else if (is("run", "seed")) cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, where));
  else throw Error(ErrorCode::ConfigInvalid, "unknown config key " + where);
}

inline ToolkitConfig parse_config_text(const std::string& text) {
  ToolkitConfig cfg;
  cfg.source_text = text;
  std::string section;
  std::size_t pos = 0, lineno = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = trim_copy(text.substr(pos, end - pos));
    pos = end + 1;
    ++lineno;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(ErrorCode::ConfigInvalid, "line " + std::to_string(lineno) + ": bad section");
      }
      section = trim_copy(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigInvalid,
                  "line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_entry(cfg, section, trim_copy(line.substr(0, eq)),
                       trim_copy(line.substr(eq + 1)));
    if (end == text.size()) break;
  }
  cfg.client.validate();
  if (cfg.beta <= 0) throw Error(ErrorCode::ConfigInvalid, "beta must be > 0");
  return cfg;
}

inline ToolkitConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::ConfigInvalid, "cannot read config file: " + path);
  }
  return parse_config_text(text);
}

}  // namespace ragmatch
