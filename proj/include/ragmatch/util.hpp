#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ragmatch/errors.hpp"

namespace ragmatch {

inline std::uint64_t fnv1a64(const std::string& data, std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

/// Content hash used for prompt identity and file manifests.
inline std::string content_hash(const std::string& data) { return to_hex(fnv1a64(data)); }

/// Derives a named substream seed from the root seed, so every consumer of
/// randomness is reproducible independently of the others.
inline std::uint64_t substream_seed(std::uint64_t root_seed, const std::string& name) {
  return fnv1a64(name, root_seed ^ 0x9e3779b97f4a7c15ull);
}

inline std::mt19937_64 make_rng(std::uint64_t root_seed, const std::string& name) {
  return std::mt19937_64(substream_seed(root_seed, name));
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::InputParse, "cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::InputParse, "cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::InputParse, "cannot open for write: " + path);
  os << content;
  if (!os) throw Error(ErrorCode::InputParse, "write failed: " + path);
}

/// Order-preserving bounded-parallel map. Results land at the input's slot;
/// exceptions are rethrown on the caller thread, first input index wins.
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, std::size_t width, Fn fn)
    -> std::vector<decltype(fn(items.front()))> {
  using Out = decltype(fn(items.front()));
  std::vector<Out> results(items.size());
  if (items.empty()) return results;
  if (width <= 1 || items.size() == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) results[i] = fn(items[i]);
    return results;
  }
  std::vector<std::exception_ptr> errors(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      try {
        results[i] = fn(items[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(width, items.size()); ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace ragmatch
