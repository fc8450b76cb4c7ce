#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ragmatch/core.hpp"
#include "ragmatch/errors.hpp"

namespace ragmatch {

/// Source records for retrieval; ids must be unique.
struct KnowledgeBase {
  std::vector<EvidenceDoc> docs;
};

namespace detail {

// Decodes one UTF-8 codepoint starting at i; advances i. Invalid bytes
// decode as U+FFFD and consume one byte.
inline char32_t decode_utf8(const std::string& s, std::size_t& i) {
  unsigned char b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) { ++i; return b0; }
  int extra;
  char32_t cp;
  if ((b0 & 0xE0) == 0xC0) { extra = 1; cp = b0 & 0x1F; }
  else if ((b0 & 0xF0) == 0xE0) { extra = 2; cp = b0 & 0x0F; }
  else if ((b0 & 0xF8) == 0xF0) { extra = 3; cp = b0 & 0x07; }
  else { ++i; return 0xFFFD; }
  if (i + extra >= s.size()) { ++i; return 0xFFFD; }
  for (int k = 1; k <= extra; ++k) {
    unsigned char b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) { ++i; return 0xFFFD; }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += 1 + extra;
  return cp;
}

// Compatibility fold covering the forms that matter for search text:
// fullwidth ASCII, ideographic space, common typographic punctuation.
inline char32_t compat_fold(char32_t cp) {
  if (cp >= 0xFF01 && cp <= 0xFF5E) return cp - 0xFEE0;  // fullwidth -> ASCII
  if (cp == 0x3000) return U' ';                         // ideographic space
  switch (cp) {
    case 0x2018: case 0x2019: return U'\'';
    case 0x201C: case 0x201D: return U'"';
    case 0x2013: case 0x2014: case 0x2212: return U'-';
    case 0x00A0: case 0x2002: case 0x2003: case 0x2009: return U' ';
    default: return cp;
  }
}

inline char32_t fold_lower(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 32;
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 32;  // Latin-1 capitals
  return cp;
}

inline bool is_token_cp(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') ||
           (cp >= U'A' && cp <= U'Z');
  }
  // Non-ASCII: everything except known space/punctuation blocks counts as
  // word material so CJK and accented text stay intact.
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
  if (cp >= 0x3001 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp == 0x00B7 || cp == 0x00A0 || cp == 0xFFFD) return false;
  return true;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) { out.push_back(static_cast<char>(cp)); }
  else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace detail

/// Normalize, lowercase and split on non-alphanumeric codepoints.
/// Deterministic; empty input yields an empty list.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    char32_t cp = detail::decode_utf8(text, i);
    cp = detail::fold_lower(detail::compat_fold(cp));
    if (detail::is_token_cp(cp)) {
      detail::append_utf8(current, cp);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

struct Posting {
  std::uint32_t ordinal;
  std::uint32_t tf;
};

/// Immutable after build; safe for unlimited concurrent readers.
struct InvertedIndex {
  std::map<std::string, std::vector<Posting>> postings;
  std::vector<std::uint32_t> doc_lengths;
  std::vector<std::string> doc_ids;
  std::vector<std::string> doc_texts;
  double avg_doc_len = 0.0;
  std::uint32_t doc_count = 0;
};

inline InvertedIndex build_index(const KnowledgeBase& kb) {
  if (kb.docs.empty()) {
    throw Error(ErrorCode::EmptyKnowledgeBase, "knowledge base has no documents");
  }
  std::unordered_set<std::string> seen;
  InvertedIndex idx;
  idx.doc_count = static_cast<std::uint32_t>(kb.docs.size());
  idx.doc_lengths.reserve(kb.docs.size());
  double total_len = 0.0;
  for (std::uint32_t ord = 0; ord < kb.docs.size(); ++ord) {
    const EvidenceDoc& doc = kb.docs[ord];
    if (!seen.insert(doc.id).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate doc id " + doc.id);
    }
    auto terms = tokenize(doc.text);
    std::map<std::string, std::uint32_t> tf;
    for (auto& t : terms) ++tf[t];
    for (auto& [term, count] : tf) {
      idx.postings[term].push_back({ord, count});
    }
    idx.doc_lengths.push_back(static_cast<std::uint32_t>(terms.size()));
    idx.doc_ids.push_back(doc.id);
    idx.doc_texts.push_back(doc.text);
    total_len += static_cast<double>(terms.size());
  }
  idx.avg_doc_len = total_len / static_cast<double>(idx.doc_count);
  return idx;
}

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

/// Okapi BM25 with k1=1.2, b=0.75 and idf = ln((N-df+0.5)/(df+0.5)+1),
/// summed over query terms (repeats count).
inline double bm25_score(const InvertedIndex& idx,
                         const std::vector<std::string>& query_terms,
                         std::uint32_t ordinal) {
  if (ordinal >= idx.doc_count) {
    throw Error(ErrorCode::OrdinalOutOfRange,
                "ordinal " + std::to_string(ordinal) + " >= N=" + std::to_string(idx.doc_count));
  }
  const double n = static_cast<double>(idx.doc_count);
  const double len = static_cast<double>(idx.doc_lengths[ordinal]);
  double score = 0.0;
  for (const auto& term : query_terms) {
    auto it = idx.postings.find(term);
    if (it == idx.postings.end()) continue;
    const auto& plist = it->second;
    auto pit = std::lower_bound(plist.begin(), plist.end(), ordinal,
                                [](const Posting& p, std::uint32_t o) { return p.ordinal < o; });
    if (pit == plist.end() || pit->ordinal != ordinal) continue;
    const double df = static_cast<double>(plist.size());
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double tf = static_cast<double>(pit->tf);
    const double denom = tf + kBm25K1 * (1.0 - kBm25B + kBm25B * len / idx.avg_doc_len);
    score += idf * tf * (kBm25K1 + 1.0) / denom;
  }
  return score;
}

/// Pluggable dense scorer seam; an embedding service can replace BM25 here.
class DenseScorer {
 public:
  virtual ~DenseScorer() = default;
  virtual double score(const std::string& query_text, const std::string& doc_text) const = 0;
};

/// Top-k docs with positive BM25 score, ordered by (score desc, id asc).
inline std::vector<EvidenceDoc> retrieve_topk(const InvertedIndex& idx, const Query& q,
                                              std::size_t k) {
  if (k < 1) {
    throw Error(ErrorCode::InputParse, "k must be >= 1");
  }
  auto terms = tokenize(q.text);
  std::vector<EvidenceDoc> scored;
  for (std::uint32_t ord = 0; ord < idx.doc_count; ++ord) {
    double s = bm25_score(idx, terms, ord);
    if (s > 0.0) scored.push_back({idx.doc_ids[ord], idx.doc_texts[ord], s});
  }
  std::sort(scored.begin(), scored.end(), [](const EvidenceDoc& a, const EvidenceDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// ---- Index persistence: magic "RMIX", version u32, little-endian payload ----

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 4);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}
inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}
inline double read_f64(std::istream& is) {
  std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}
inline std::string read_str(std::istream& is) {
  std::uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace detail

inline constexpr char kIndexMagic[4] = {'R', 'M', 'I', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;

inline void save_index(const InvertedIndex& idx, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::InputParse, "cannot open for write: " + path);
  os.write(kIndexMagic, 4);
  detail::write_u32(os, kIndexVersion);
  detail::write_u32(os, idx.doc_count);
  detail::write_f64(os, idx.avg_doc_len);
  for (std::uint32_t i = 0; i < idx.doc_count; ++i) {
    detail::write_str(os, idx.doc_ids[i]);
    detail::write_str(os, idx.doc_texts[i]);
    detail::write_u32(os, idx.doc_lengths[i]);
  }
  detail::write_u64(os, idx.postings.size());
  for (const auto& [term, plist] : idx.postings) {
    detail::write_str(os, term);
    detail::write_u64(os, plist.size());
    for (const Posting& p : plist) {
      detail::write_u32(os, p.ordinal);
      detail::write_u32(os, p.tf);
    }
  }
  if (!os) throw Error(ErrorCode::InputParse, "write failed: " + path);
}

inline InvertedIndex load_index(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::InputParse, "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kIndexMagic, 4) != 0) {
    throw Error(ErrorCode::InputParse, "bad index magic in " + path);
  }
  std::uint32_t version = detail::read_u32(is);
  if (version != kIndexVersion) {
    throw Error(ErrorCode::InputParse, "unsupported index version " + std::to_string(version));
  }
  InvertedIndex idx;
  idx.doc_count = detail::read_u32(is);
  idx.avg_doc_len = detail::read_f64(is);
  for (std::uint32_t i = 0; i < idx.doc_count; ++i) {
    idx.doc_ids.push_back(detail::read_str(is));
    idx.doc_texts.push_back(detail::read_str(is));
    idx.doc_lengths.push_back(detail::read_u32(is));
  }
  std::uint64_t nterms = detail::read_u64(is);
  for (std::uint64_t t = 0; t < nterms; ++t) {
    std::string term = detail::read_str(is);
    std::uint64_t np = detail::read_u64(is);
    std::vector<Posting> plist;
    plist.reserve(np);
    for (std::uint64_t p = 0; p < np; ++p) {
      std::uint32_t ord = detail::read_u32(is);
      std::uint32_t tf = detail::read_u32(is);
      plist.push_back({ord, tf});
    }
    idx.postings.emplace(std::move(term), std::move(plist));
  }
  if (!is) throw Error(ErrorCode::InputParse, "truncated index file " + path);
  return idx;
}

}  // namespace ragmatch
