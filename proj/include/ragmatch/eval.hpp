#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "ragmatch/core.hpp"
#include "ragmatch/errors.hpp"

namespace ragmatch {

struct JudgedItem {
  std::string doc_id;
  RelevanceLabel gold;
  double predicted_score;
};

struct QueryRun {
  std::string query_id;
  std::vector<JudgedItem> items;
};

enum class GainScheme { exponential, linear };
enum class TiePolicy { exclude, half };

inline double ndcg_gain(RelevanceLabel label, GainScheme scheme) {
  const double r = static_cast<double>(label.value());
  return scheme == GainScheme::exponential ? std::pow(2.0, r) - 1.0 : r;
}

/// NDCG@k over items already sorted by predicted score (descending).
/// Gain 2^r - 1 (or linear), discount 1/log2(i+1) with rank i from 1.
/// Returns nullopt (ZeroGain) when every label is 0.
inline std::optional<double> ndcg_at_k(const std::vector<JudgedItem>& ranked, std::size_t k,
                                       GainScheme scheme = GainScheme::exponential) {
  if (ranked.empty()) throw Error(ErrorCode::EmptyItems, "ndcg over empty item list");
  if (k < 1) throw Error(ErrorCode::InputParse, "k must be >= 1");
  bool any_gain = false;
  for (const auto& item : ranked) {
    if (item.gold.value() > 0) { any_gain = true; break; }
  }
  if (!any_gain) return std::nullopt;

  const std::size_t depth = std::min(k, ranked.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < depth; ++i) {
    dcg += ndcg_gain(ranked[i].gold, scheme) / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  ideal.reserve(ranked.size());
  for (const auto& item : ranked) ideal.push_back(item.gold.value());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < depth; ++i) {
    idcg += ndcg_gain(RelevanceLabel(ideal[i]), scheme) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

struct PnrResult {
  double pnr = 0.0;           // meaningful only when !pnr_infinite
  bool pnr_infinite = false;  // N- == 0
  double npnr = 0.0;
  double n_pos = 0.0;
  double n_neg = 0.0;
  std::size_t n_tied = 0;
};

/// Pairwise ranking consistency pooled over all queries. Only pairs with
/// different gold labels are comparable; predicted-score ties follow the
/// tie policy (exclude: counted only; half: 0.5 to each side).
inline PnrResult npnr(const std::vector<QueryRun>& runs, TiePolicy tie_policy = TiePolicy::exclude) {
  double n_pos = 0.0, n_neg = 0.0;
  std::size_t n_tied = 0;
  for (const auto& run : runs) {
    const auto& items = run.items;
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t j = i + 1; j < items.size(); ++j) {
        if (items[i].gold == items[j].gold) continue;
        const bool gold_i_higher = items[i].gold > items[j].gold;
        if (items[i].predicted_score == items[j].predicted_score) {
          ++n_tied;
          if (tie_policy == TiePolicy::half) {
            n_pos += 0.5;
            n_neg += 0.5;
          }
          continue;
        }
        const bool pred_i_higher = items[i].predicted_score > items[j].predicted_score;
        if (gold_i_higher == pred_i_higher) n_pos += 1.0;
        else n_neg += 1.0;
      }
    }
  }
  if (n_pos + n_neg == 0.0) {
    throw Error(ErrorCode::NoComparablePairs, "no comparable pairs under the tie policy");
  }
  PnrResult res;
  res.n_pos = n_pos;
  res.n_neg = n_neg;
  res.n_tied = n_tied;
  res.npnr = n_pos / (n_pos + n_neg);
  if (n_neg == 0.0) {
    res.pnr_infinite = true;
    res.pnr = std::numeric_limits<double>::infinity();
  } else {
    res.pnr = n_pos / n_neg;
  }
  return res;
}

struct BiasMetrics {
  double over_rate = 0.0;   // fraction with predicted > gold
  double under_rate = 0.0;  // fraction with predicted < gold
  double mean_bias = 0.0;   // mean(predicted - gold)
};

inline BiasMetrics bias_metrics(
    const std::vector<std::pair<RelevanceLabel, RelevanceLabel>>& gold_predicted) {
  if (gold_predicted.empty()) throw Error(ErrorCode::EmptyInput, "bias metrics over empty input");
  std::size_t over = 0, under = 0;
  long long signed_sum = 0;
  for (const auto& [gold, predicted] : gold_predicted) {
    if (predicted > gold) ++over;
    if (predicted < gold) ++under;
    signed_sum += predicted.value() - gold.value();
  }
  const double n = static_cast<double>(gold_predicted.size());
  return BiasMetrics{static_cast<double>(over) / n, static_cast<double>(under) / n,
                     static_cast<double>(signed_sum) / n};
}

struct MetricsReport {
  std::map<int, double> ndcg;  // K in {1,3,5,10}
  double npnr = 0.0;
  double pnr = 0.0;
  bool pnr_infinite = false;
  double over_rate = 0.0;
  double under_rate = 0.0;
  double mean_bias = 0.0;
  std::size_t n_queries = 0;
  std::size_t n_skipped_zero_gain = 0;
  std::size_t n_tied_pairs = 0;
  bool has_bias = false;
};

inline constexpr int kNdcgCutoffs[] = {1, 3, 5, 10};

/// Full evaluation: per-query NDCG averaged over non-zero-gain queries,
/// globally pooled nPNR, and bias metrics over items whose predicted score
/// is an integral label in [0,3].
inline MetricsReport evaluate_runs(std::vector<QueryRun> runs,
                                   TiePolicy tie_policy = TiePolicy::exclude,
                                   GainScheme gain = GainScheme::exponential) {
  MetricsReport report;
  report.n_queries = runs.size();

  for (auto& run : runs) {
    std::sort(run.items.begin(), run.items.end(), [](const JudgedItem& a, const JudgedItem& b) {
      if (a.predicted_score != b.predicted_score) return a.predicted_score > b.predicted_score;
      return a.doc_id < b.doc_id;
    });
  }

  std::map<int, double> ndcg_sum;
  std::size_t ndcg_queries = 0;
  for (const auto& run : runs) {
    auto probe = ndcg_at_k(run.items, 1, gain);
    if (!probe) {
      ++report.n_skipped_zero_gain;
      continue;
    }
    ++ndcg_queries;
    for (int k : kNdcgCutoffs) {
      ndcg_sum[k] += *ndcg_at_k(run.items, static_cast<std::size_t>(k), gain);
    }
  }
  for (int k : kNdcgCutoffs) {
    report.ndcg[k] = ndcg_queries ? ndcg_sum[k] / static_cast<double>(ndcg_queries) : 0.0;
  }

  PnrResult pnr = npnr(runs, tie_policy);
  report.npnr = pnr.npnr;
  report.pnr = pnr.pnr;
  report.pnr_infinite = pnr.pnr_infinite;
  report.n_tied_pairs = pnr.n_tied;

  std::vector<std::pair<RelevanceLabel, RelevanceLabel>> labeled;
  for (const auto& run : runs) {
    for (const auto& item : run.items) {
      const double s = item.predicted_score;
      if (s == std::floor(s) && s >= 0.0 && s <= 3.0) {
        labeled.emplace_back(item.gold, RelevanceLabel(static_cast<int>(s)));
      }
    }
  }
  if (!labeled.empty()) {
    BiasMetrics bias = bias_metrics(labeled);
    report.over_rate = bias.over_rate;
    report.under_rate = bias.under_rate;
    report.mean_bias = bias.mean_bias;
    report.has_bias = true;
  }
  return report;
}

}  // namespace ragmatch
