#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragmatch/clients.hpp"
#include "ragmatch/core.hpp"
#include "ragmatch/errors.hpp"
#include "ragmatch/eval.hpp"
#include "ragmatch/templates.hpp"
#include "ragmatch/util.hpp"

namespace ragmatch {

struct PreferencePair {
  Query query;
  CandidateDoc candidate;
  ReasoningTrajectory preferred;     // label = gold
  ReasoningTrajectory dispreferred;  // label adjacent to gold

  static PreferencePair make(Query q, CandidateDoc d, ReasoningTrajectory preferred,
                             ReasoningTrajectory dispreferred) {
    if (preferred.label == dispreferred.label) {
      throw Error(ErrorCode::InvariantViolation, "preference pair labels must differ");
    }
    const auto neighbors = adjacent_labels(preferred.label);
    if (std::find(neighbors.begin(), neighbors.end(), dispreferred.label) == neighbors.end()) {
      throw Error(ErrorCode::InvariantViolation,
                  "dispreferred label must be adjacent to the gold label");
    }
    return PreferencePair{std::move(q), std::move(d), std::move(preferred),
                          std::move(dispreferred)};
  }
};

/// Samples the dispreferred label uniformly from the gold label's neighbors
/// and prompts the policy for a rationale conditioned on each label.
inline PreferencePair construct_pair(const Query& q, const CandidateDoc& d, RelevanceLabel gold,
                                     GenerationClient& policy, std::mt19937_64& rng,
                                     const ClientConfig& cfg = {}) {
  const auto neighbors = adjacent_labels(gold);
  // rng() % 2 is exactly uniform; the single-neighbor case is deterministic.
  const RelevanceLabel y_l = neighbors[rng() % neighbors.size()];

  auto rationale_for = [&](RelevanceLabel label) {
    std::string prompt = templates::rationale().render(
        {{"label", label.format()},
         {"query", q.text},
         {"title", nlohmann::json(d.title).dump()},
         {"content", nlohmann::json(d.content).dump()}});
    std::string text = with_retries(cfg, [&] { return policy.generate(prompt); });
    if (trim_copy(text).empty()) {
      throw Error(ErrorCode::AnnotationRejected, "blank rationale for label " + label.format());
    }
    return ReasoningTrajectory::make(label, std::move(text));
  };

  ReasoningTrajectory r_w = rationale_for(gold);
  ReasoningTrajectory r_l = rationale_for(y_l);
  return PreferencePair::make(q, d, std::move(r_w), std::move(r_l));
}

/// Log-ratio of trajectory probability under the trained policy versus the
/// reference: sum of policy logprobs minus sum of reference logprobs, no
/// length normalization.
inline double traj_logratio(const TokenScoreSeq& policy_scores, const TokenScoreSeq& ref_scores) {
  if (policy_scores.empty() || ref_scores.empty()) {
    throw Error(ErrorCode::EmptySequence, "log-ratio over empty sequence");
  }
  if (policy_scores.size() != ref_scores.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(policy_scores.size()) + " vs " + std::to_string(ref_scores.size()));
  }
  return policy_scores.sum() - ref_scores.sum();
}

namespace detail {

inline void check_dpo_inputs(double h_w, double h_l, double beta) {
  if (beta <= 0.0) throw Error(ErrorCode::NonPositiveBeta, "beta must be > 0");
  if (!std::isfinite(h_w) || !std::isfinite(h_l) || !std::isfinite(beta)) {
    throw Error(ErrorCode::NonFiniteInput, "dpo inputs must be finite");
  }
}

// softplus(x) = max(x,0) + ln(1+e^{-|x|}); overflow-free for any x.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

/// -ln sigma(beta * (h_w - h_l)), computed as softplus(-beta * (h_w - h_l)).
inline double dpo_loss(double h_w, double h_l, double beta) {
  detail::check_dpo_inputs(h_w, h_l, beta);
  return detail::softplus(-beta * (h_w - h_l));
}

/// DPO loss plus the auxiliary gold-label NLL term.
inline double dpo_plus_loss(double h_w, double h_l, double beta, double label_logprob) {
  if (!std::isfinite(label_logprob)) {
    throw Error(ErrorCode::NonFiniteInput, "label logprob must be finite");
  }
  if (label_logprob > 0.0) {
    throw Error(ErrorCode::PositiveLogProb, "label logprob must be <= 0");
  }
  return dpo_loss(h_w, h_l, beta) - label_logprob;
}

struct DpoPlusItem {
  double h_w;
  double h_l;
  double label_logprob;
};

/// Batch form: mean of the DPO terms plus mean of the auxiliary NLL terms.
inline double dpo_plus_loss_batch(const std::vector<DpoPlusItem>& batch, double beta) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "dpo+ over empty batch");
  KahanSum dpo_sum, aux_sum;
  for (const auto& item : batch) {
    dpo_sum.add(dpo_loss(item.h_w, item.h_l, beta));
    if (!std::isfinite(item.label_logprob)) {
      throw Error(ErrorCode::NonFiniteInput, "label logprob must be finite");
    }
    if (item.label_logprob > 0.0) {
      throw Error(ErrorCode::PositiveLogProb, "label logprob must be <= 0");
    }
    aux_sum.add(-item.label_logprob);
  }
  const double n = static_cast<double>(batch.size());
  return dpo_sum.value() / n + aux_sum.value() / n;
}

struct DpoGrad {
  double d_h_w;
  double d_h_l;
};

/// Analytic gradient of dpo_loss; the components sum to zero exactly.
inline DpoGrad dpo_grad(double h_w, double h_l, double beta) {
  detail::check_dpo_inputs(h_w, h_l, beta);
  const double s = detail::sigmoid(-beta * (h_w - h_l));
  return DpoGrad{-beta * s, beta * s};
}

// ---- Desk-scale toy policy and the calibration demonstration ----

inline constexpr int kNumLabels = 4;

/// Linear softmax policy over the four labels: logits = W^T x.
struct ToyPolicy {
  std::size_t feature_dim = 0;
  std::vector<double> weights;  // row-major, feature_dim x 4

  double& at(std::size_t feature, int label) { return weights[feature * kNumLabels + label]; }
  double at(std::size_t feature, int label) const {
    return weights[feature * kNumLabels + label];
  }

  std::array<double, kNumLabels> logits(const std::vector<double>& x) const {
    std::array<double, kNumLabels> out{};
    for (std::size_t f = 0; f < feature_dim; ++f) {
      for (int j = 0; j < kNumLabels; ++j) out[j] += x[f] * at(f, j);
    }
    return out;
  }

  std::array<double, kNumLabels> log_softmax(const std::vector<double>& x) const {
    auto z = logits(x);
    double m = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - m);
    lse = m + std::log(lse);
    for (double& v : z) v -= lse;
    return z;
  }
};

struct ToyPair {
  std::vector<double> features;
  RelevanceLabel gold;       // preferred label y_w
  RelevanceLabel adjacent;   // dispreferred label y_l
};

struct CalibrationReport {
  BiasMetrics before;
  BiasMetrics after;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int steps = 0;
};

/// Synthetic overestimation world: one item per gold label in {0,1,2} per
/// round, one-hot features, and an initial policy that puts 0.7 mass on
/// gold+1 and 0.1 on each other label.
inline std::pair<ToyPolicy, std::vector<ToyPair>> make_overestimation_world(
    std::size_t n_items, std::uint64_t seed) {
  ToyPolicy policy;
  policy.feature_dim = kNumLabels;
  policy.weights.assign(policy.feature_dim * kNumLabels, 0.0);
  // exp(ln 7) / (exp(ln 7) + 3) = 0.7
  for (int g = 0; g <= 2; ++g) policy.at(static_cast<std::size_t>(g), g + 1) = std::log(7.0);

  auto rng = make_rng(seed, "dgpo-world");
  std::vector<ToyPair> pairs;
  pairs.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    const int gold = static_cast<int>(i % 3);  // 0..2 so gold+1 is always valid
    std::vector<double> x(kNumLabels, 0.0);
    x[static_cast<std::size_t>(gold)] = 1.0;
    const auto neighbors = adjacent_labels(RelevanceLabel(gold));
    const RelevanceLabel y_l = neighbors[rng() % neighbors.size()];
    pairs.push_back(ToyPair{std::move(x), RelevanceLabel(gold), y_l});
  }
  return {std::move(policy), std::move(pairs)};
}

namespace detail {

inline BiasMetrics sampled_bias(const ToyPolicy& policy, const std::vector<ToyPair>& pairs,
                                std::uint64_t seed) {
  auto rng = make_rng(seed, "dgpo-bias-eval");
  std::vector<std::pair<RelevanceLabel, RelevanceLabel>> gp;
  gp.reserve(pairs.size());
  for (const auto& pair : pairs) {
    auto lp = policy.log_softmax(pair.features);
    // inverse-CDF sample from the categorical distribution
    const double u =
        static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);  // [0,1) at 53 bits
    double acc = 0.0;
    int predicted = kNumLabels - 1;
    for (int j = 0; j < kNumLabels; ++j) {
      acc += std::exp(lp[j]);
      if (u < acc) { predicted = j; break; }
    }
    gp.emplace_back(pair.gold, RelevanceLabel(predicted));
  }
  return bias_metrics(gp);
}

}  // namespace detail

/// Gradient descent on the batch-mean calibrated preference loss, with h
/// values taken from the toy policy's label log-probabilities against the
/// frozen initial policy as reference. Deterministic under a fixed seed.
inline CalibrationReport calibrate_toy_policy(ToyPolicy& policy, const std::vector<ToyPair>& pairs,
                                              double beta, double lr, int steps,
                                              std::uint64_t seed) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "calibration needs at least one pair");
  if (lr <= 0.0) throw Error(ErrorCode::ConfigInvalid, "lr must be > 0");
  detail::check_dpo_inputs(0.0, 0.0, beta);

  const ToyPolicy reference = policy;
  const double n = static_cast<double>(pairs.size());

  auto batch_loss = [&](const ToyPolicy& p) {
    std::vector<DpoPlusItem> items;
    items.reserve(pairs.size());
    for (const auto& pair : pairs) {
      auto lp = p.log_softmax(pair.features);
      auto lp_ref = reference.log_softmax(pair.features);
      items.push_back(DpoPlusItem{lp[pair.gold.value()] - lp_ref[pair.gold.value()],
                                  lp[pair.adjacent.value()] - lp_ref[pair.adjacent.value()],
                                  lp[pair.gold.value()]});
    }
    return dpo_plus_loss_batch(items, beta);
  };

  CalibrationReport report;
  report.steps = steps;
  report.before = detail::sampled_bias(policy, pairs, seed);
  report.initial_loss = batch_loss(policy);

  for (int step = 0; step < steps; ++step) {
    std::vector<double> grad(policy.weights.size(), 0.0);
    for (const auto& pair : pairs) {
      auto lp = policy.log_softmax(pair.features);
      auto lp_ref = reference.log_softmax(pair.features);
      const int w = pair.gold.value();
      const int l = pair.adjacent.value();
      const double h_w = lp[w] - lp_ref[w];
      const double h_l = lp[l] - lp_ref[l];
      const DpoGrad g = dpo_grad(h_w, h_l, beta);

      std::array<double, kNumLabels> prob;
      for (int j = 0; j < kNumLabels; ++j) prob[j] = std::exp(lp[j]);
      for (std::size_t f = 0; f < policy.feature_dim; ++f) {
        const double xf = pair.features[f];
        if (xf == 0.0) continue;
        for (int j = 0; j < kNumLabels; ++j) {
          // d log pi(c|x) / d W[f][j] = x_f * ([j==c] - p_j)
          const double dlp_w = xf * ((j == w ? 1.0 : 0.0) - prob[j]);
          const double dlp_l = xf * ((j == l ? 1.0 : 0.0) - prob[j]);
          grad[f * kNumLabels + j] += g.d_h_w * dlp_w + g.d_h_l * dlp_l - dlp_w;
        }
      }
    }
    for (std::size_t i = 0; i < policy.weights.size(); ++i) {
      policy.weights[i] -= lr * grad[i] / n;
      if (!std::isfinite(policy.weights[i])) {
        throw Error(ErrorCode::DivergenceDetected, "non-finite weight at step " +
                                                       std::to_string(step));
      }
    }
    const double loss = batch_loss(policy);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::DivergenceDetected, "non-finite loss at step " + std::to_string(step));
    }
    report.final_loss = loss;
  }
  if (steps == 0) report.final_loss = report.initial_loss;
  report.after = detail::sampled_bias(policy, pairs, seed);
  return report;
}

}  // namespace ragmatch
