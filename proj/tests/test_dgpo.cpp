#include <doctest.h>

#include <cmath>
#include <random>

#include "ragmatch/dgpo.hpp"

using namespace ragmatch;

namespace {

ClientConfig no_backoff() {
  ClientConfig cfg;
  cfg.backoff_base_seconds = 0.0;
  return cfg;
}

Query toy_query() { return Query::make("q1", "alpha"); }
CandidateDoc toy_doc() { return CandidateDoc::make("d1", "title", "content"); }

}  // namespace

TEST_CASE("construct_pair: single-neighbor boundary is deterministic") {
  MockGenerationClient policy(7);
  auto rng = make_rng(7, "pairs");
  for (int i = 0; i < 5; ++i) {
    auto pair = construct_pair(toy_query(), toy_doc(), RelevanceLabel(0), policy, rng,
                               no_backoff());
    CHECK(pair.preferred.label.value() == 0);
    CHECK(pair.dispreferred.label.value() == 1);
  }
}

TEST_CASE("construct_pair: seeded sampling is reproducible") {
  auto sample = [&](std::uint64_t seed) {
    MockGenerationClient policy(seed);
    auto rng = make_rng(seed, "pairs");
    auto pair = construct_pair(toy_query(), toy_doc(), RelevanceLabel(2), policy, rng,
                               no_backoff());
    return pair.dispreferred.label.value();
  };
  CHECK(sample(11) == sample(11));
  CHECK(sample(12) == sample(12));
}

TEST_CASE("construct_pair: adjacent label frequency is near-uniform") {
  MockGenerationClient policy(0);
  std::size_t low = 0;
  const int trials = 10000;
  for (int seed = 0; seed < trials; ++seed) {
    auto rng = make_rng(static_cast<std::uint64_t>(seed), "pairs");
    auto pair =
        construct_pair(toy_query(), toy_doc(), RelevanceLabel(2), policy, rng, no_backoff());
    if (pair.dispreferred.label.value() == 1) ++low;
  }
  double freq = static_cast<double>(low) / trials;
  CHECK(freq > 0.48);
  CHECK(freq < 0.52);
}

TEST_CASE("construct_pair: rationales carry their conditioning labels") {
  MockGenerationClient policy(3);
  auto rng = make_rng(3, "pairs");
  auto pair = construct_pair(toy_query(), toy_doc(), RelevanceLabel(3), policy, rng,
                             no_backoff());
  CHECK(pair.preferred.raw_cot.find("relevance is 3") != std::string::npos);
  CHECK(pair.dispreferred.raw_cot.find("relevance is 2") != std::string::npos);
}

TEST_CASE("preference pair adjacency invariant holds over random gold labels") {
  MockGenerationClient policy(5);
  std::mt19937_64 gold_rng(99);
  for (int i = 0; i < 200; ++i) {
    auto rng = make_rng(gold_rng(), "pairs");
    RelevanceLabel gold(static_cast<int>(gold_rng() % 4));
    auto pair = construct_pair(toy_query(), toy_doc(), gold, policy, rng, no_backoff());
    CHECK(pair.preferred.label == gold);
    CHECK(std::abs(pair.dispreferred.label.value() - gold.value()) == 1);
  }
}

TEST_CASE("PreferencePair::make rejects non-adjacent or equal labels") {
  auto traj = [](int y) { return ReasoningTrajectory::make(RelevanceLabel(y), "r"); };
  CHECK_THROWS_AS(PreferencePair::make(toy_query(), toy_doc(), traj(2), traj(2)), Error);
  CHECK_THROWS_AS(PreferencePair::make(toy_query(), toy_doc(), traj(0), traj(3)), Error);
}

TEST_CASE("traj_logratio is a difference of sums") {
  auto p = TokenScoreSeq::make({-0.5, -1.5});
  auto r = TokenScoreSeq::make({-1.0, -2.0});
  CHECK(traj_logratio(p, p) == 0.0);
  CHECK(traj_logratio(p, r) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(traj_logratio(p, TokenScoreSeq::make({-1.0})), Error);
  CHECK_THROWS_AS(traj_logratio(TokenScoreSeq{}, TokenScoreSeq{}), Error);
}

TEST_CASE("traj_logratio matches an element-wise oracle on random sequences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-4.0, 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(50), b(50);
    for (int i = 0; i < 50; ++i) { a[i] = dist(rng); b[i] = dist(rng); }
    // oracle: difference elementwise, then sum
    long double diff = 0.0L;
    for (int i = 0; i < 50; ++i) diff += a[i] - b[i];
    double got = traj_logratio(TokenScoreSeq::make(a), TokenScoreSeq::make(b));
    CHECK(std::abs(got - static_cast<double>(diff)) < 1e-12);
  }
}

TEST_CASE("dpo_loss closed-form values") {
  CHECK(dpo_loss(1.0, 1.0, 0.1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(dpo_loss(10.0, 0.0, 0.1) == doctest::Approx(0.313262).epsilon(1e-5));
  CHECK(dpo_loss(0.0, 10.0, 0.1) == doctest::Approx(1.313262).epsilon(1e-5));
}

TEST_CASE("dpo_loss input validation") {
  CHECK_THROWS_AS(dpo_loss(0, 0, 0.0), Error);
  CHECK_THROWS_AS(dpo_loss(0, 0, -1.0), Error);
  CHECK_THROWS_AS(dpo_loss(std::nan(""), 0, 0.1), Error);
}

TEST_CASE("dpo_loss softplus identity and shift invariance") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  std::uniform_real_distribution<double> beta_dist(0.01, 2.0);
  for (int i = 0; i < 2000; ++i) {
    double h_w = dist(rng), h_l = dist(rng), beta = beta_dist(rng), c = dist(rng);
    double identity = dpo_loss(h_w, h_l, beta) - dpo_loss(h_l, h_w, beta);
    CHECK(std::abs(identity - (-beta * (h_w - h_l))) < 1e-9);
    CHECK(std::abs(dpo_loss(h_w + c, h_l + c, beta) - dpo_loss(h_w, h_l, beta)) < 1e-12);
  }
}

TEST_CASE("dpo_loss has no overflow for large margins") {
  CHECK(std::isfinite(dpo_loss(1e4, -1e4, 1.0)));
  CHECK(std::isfinite(dpo_loss(-1e4, 1e4, 1.0)));
  CHECK(dpo_loss(1e4, -1e4, 1.0) >= 0.0);
  CHECK(dpo_loss(-1e4, 1e4, 1.0) == doctest::Approx(2e4).epsilon(1e-12));
}

TEST_CASE("dpo_plus_loss composes the auxiliary term") {
  CHECK(dpo_plus_loss(1.0, 2.0, 0.5, 0.0) == dpo_loss(1.0, 2.0, 0.5));
  CHECK(dpo_plus_loss(1.0, 1.0, 0.1, -std::log(2.0)) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(dpo_plus_loss(0, 0, 0.1, 0.5), Error);
  CHECK_THROWS_AS(dpo_plus_loss(0, 0, 0.1, std::nan("")), Error);
}

TEST_CASE("dpo_plus batch matches per-term oracle and permutes freely") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  std::uniform_real_distribution<double> lp_dist(-3.0, 0.0);
  std::vector<DpoPlusItem> batch;
  for (int i = 0; i < 64; ++i) batch.push_back({dist(rng), dist(rng), lp_dist(rng)});
  const double beta = 0.1;

  // oracle: recompute each term independently, reverse order, long double
  long double total = 0.0L;
  for (auto it = batch.rbegin(); it != batch.rend(); ++it) {
    long double z = -beta * (it->h_w - it->h_l);
    long double term = std::max<long double>(z, 0.0L) + std::log1p(std::exp(-std::abs(z)));
    total += term - it->label_logprob;
  }
  double oracle = static_cast<double>(total / batch.size());
  double got = dpo_plus_loss_batch(batch, beta);
  CHECK(std::abs(got - oracle) < 1e-12);

  std::shuffle(batch.begin(), batch.end(), rng);
  CHECK(std::abs(dpo_plus_loss_batch(batch, beta) - got) < 1e-12);
}

TEST_CASE("dpo_grad closed form and antisymmetry") {
  auto g = dpo_grad(1.0, 1.0, 0.1);
  CHECK(g.d_h_w == doctest::Approx(-0.05).epsilon(1e-12));
  CHECK(g.d_h_l == doctest::Approx(0.05).epsilon(1e-12));

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> dist(-20.0, 20.0);
  std::uniform_real_distribution<double> beta_dist(0.01, 2.0);
  for (int i = 0; i < 100; ++i) {
    auto grad = dpo_grad(dist(rng), dist(rng), beta_dist(rng));
    CHECK(grad.d_h_w + grad.d_h_l == 0.0);
  }
}

TEST_CASE("dpo_grad matches central finite differences") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  std::uniform_real_distribution<double> beta_dist(0.05, 1.0);
  const double step = 1e-5;
  for (int i = 0; i < 100; ++i) {
    double h_w = dist(rng), h_l = dist(rng), beta = beta_dist(rng);
    auto g = dpo_grad(h_w, h_l, beta);
    double fd_w = (dpo_loss(h_w + step, h_l, beta) - dpo_loss(h_w - step, h_l, beta)) / (2 * step);
    double fd_l = (dpo_loss(h_w, h_l + step, beta) - dpo_loss(h_w, h_l - step, beta)) / (2 * step);
    CHECK(std::abs(g.d_h_w - fd_w) / std::max(1e-12, std::abs(fd_w)) < 1e-6);
    CHECK(std::abs(g.d_h_l - fd_l) / std::max(1e-12, std::abs(fd_l)) < 1e-6);
  }
}

TEST_CASE("overestimation world puts 0.7 mass on gold+1 initially") {
  auto [policy, pairs] = make_overestimation_world(30, 7);
  for (const auto& pair : pairs) {
    auto lp = policy.log_softmax(pair.features);
    int over = pair.gold.value() + 1;
    CHECK(std::exp(lp[over]) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(std::exp(lp[pair.gold.value()]) == doctest::Approx(0.1).epsilon(1e-12));
  }
}

TEST_CASE("calibrate_toy_policy: zero steps is a no-op") {
  auto [policy, pairs] = make_overestimation_world(60, 7);
  auto initial_weights = policy.weights;
  auto report = calibrate_toy_policy(policy, pairs, 0.1, 0.1, 0, 7);
  CHECK(policy.weights == initial_weights);
  CHECK(report.before.over_rate == report.after.over_rate);
  CHECK(report.before.mean_bias == report.after.mean_bias);
}

TEST_CASE("calibrate_toy_policy reduces overestimation bias") {
  auto [policy, pairs] = make_overestimation_world(300, 7);
  auto report = calibrate_toy_policy(policy, pairs, 0.1, 0.1, 500, 7);
  CHECK(report.after.mean_bias < report.before.mean_bias);
  CHECK(report.after.over_rate < report.before.over_rate);
  CHECK(report.final_loss < report.initial_loss);
}

TEST_CASE("calibrate_toy_policy is deterministic under a fixed seed") {
  auto run = [] {
    auto [policy, pairs] = make_overestimation_world(90, 7);
    calibrate_toy_policy(policy, pairs, 0.1, 0.1, 50, 7);
    return policy.weights;
  };
  CHECK(run() == run());
}

TEST_CASE("calibrate_toy_policy detects divergence") {
  auto [policy, pairs] = make_overestimation_world(30, 7);
  double inf = std::numeric_limits<double>::infinity();
  try {
    calibrate_toy_policy(policy, pairs, 0.1, inf, 10, 7);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergenceDetected);
  }
}
