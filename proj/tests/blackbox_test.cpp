#include "advl/blackbox.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "advl/io.hpp"
#include "advl/train.hpp"
#include "test_util.hpp"

using namespace advl;

namespace {

struct BlobsFixture {
  LabeledDataset ds;
  Network net;

  BlobsFixture() : ds(synth_blobs(240, 8, 4, 0.06, 99)), net(make_tiny_net({8}, 4, 1.0, 12)) {
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 16;
    cfg.lr = 0.05;
    cfg.seed = 3;
    train(net, ds, cfg);
  }
};

const BlobsFixture& blobs() {
  static BlobsFixture f;
  return f;
}

// Oracle over a fixed smooth function of the input; no logits anywhere.
QueryOracle quadratic_oracle() {
  auto q = [](const Tensor& x) {
    // two "classes": score from a paraboloid, complementary mass
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x.data[i] - 0.25) * (x.data[i] - 0.25);
    const double p0 = 1.0 / (1.0 + std::exp(-4.0 * (s - 0.5)));
    return std::vector<double>{p0, 1.0 - p0};
  };
  return QueryOracle(2, q);
}

}  // namespace

TEST(ProbabilityMarginLoss, KnownValueAtDegenerateProbabilities) {
  // p = (1, 0), target 1, floor 1e-30: loss = log(1 + 1e-30) - log(1e-30)
  //                                         = 30 ln 10 = 69.07755278982137
  const double loss = probability_margin_loss({1.0, 0.0}, 1, 0.0, 1e-30);
  EXPECT_NEAR(loss, 69.07755278982137, 1e-9);
  std::vector<double> d;
  probability_margin_loss({1.0, 0.0}, 1, 0.0, 1e-30, &d);
  EXPECT_NEAR(d[0], 1.0, 1e-12);
  EXPECT_NEAR(d[1], -1e30, 1e18);
}

TEST(ProbabilityMarginLoss, MatchesLogitMarginWhenFloorIsNegligible) {
  // log f_i - log f_t telescopes the shared normalizer away, so with a
  // negligible floor the probability-space loss equals the logit-space one.
  Rng rng(61);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> z(10);
    for (double& v : z) v = rng.uniform(-12.0, 12.0);
    const std::size_t t = static_cast<std::size_t>(rng.below(10));
    const auto p = softmax_t(z, 1.0);
    bool all_above_floor = true;
    for (double v : p) all_above_floor &= v >= 1e-12;
    if (!all_above_floor) continue;
    const double lhs = probability_margin_loss(p, t, 0.0, 1e-30);
    const double rhs = margin_loss(z, t, 0.0);
    ASSERT_NEAR(lhs, rhs, 1e-9);
  }
}

TEST(ProbabilityMarginLoss, FloorKeepsLossFiniteAndBounded) {
  // With the default floor the loss cannot exceed -log(delta_f) + log(1+df).
  const double loss = probability_margin_loss({1.0, 0.0}, 1, 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_LE(loss, -std::log(1e-12) + 1e-9);
}

TEST(ProbabilityMarginLoss, GradientMatchesFiniteDifference) {
  Rng rng(67);
  std::vector<double> p = {0.5, 0.2, 0.2, 0.1};
  std::vector<double> d;
  probability_margin_loss(p, 2, 0.0, 1e-12, &d);
  auto objective = [&](const std::vector<double>& pp) {
    return probability_margin_loss(pp, 2, 0.0, 1e-12);
  };
  EXPECT_LT(testutil::fd_worst_rel(objective, p, d, 1e-7), 1e-5);
}

TEST(ProbabilityMarginLoss, RejectsBadInputs) {
  EXPECT_THROW(probability_margin_loss({0.5, 0.5}, 4, 0.0, 1e-12), error);
  EXPECT_THROW(probability_margin_loss({0.5, 0.5}, 0, 0.0, 0.0), error);
  EXPECT_THROW(probability_margin_loss({1.0}, 0, 0.0, 1e-12), error);
}

TEST(QueryOracle, CountsEveryTouchMonotonically) {
  QueryOracle oracle = quadratic_oracle();
  EXPECT_EQ(oracle.query_count(), 0u);
  Tensor x({3}, {0.1, 0.2, 0.3});
  oracle.query(x);
  EXPECT_EQ(oracle.query_count(), 1u);
  oracle.query(x);
  oracle.query(x);
  EXPECT_EQ(oracle.query_count(), 3u);
  EXPECT_FALSE(oracle.has_vjp());
  EXPECT_THROW(oracle.vjp(x, {1.0, 0.0}), error);
}

TEST(QueryOracle, WrapReportsDeployedProbabilitiesAndVjp) {
  const auto& fx = blobs();
  QueryOracle oracle = QueryOracle::wrap(fx.net);
  EXPECT_TRUE(oracle.has_vjp());
  const Tensor& x = fx.ds.images[0];
  const auto p = oracle.query(x);
  const auto direct = predict_probs(fx.net, x);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], direct[i], 1e-15);
  EXPECT_EQ(oracle.query_count(), 1u);

  // vjp must match input_gradient of the same probability functional
  std::vector<double> r = {0.3, -0.2, 0.5, -0.7};
  Tensor via_vjp = oracle.vjp(x, r);
  EXPECT_EQ(oracle.query_count(), 2u);
  auto [loss, via_logits] = input_gradient(fx.net, x, [&](const std::vector<double>& z, std::vector<double>& dz) {
    const auto probs = softmax_t(z, fx.net.temperature);
    dz = softmax_backward(probs, r, fx.net.temperature);
    double s = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) s += probs[i] * r[i];
    return s;
  });
  (void)loss;
  ASSERT_EQ(via_vjp.size(), via_logits.size());
  for (std::size_t i = 0; i < via_vjp.size(); ++i) EXPECT_NEAR(via_vjp.data[i], via_logits.data[i], 1e-12);
}

TEST(FdGradient, MatchesAnalyticOnSmoothOracle) {
  QueryOracle oracle = quadratic_oracle();
  RegionAttackConfig cfg;
  cfg.fd_step = 1e-5;
  Tensor x({3}, {0.4, 0.6, 0.5});
  std::vector<std::size_t> coords = {0, 1, 2};
  // target class 0 is losing here (p0 < 1/2), so the hinge is active
  const Tensor g = detail::fd_gradient(oracle, x, 0, cfg, coords);
  // hand derivative of the oracle's loss at these coordinates
  double s = 0.0;
  for (double v : x.data) s += (v - 0.25) * (v - 0.25);
  const double p0 = 1.0 / (1.0 + std::exp(-4.0 * (s - 0.5)));
  // loss = log(1 - p0 + df) - log(p0 + df);
  // d loss / d s = -4 p0 (1-p0) * (1/(1-p0+df) + 1/(p0+df))
  const double dlds = -4.0 * p0 * (1.0 - p0) * (1.0 / (1.0 - p0 + cfg.delta_f) + 1.0 / (p0 + cfg.delta_f));
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect = dlds * 2.0 * (x.data[i] - 0.25);
    EXPECT_NEAR(g.data[i], expect, 1e-5 * std::max(1.0, std::abs(expect)));
  }
  EXPECT_EQ(oracle.query_count(), 6u);  // two probes per coordinate
}

TEST(RegionAttack, QueryLedgerIsExactWithoutEarlyStop) {
  // Constant oracle that never grants success: total queries must equal
  // max_iters * (1 + 2k) + 1 in finite-difference mode.
  auto q = [](const Tensor&) { return std::vector<double>{0.9, 0.05, 0.05}; };
  QueryOracle oracle(3, q);
  Tensor x({6}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  RegionAttackConfig cfg;
  cfg.gradient_mode = GradientMode::finite_difference;
  cfg.fd_coords = 2;
  cfg.max_iters = 7;
  cfg.abort_early = false;
  cfg.seed = 5;
  AttackResult r = region_attack(oracle, x, 1, cfg);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.iterations_used, 7u);
  EXPECT_EQ(oracle.query_count(), 7u * (1 + 2 * 2) + 1);
  EXPECT_EQ(r.queries, oracle.query_count());
}

TEST(RegionAttack, QueryLedgerIsExactWithEarlyStopChecks) {
  auto q = [](const Tensor&) { return std::vector<double>{0.9, 0.05, 0.05}; };
  QueryOracle oracle(3, q);
  Tensor x({4}, {0.5, 0.5, 0.5, 0.5});
  RegionAttackConfig cfg;
  cfg.gradient_mode = GradientMode::finite_difference;
  cfg.fd_coords = 0;  // all 4 coordinates
  cfg.max_iters = 5;
  cfg.abort_early = true;
  AttackResult r = region_attack(oracle, x, 2, cfg);
  EXPECT_FALSE(r.success);
  // per iteration: 1 probe + 2*4 fd + 1 stop check
  EXPECT_EQ(oracle.query_count(), 5u * (2 + 8));
  EXPECT_EQ(r.queries, oracle.query_count());
}

TEST(RegionAttack, AnalyticModeNeedsVjpHook) {
  QueryOracle oracle = quadratic_oracle();
  Tensor x({3}, {0.5, 0.5, 0.5});
  RegionAttackConfig cfg;
  cfg.gradient_mode = GradientMode::analytic;
  EXPECT_THROW(region_attack(oracle, x, 1, cfg), error);
}

TEST(RegionAttack, SucceedsOnBlobsNetAnalytically) {
  const auto& fx = blobs();
  RegionAttackConfig cfg;
  cfg.epsilon_8bit = 80.0;
  cfg.sigma = 0.0;
  cfg.max_iters = 300;
  cfg.seed = 7;
  std::size_t wins = 0;
  for (std::size_t img = 0; img < 5; ++img) {
    QueryOracle oracle = QueryOracle::wrap(fx.net);
    const std::size_t target = (fx.ds.labels[img] + 1) % 4;
    AttackResult r = region_attack(oracle, fx.ds.images[img], target, cfg);
    EXPECT_LE(r.max_pert_8bit, cfg.epsilon_8bit + 1e-6);
    for (double v : r.adversarial.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    if (r.success) {
      ++wins;
      EXPECT_EQ(predict(fx.net, r.adversarial), target);
    }
  }
  EXPECT_GE(wins, 4u);
}

TEST(RegionAttack, NoisyProbesStillConvergeOnEasyModel) {
  const auto& fx = blobs();
  RegionAttackConfig cfg;
  cfg.epsilon_8bit = 80.0;
  cfg.sigma = 0.1;
  cfg.max_iters = 300;
  cfg.seed = 11;
  QueryOracle oracle = QueryOracle::wrap(fx.net);
  const std::size_t target = (fx.ds.labels[0] + 1) % 4;
  AttackResult r = region_attack(oracle, fx.ds.images[0], target, cfg);
  EXPECT_LE(r.max_pert_8bit, cfg.epsilon_8bit + 1e-6);
  if (r.success) EXPECT_EQ(predict(fx.net, r.adversarial), target);
}

TEST(RegionAttack, SeedControlsTheProbePath) {
  const auto& fx = blobs();
  RegionAttackConfig cfg;
  cfg.epsilon_8bit = 60.0;
  cfg.sigma = 0.4;
  cfg.max_iters = 40;
  cfg.abort_early = false;
  const std::size_t target = (fx.ds.labels[1] + 1) % 4;

  QueryOracle o1 = QueryOracle::wrap(fx.net);
  QueryOracle o2 = QueryOracle::wrap(fx.net);
  QueryOracle o3 = QueryOracle::wrap(fx.net);
  cfg.seed = 21;
  AttackResult a = region_attack(o1, fx.ds.images[1], target, cfg);
  AttackResult b = region_attack(o2, fx.ds.images[1], target, cfg);
  cfg.seed = 22;
  AttackResult c = region_attack(o3, fx.ds.images[1], target, cfg);
  EXPECT_EQ(a.adversarial.data, b.adversarial.data);
  EXPECT_NE(a.adversarial.data, c.adversarial.data);
}

TEST(RegionAttack, ValidatesConfig) {
  QueryOracle oracle = quadratic_oracle();
  Tensor x({3}, {0.5, 0.5, 0.5});
  RegionAttackConfig cfg;
  cfg.gradient_mode = GradientMode::finite_difference;
  cfg.sigma = -0.1;
  EXPECT_THROW(region_attack(oracle, x, 1, cfg), error);
  cfg = RegionAttackConfig{};
  cfg.gradient_mode = GradientMode::finite_difference;
  cfg.delta_f = 0.0;
  EXPECT_THROW(region_attack(oracle, x, 1, cfg), error);
  cfg = RegionAttackConfig{};
  cfg.gradient_mode = GradientMode::finite_difference;
  EXPECT_THROW(region_attack(oracle, x, 7, cfg), error);
}

TEST(Transfer, RateCountsVictimTargetHits) {
  const auto& fx = blobs();
  // craft a couple of adversarials on the model itself; self-transfer rate
  // must then equal the plain success rate
  RegionAttackConfig cfg;
  cfg.epsilon_8bit = 80.0;
  cfg.sigma = 0.0;
  cfg.max_iters = 300;
  std::vector<AttackResult> crafted;
  std::vector<std::size_t> targets;
  for (std::size_t img = 0; img < 4; ++img) {
    QueryOracle oracle = QueryOracle::wrap(fx.net);
    const std::size_t t = (fx.ds.labels[img] + 1) % 4;
    cfg.seed = 100 + img;
    crafted.push_back(region_attack(oracle, fx.ds.images[img], t, cfg));
    targets.push_back(t);
  }
  double wins = 0;
  for (const auto& r : crafted) wins += r.success ? 1.0 : 0.0;
  EXPECT_NEAR(transfer_success_rate(fx.net, crafted, targets), wins / 4.0, 1e-12);
}

TEST(Robustness, NoisySuccessRateIsDeterministicAndBounded) {
  const auto& fx = blobs();
  std::vector<AttackResult> crafted(3);
  std::vector<std::size_t> targets = {0, 1, 2};
  for (std::size_t i = 0; i < 3; ++i) crafted[i].adversarial = fx.ds.images[i];
  const double r1 = noisy_success_rate(fx.net, crafted, targets, 0.05, 5, 9);
  const double r2 = noisy_success_rate(fx.net, crafted, targets, 0.05, 5, 9);
  EXPECT_EQ(r1, r2);
  EXPECT_GE(r1, 0.0);
  EXPECT_LE(r1, 1.0);
  EXPECT_THROW(noisy_success_rate(fx.net, crafted, targets, 0.05, 0, 9), error);
}
