#include <gtest/gtest.h>

#include "awsaug/search.hpp"
#include "stub_reward.hpp"

namespace awsaug {
namespace {

// Tiny but real setting: 8x8 images, a one-conv network, one epoch per stage.
SearchConfig tiny_config() {
  SearchConfig c;
  c.arch = "input 3x8x8; conv 4 3; relu; maxpool 2; dense 10";
  c.n_early = 1;
  c.n_late = 1;
  c.t_max = 3;
  c.train.batch_size = 8;
  c.train.lr_max = 0.05;
  c.preprocess.pad = 1;
  c.preprocess.cutout = 0;
  c.seed = 3;
  return c;
}

SearchData tiny_data() {
  SearchData d{synth_dataset(40, 10, 8, 1), synth_dataset(30, 10, 8, 2)};
  d.val.tag = SplitTag::Val;
  return d;
}

TEST(Shared, RandomInitSkipsTraining) {
  auto cfg = tiny_config();
  cfg.n_early = 0;
  const auto data = tiny_data();
  const auto m = train_shared(cfg, data.train, SharedMode::RandomInit);
  EXPECT_EQ(m, init_model(Arch::parse(cfg.arch), stream_seed(cfg.seed, stream::kInit)));
  try {
    train_shared(cfg, data.train, SharedMode::Uniform);
    FAIL();
  } catch (const UserError& e) {
    EXPECT_STREQ(e.what(), "n_early must be at least 1 for shared-weight proxies");
  }
}

TEST(Shared, DeterministicPerSeed) {
  const auto cfg = tiny_config();
  const auto data = tiny_data();
  const auto a = train_shared(cfg, data.train, SharedMode::Uniform);
  EXPECT_EQ(a, train_shared(cfg, data.train, SharedMode::Uniform));
  EXPECT_NE(a, train_shared(cfg, data.train, SharedMode::None));
}

TEST(EvaluatePolicy, NoLateEpochsMeansPlainEvaluation) {
  auto cfg = tiny_config();
  cfg.n_late = 0;
  const auto data = tiny_data();
  const auto omega = train_shared(cfg, data.train, SharedMode::Uniform);
  Rng rng(1);
  const auto r = evaluate_policy(omega, PolicyParams::uniform(), Proxy::AF, cfg, data, rng);
  EXPECT_EQ(r.acc, evaluate(omega, data.val));
  EXPECT_EQ(r.counts.total, 0u);
}

TEST(EvaluatePolicy, AugmentedValidationMatchesDirectEvaluation) {
  const auto cfg = tiny_config();
  const auto data = tiny_data();
  const auto omega = train_shared(cfg, data.train, SharedMode::Uniform);
  Rng a(5), b(5);
  const auto r = evaluate_policy(omega, PolicyParams::uniform(), Proxy::AV, cfg, data, a);
  const auto direct = evaluate_augmented(omega, data.val, PolicyParams::uniform(), cfg.geometry, b);
  EXPECT_EQ(r.acc, direct.acc);
  EXPECT_EQ(r.counts.counts, direct.counts.counts);
  EXPECT_EQ(r.counts.total, data.val.size());
}

TEST(EvaluatePolicy, LeavesSharedWeightsUntouched) {
  const auto cfg = tiny_config();
  const auto data = tiny_data();
  const auto omega = train_shared(cfg, data.train, SharedMode::Uniform);
  const auto copy = omega;
  Rng rng(2);
  const auto r = evaluate_policy(omega, PolicyParams::uniform(), Proxy::AF, cfg, data, rng);
  EXPECT_EQ(omega, copy);
  EXPECT_EQ(r.counts.total, data.train.size());
}

TEST(EvaluatePolicy, CommonRandomNumbersFixTheDataOrder) {
  // With a single available operation the reward no longer depends on the
  // iteration stream.
  const auto cfg = tiny_config();
  const auto data = tiny_data();
  const auto omega = train_shared(cfg, data.train, SharedMode::Uniform);
  std::vector<std::uint8_t> mask(kNumOps, 0);
  mask[static_cast<std::size_t>(op_id(35, 35))] = 1;  // Invert twice: identity
  const PolicyParams p(std::vector<double>(kNumOps, 0.0), mask);
  Rng a(10), b(20);
  EXPECT_EQ(evaluate_policy(omega, p, Proxy::AF, cfg, data, a).acc,
            evaluate_policy(omega, p, Proxy::AF, cfg, data, b).acc);
}

TEST(Search, SingleIterationLeavesPolicyUnchanged) {
  auto cfg = tiny_config();
  cfg.t_max = 1;
  const auto s = run_search(cfg, testing::rigged_evaluator(7), initial_search_state(cfg));
  ASSERT_EQ(s.records.size(), 1u);
  EXPECT_FALSE(s.records[0].baseline_before.has_value());
  EXPECT_EQ(s.records[0].advantage, 0.0);
  EXPECT_EQ(s.policy, initial_search_state(cfg).policy);
  EXPECT_TRUE(s.baseline.initialized);
}

TEST(Search, DeterministicForFixedSeed) {
  auto cfg = tiny_config();
  cfg.t_max = 40;
  const auto a = run_search(cfg, testing::rigged_evaluator(7, 256), initial_search_state(cfg));
  const auto b = run_search(cfg, testing::rigged_evaluator(7, 256), initial_search_state(cfg));
  EXPECT_EQ(a.policy, b.policy);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].acc, b.records[i].acc);
}

TEST(Search, ResumingMatchesUninterruptedRun) {
  auto cfg = tiny_config();
  cfg.t_max = 30;
  const auto eval = testing::rigged_evaluator(11, 256);
  const auto full = run_search(cfg, eval, initial_search_state(cfg));
  cfg.t_max = 12;
  auto half = run_search(cfg, eval, initial_search_state(cfg));
  cfg.t_max = 30;
  half = run_search(cfg, eval, std::move(half));
  EXPECT_EQ(half.policy, full.policy);
  EXPECT_EQ(half.adam.m, full.adam.m);
  EXPECT_EQ(half.baseline.value, full.baseline.value);
}

TEST(Search, BaselineReplaysFromRecordedRewards) {
  auto cfg = tiny_config();
  cfg.t_max = 25;
  const auto s = run_search(cfg, testing::rigged_evaluator(3, 512), initial_search_state(cfg));
  BaselineState b;
  for (const auto& r : s.records) {
    EXPECT_EQ(r.baseline_before.has_value(), b.initialized);
    if (b.initialized) EXPECT_EQ(*r.baseline_before, b.value);
    EXPECT_EQ(r.advantage, advantage(b, r.acc));
    b = baseline_update(b, r.acc);
  }
  EXPECT_EQ(b.value, s.baseline.value);
}

TEST(Search, RiggedRewardConcentratesOnTarget) {
  auto cfg = tiny_config();
  cfg.t_max = 300;
  const std::size_t target = 7;
  const auto s = run_search(cfg, testing::rigged_evaluator(target), initial_search_state(cfg));
  EXPECT_GT(probabilities(s.policy)[target], 0.9);
  EXPECT_EQ(top_ops(s.policy, 1).front(), target);
}

TEST(Search, RejectsRewardOutsideUnitInterval) {
  auto cfg = tiny_config();
  const PolicyEvaluator bad = [](const PolicyParams& p, int, Rng&) { return EvalResult{1.5, OpCounts(p.size())}; };
  EXPECT_THROW(run_search(cfg, bad, initial_search_state(cfg)), Error);
}

TEST(Pearson, Examples) {
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(pearson({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-15);
  try {
    pearson({1, 1, 1}, {1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "zero variance");
  }
  EXPECT_FALSE(try_pearson({0.5, 0.5}, {0.1, 0.9}).has_value());
  EXPECT_THROW(try_pearson({1.0}, {1.0}), Error);
}

TEST(Proxies, NeedAtLeastFivePolicies) {
  EXPECT_THROW(compare_proxies(tiny_config(), tiny_data(), 4), UserError);
}

TEST(Proxies, ResultsDoNotDependOnWorkerCount) {
  const auto cfg = tiny_config();
  const auto data = tiny_data();
  const auto a = compare_proxies(cfg, data, 5, 1), b = compare_proxies(cfg, data, 5, 3);
  ASSERT_EQ(a.rows.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.rows[i].full, b.rows[i].full);
    for (int v = 0; v < 4; ++v) EXPECT_EQ(a.rows[i].proxy[v], b.rows[i].proxy[v]);
  }
  for (int v = 0; v < 4; ++v)
    if (a.r[v]) EXPECT_LE(std::abs(*a.r[v]), 1.0);
}

TEST(RandomFixedPolicy, MasksToPairsOfAllowedElements) {
  Rng rng(4);
  for (int n = 0; n < 20; ++n) {
    const auto p = random_fixed_policy(rng);
    const auto avail = p.available_count();
    bool square = false;
    for (std::size_t e = 2; e <= 6; ++e) square = square || avail == e * e;
    EXPECT_TRUE(square) << avail;
  }
}

TEST(Schedule, AugmentedEpochs) {
  EXPECT_EQ(augmented_epochs(10, 3, Placement::Start), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(augmented_epochs(10, 3, Placement::End), (std::vector<int>{7, 8, 9}));
  EXPECT_TRUE(augmented_epochs(10, 0, Placement::End).empty());
  EXPECT_THROW(augmented_epochs(10, 11, Placement::Start), UserError);
}

TEST(Schedule, DegenerateGridPointsCoincide) {
  auto cfg = tiny_config();
  cfg.n_early = 2;
  const auto data = tiny_data();
  const ScheduleConfig sc{{0, 3}, 2, false};
  const auto rows = schedule_experiment(cfg, data, PolicyParams::uniform(), sc, 2);
  ASSERT_EQ(rows.size(), 4u);
  // n_aug = 0: both placements are the unaugmented run.
  EXPECT_EQ(rows[0].accs, rows[1].accs);
  EXPECT_EQ(rows[0].config_hash, rows[1].config_hash);
  // n_aug = total epochs: identical configuration.
  EXPECT_EQ(rows[2].config_hash, rows[3].config_hash);
  EXPECT_EQ(rows[2].accs, rows[3].accs);
  EXPECT_EQ(schedule_experiment(cfg, data, PolicyParams::uniform(), sc, 1)[2].accs, rows[2].accs);
}

TEST(Ablate, ZeroRemovedEqualsPlainTraining) {
  const auto cfg = tiny_config();
  const auto data = tiny_data();
  const auto uni = PolicyParams::uniform();
  const auto rows = ablate(cfg, data, uni, {0, 2}, 2, 2);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].accs[1], train_full(cfg, data, &uni, stream_seed(cfg.seed, stream::kAblate, 1)));
  EXPECT_EQ(rows[1].removed_ids, top_ops(uni, 2));
}

}  // namespace
}  // namespace awsaug
