#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <numeric>
#include <sstream>

#include "awsaug/oracle.hpp"
#include "awsaug/policy.hpp"

namespace awsaug {
namespace {

PolicyParams random_policy(Rng& rng, std::size_t k, double scale = 2.0) {
  std::vector<double> th(k);
  for (auto& t : th) t = scale * rng.normal();
  return PolicyParams::from_theta(th);
}

TEST(Probabilities, UniformForEqualTheta) {
  for (double init : {0.0, kDefaultThetaInit}) {
    const auto p = probabilities(PolicyParams::uniform(kNumOps, init));
    for (double v : p) EXPECT_NEAR(v, 1.0 / 1296.0, 1e-15);
  }
}

TEST(Probabilities, TwoOpExample) {
  const auto p = probabilities(PolicyParams::from_theta({0.0, std::log(3.0)}));
  EXPECT_NEAR(p[0], 0.4, 1e-15);
  EXPECT_NEAR(p[1], 0.6, 1e-15);
}

TEST(Probabilities, SingleAvailableEntryGetsAllMass) {
  std::vector<std::uint8_t> mask(5, 0);
  mask[3] = 1;
  const PolicyParams p({-3, 9, 0.5, -40, 2}, mask);
  EXPECT_EQ(probabilities(p)[3], 1.0);
  EXPECT_EQ(log_prob(p, 3), 0.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_op(p, rng), 3u);
}

TEST(Probabilities, SumToOneForRandomTheta) {
  Rng rng(5);
  for (int n = 0; n < 1000; ++n) {
    const auto p = probabilities(random_policy(rng, kNumOps, 5.0));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Probabilities, PermutationEquivariant) {
  Rng rng(6);
  std::vector<double> th(9);
  std::vector<std::uint8_t> mask(9, 1);
  for (auto& t : th) t = rng.normal();
  mask[4] = 0;
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<double> th2(9);
  std::vector<std::uint8_t> mask2(9);
  for (std::size_t i = 0; i < 9; ++i) th2[i] = th[perm[i]], mask2[i] = mask[perm[i]];
  const auto p = probabilities(PolicyParams(th, mask)), q = probabilities(PolicyParams(th2, mask2));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(q[i], p[perm[i]]);
}

TEST(Probabilities, ConstructionRejectsBadInput) {
  EXPECT_THROW(PolicyParams({1.0}, {0}), Error);
  EXPECT_THROW(PolicyParams({1.0, 2.0}, {1}), Error);
  EXPECT_THROW(PolicyParams({NAN}, {1}), Error);
  EXPECT_THROW(PolicyParams({}, {}), Error);
}

TEST(LogProb, Examples) {
  EXPECT_NEAR(log_prob(PolicyParams::uniform(), 17), std::log(1.0 / 1296.0), 1e-12);
  EXPECT_NEAR(log_prob(PolicyParams::uniform(), 17), -7.1670, 5e-5);
  EXPECT_NEAR(log_prob(PolicyParams::from_theta({0.0, std::log(3.0)}), 0), std::log(0.4), 1e-15);
  std::vector<std::uint8_t> mask{1, 0};
  try {
    log_prob(PolicyParams({0.0, 0.0}, mask), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "operation removed from policy");
  }
}

TEST(GradLogProb, TwoOpHandExample) {
  OpCounts c(2);
  c.add(0);
  const auto g = grad_log_prob(PolicyParams::from_theta({0.0, 0.0}), c);
  EXPECT_NEAR(g[0], 0.25, 1e-15);
  EXPECT_NEAR(g[1], -0.25, 1e-15);
}

TEST(GradLogProb, ZeroCountsGiveZero) {
  Rng rng(1);
  for (double v : grad_log_prob(random_policy(rng, 20), OpCounts(20))) EXPECT_EQ(v, 0.0);
}

TEST(GradLogProb, MatchesFiniteDifferences) {
  Rng rng(77);
  for (int n = 0; n < 100; ++n) {
    const std::size_t k = 2 + rng.below(12);
    const auto p = random_policy(rng, k);
    OpCounts c(k);
    for (int s = 0; s < 20; ++s) c.add(rng.below(k), 1 + rng.below(3));
    auto f = [&](const std::vector<double>& th) {
      const auto q = PolicyParams::from_theta(th);
      double v = 0.0;
      for (std::size_t j = 0; j < k; ++j) v += static_cast<double>(c.counts[j]) * log_prob(q, j);
      return v;
    };
    const auto fd = oracle::finite_diff(f, p.theta(), 1e-6);
    const auto g = grad_log_prob(p, c);
    double err = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < k; ++j) err = std::max(err, std::abs(g[j] - fd[j])), norm = std::max(norm, std::abs(g[j]));
    EXPECT_LE(err, 1e-5 * std::max(1.0, norm));
  }
}

TEST(Sampling, ChiSquareUniform) {
  Rng rng(20240601);
  const auto p = PolicyParams::uniform();
  const OpSampler sampler(p);
  std::vector<double> hist(kNumOps, 0.0);
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) ++hist[sampler.sample(rng)];
  const double e = static_cast<double>(n) / kNumOps, sigma = std::sqrt(e * (1.0 - 1.0 / kNumOps));
  double chi2 = 0.0;
  for (double h : hist) {
    chi2 += (h - e) * (h - e) / e;
    EXPECT_LT(std::abs(h - e), 4.0 * sigma);
  }
  boost::math::chi_squared dist(kNumOps - 1);
  EXPECT_LT(chi2, boost::math::quantile(dist, 0.999));
}

TEST(Sampling, FollowsNonUniformPolicy) {
  Rng rng(3);
  const auto p = PolicyParams::from_theta({0.0, std::log(3.0)});
  int ones = 0;
  for (int i = 0; i < 100000; ++i) ones += sample_op(p, rng) == 1;
  EXPECT_NEAR(ones / 100000.0, 0.6, 0.006);
}

TEST(Sampling, DeterministicSequence) {
  Rng a(42), b(42);
  Rng gen(1);
  const auto p = random_policy(gen, kNumOps);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_op(p, a), sample_op(p, b));
}

TEST(Marginal, UniformAndPointMass) {
  for (double m : first_element_marginal(PolicyParams::uniform())) EXPECT_NEAR(m, 1.0 / 36, 1e-15);
  std::vector<std::uint8_t> mask(kNumOps, 0);
  mask[0] = 1;
  const auto m = first_element_marginal(PolicyParams(std::vector<double>(kNumOps, 0.0), mask));
  EXPECT_EQ(m[0], 1.0);
  for (int e = 1; e < 36; ++e) EXPECT_EQ(m[static_cast<std::size_t>(e)], 0.0);
}

TEST(Marginal, MatchesPairSummation) {
  Rng rng(8);
  for (int n = 0; n < 20; ++n) {
    const auto p = random_policy(rng, kNumOps, 3.0);
    const auto probs = probabilities(p);
    const auto m = first_element_marginal(p);
    double total = 0.0;
    for (int a = 0; a < 36; ++a) {
      double s = 0.0;
      for (int id = 0; id < kNumOps; ++id)
        if (op_from_id(id).first.index == a) s += probs[static_cast<std::size_t>(id)];
      EXPECT_NEAR(m[static_cast<std::size_t>(a)], s, 1e-15);
      total += m[static_cast<std::size_t>(a)];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(MaskTopK, Examples) {
  const auto u = PolicyParams::uniform();
  EXPECT_EQ(mask_top_k(u, 0), u);
  const auto one = mask_top_k(u, 1);
  EXPECT_FALSE(one.available(0));
  EXPECT_EQ(one.available_count(), 1295u);
  // p = (0.5, 0.3, 0.2): sigma values proportional to p.
  const PolicyParams p = PolicyParams::from_theta({std::log(0.5 / 0.5), std::log(0.3 / 0.7), std::log(0.2 / 0.8)});
  const auto two = mask_top_k(p, 2);
  EXPECT_EQ(two.available_count(), 1u);
  EXPECT_TRUE(two.available(2));
  EXPECT_EQ(probabilities(two)[2], 1.0);
  try {
    mask_top_k(p, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "cannot remove all operations");
  }
}

TEST(MaskTopK, SurvivorsKeepTheirOrder) {
  Rng rng(9);
  for (int n = 0; n < 20; ++n) {
    const auto p = random_policy(rng, 50);
    const auto k = rng.below(49);
    const auto before = ranked_ops(p);
    const auto after = ranked_ops(mask_top_k(p, k));
    EXPECT_TRUE(std::equal(after.begin(), after.end(), before.begin() + static_cast<std::ptrdiff_t>(k)));
  }
}

TEST(Serialization, RoundTripsExactly) {
  Rng rng(10);
  auto p = random_policy(rng, kNumOps, 7.0);
  p = mask_top_k(p, 5);
  std::stringstream ss;
  write_policy(ss, p);
  EXPECT_EQ(read_policy(ss), p);
}

TEST(Serialization, RejectsCorruptFiles) {
  std::stringstream bad1("awsaug-policy 2\nK 1\nmask 1\ntheta\n0\n");
  EXPECT_THROW(read_policy(bad1), Error);
  std::stringstream bad2("awsaug-policy 1\nK 2\nmask 11\ntheta\n0\nx\n");
  EXPECT_THROW(read_policy(bad2), Error);
  std::stringstream bad3("awsaug-policy 1\nK 2\nmask 1\ntheta\n0\n0\n");
  EXPECT_THROW(read_policy(bad3), Error);
  EXPECT_THROW(load_policy("/nonexistent/policy.txt"), UserError);
}

TEST(Entropy, UniformIsLogK) {
  EXPECT_NEAR(entropy(PolicyParams::uniform()), std::log(1296.0), 1e-12);
}

}  // namespace
}  // namespace awsaug
