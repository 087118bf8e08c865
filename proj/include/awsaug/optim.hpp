#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "awsaug/error.hpp"
#include "awsaug/policy.hpp"

namespace awsaug {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double lr = 0.1;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState fresh(std::size_t n, double lr = 0.1, double beta1 = 0.5,
                         double beta2 = 0.999, double eps = 1e-8) {
    return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0,
                     lr, beta1, beta2, eps};
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam ascent step: theta += lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(AdamState& s, std::vector<double>& theta, const std::vector<double>& grad) {
  if (theta.size() != grad.size() || s.m.size() != grad.size() || s.v.size() != grad.size())
    throw Error("adam_step: length mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw Error("gradient overflow");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    theta[i] += s.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.eps);
  }
}

struct BaselineState {
  double value = 0.0;
  bool initialized = false;
  double decay = 0.9;

  friend bool operator==(const BaselineState&, const BaselineState&) = default;
};

// EMA of rewards; the first reward initializes the value.
inline BaselineState baseline_update(BaselineState b, double reward) {
  if (!std::isfinite(reward)) throw Error("reward must be finite");
  if (!b.initialized) {
    b.value = reward;
    b.initialized = true;
  } else {
    b.value = b.decay * b.value + (1.0 - b.decay) * reward;
  }
  return b;
}

// Advantage against the baseline read before its update; zero until a
// baseline exists.
inline double advantage(const BaselineState& b, double reward) {
  return b.initialized ? reward - b.value : 0.0;
}

struct PpoConfig {
  double clip = 0.2;
  int surrogate_epochs = 4;
};

struct PpoBatch {
  OpCounts counts;
  std::vector<double> old_log_probs;  // ln p_old(k) for every available k
  double reward = 0.0;
  double advantage = 0.0;
};

inline PpoBatch make_ppo_batch(const PolicyParams& old, OpCounts counts, double reward,
                               double adv) {
  PpoBatch b;
  b.old_log_probs.assign(old.size(), -std::numeric_limits<double>::infinity());
  const double log_s = std::log(old.normalizer());
  for (std::size_t k = 0; k < old.size(); ++k)
    if (old.available(k)) b.old_log_probs[k] = log_sigmoid(old.theta()[k]) - log_s;
  b.counts = std::move(counts);
  b.reward = reward;
  b.advantage = adv;
  return b;
}

// L(theta) = sum_k c_k min(r_k A, clip(r_k, 1-eps, 1+eps) A) / total,
// r_k = exp(ln p_theta(k) - ln p_old(k)).
inline double ppo_surrogate(const PolicyParams& p, const PpoBatch& batch, double clip) {
  if (batch.counts.total == 0) return 0.0;
  const double log_s = std::log(p.normalizer());
  const double a = batch.advantage;
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto c = batch.counts.counts[k];
    if (c == 0) continue;
    if (!p.available(k)) throw Error("operation removed from policy");
    const double r = std::exp(log_sigmoid(p.theta()[k]) - log_s - batch.old_log_probs[k]);
    const double rc = std::clamp(r, 1.0 - clip, 1.0 + clip);
    sum += static_cast<double>(c) * std::min(r * a, rc * a);
  }
  return sum / static_cast<double>(batch.counts.total);
}

// Analytic gradient of ppo_surrogate. Clipped terms contribute nothing; the
// remaining terms pass w_k = c_k r_k A / total through d ln p_k / d theta.
inline std::vector<double> ppo_surrogate_grad(const PolicyParams& p, const PpoBatch& batch,
                                              double clip) {
  std::vector<double> g(p.size(), 0.0);
  if (batch.counts.total == 0 || batch.advantage == 0.0) return g;
  const double log_s = std::log(p.normalizer());
  const double s_sum = p.normalizer();
  const double a = batch.advantage;
  const double total = static_cast<double>(batch.counts.total);
  std::vector<double> w(p.size(), 0.0);
  double w_sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto c = batch.counts.counts[k];
    if (c == 0) continue;
    if (!p.available(k)) throw Error("operation removed from policy");
    const double r = std::exp(log_sigmoid(p.theta()[k]) - log_s - batch.old_log_probs[k]);
    const bool active = a > 0.0 ? r <= 1.0 + clip : r >= 1.0 - clip;
    if (!active) continue;
    w[k] = static_cast<double>(c) * r * a / total;
    w_sum += w[k];
  }
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!p.available(j)) continue;
    const double s = sigmoid(p.theta()[j]);
    g[j] = w[j] * (1.0 - s) - w_sum * s * (1.0 - s) / s_sum;
  }
  return g;
}

// cfg.surrogate_epochs Adam ascent steps on the clipped surrogate. A batch
// with zero advantage carries no signal and leaves both theta and Adam alone.
inline PolicyParams ppo_update(const PolicyParams& p, const PpoBatch& batch, AdamState& adam,
                               const PpoConfig& cfg) {
  if (batch.advantage == 0.0 || batch.counts.total == 0) return p;
  auto theta = p.theta();
  PolicyParams cur = p;
  for (int e = 0; e < cfg.surrogate_epochs; ++e) {
    const auto g = ppo_surrogate_grad(cur, batch, cfg.clip);
    adam_step(adam, theta, g);
    cur = p.with_theta(theta);
  }
  return cur;
}

}  // namespace awsaug
