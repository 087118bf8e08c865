#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "awsaug/augment.hpp"
#include "awsaug/error.hpp"
#include "awsaug/rng.hpp"

namespace awsaug {

// Default logit for a fresh policy. Any constant gives the uniform
// distribution; a negative one keeps sigma(theta) in its exponential regime
// so a single operation can still gather most of the mass.
inline constexpr double kDefaultThetaInit = -8.0;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

// Policy over K operations: p_k = sigma(theta_k) * mask_k / sum_i sigma(theta_i) * mask_i.
class PolicyParams {
 public:
  PolicyParams() = default;

  PolicyParams(std::vector<double> theta, std::vector<std::uint8_t> mask)
      : theta_(std::move(theta)), mask_(std::move(mask)) {
    validate();
  }

  static PolicyParams uniform(std::size_t k = kNumOps, double init = kDefaultThetaInit) {
    return PolicyParams(std::vector<double>(k, init), std::vector<std::uint8_t>(k, 1));
  }

  static PolicyParams from_theta(std::vector<double> theta) {
    const auto k = theta.size();
    return PolicyParams(std::move(theta), std::vector<std::uint8_t>(k, 1));
  }

  std::size_t size() const { return theta_.size(); }
  const std::vector<double>& theta() const { return theta_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  bool available(std::size_t k) const { return mask_.at(k) != 0; }
  std::size_t available_count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
  }

  PolicyParams with_theta(std::vector<double> theta) const {
    return PolicyParams(std::move(theta), mask_);
  }
  PolicyParams with_mask(std::vector<std::uint8_t> mask) const {
    return PolicyParams(theta_, std::move(mask));
  }

  // Sum of sigma(theta) over available operations; always > 0.
  double normalizer() const {
    double s = 0.0;
    for (std::size_t i = 0; i < theta_.size(); ++i)
      if (mask_[i]) s += sigmoid(theta_[i]);
    return s;
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  void validate() const {
    if (theta_.empty()) throw Error("policy must have at least one operation");
    if (theta_.size() != mask_.size()) throw Error("policy theta/mask length mismatch");
    bool any = false;
    for (std::size_t i = 0; i < theta_.size(); ++i) {
      if (!std::isfinite(theta_[i])) throw Error("policy theta must be finite");
      if (mask_[i] > 1) throw Error("policy mask entries must be 0 or 1");
      any = any || mask_[i];
    }
    if (!any) throw Error("cannot remove all operations");
  }

  std::vector<double> theta_;
  std::vector<std::uint8_t> mask_;
};

struct OpCounts {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  OpCounts() = default;
  explicit OpCounts(std::size_t k) : counts(k, 0) {}

  void add(std::size_t k, std::uint64_t n = 1) {
    counts.at(k) += n;
    total += n;
  }
  void merge(const OpCounts& o) {
    if (counts.empty()) counts.assign(o.counts.size(), 0);
    if (o.counts.size() != counts.size()) throw Error("OpCounts size mismatch");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    total += o.total;
  }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

inline std::vector<double> probabilities(const PolicyParams& p) {
  const auto& th = p.theta();
  const double s = p.normalizer();
  std::vector<double> out(th.size(), 0.0);
  for (std::size_t i = 0; i < th.size(); ++i)
    if (p.available(i)) out[i] = sigmoid(th[i]) / s;
  return out;
}

inline double log_prob(const PolicyParams& p, std::size_t k) {
  if (k >= p.size()) throw Error("operation id out of range");
  if (!p.available(k)) throw Error("operation removed from policy");
  return log_sigmoid(p.theta()[k]) - std::log(p.normalizer());
}

// Gradient of sum_k counts_k * ln p_k with respect to theta:
//   d/dtheta_j = counts_j (1 - s_j) - total * s_j (1 - s_j) / S,  s = sigma(theta).
inline std::vector<double> grad_log_prob(const PolicyParams& p, const OpCounts& counts) {
  if (counts.counts.size() != p.size()) throw Error("OpCounts size mismatch");
  const auto& th = p.theta();
  const double s_sum = p.normalizer();
  const double total = static_cast<double>(counts.total);
  std::vector<double> g(p.size(), 0.0);
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!p.available(j)) continue;
    const double s = sigmoid(th[j]);
    g[j] = static_cast<double>(counts.counts[j]) * (1.0 - s) - total * s * (1.0 - s) / s_sum;
  }
  return g;
}

// Draws operation ids from a fixed policy via its cumulative distribution.
class OpSampler {
 public:
  explicit OpSampler(const PolicyParams& p) : cdf_(p.size()) {
    const auto probs = probabilities(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      cdf_[i] = acc;
    }
  }

  std::size_t size() const { return cdf_.size(); }

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
  }

 private:
  std::vector<double> cdf_;
};

inline std::size_t sample_op(const PolicyParams& p, Rng& rng) {
  return OpSampler(p).sample(rng);
}

// Marginal of the first element of each pair, for a K = n*n pair policy.
inline std::vector<double> first_element_marginal(const PolicyParams& p) {
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(p.size()))));
  if (n * n != p.size()) throw Error("policy size is not a square pair space");
  const auto probs = probabilities(p);
  std::vector<double> m(n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) m[a] += probs[a * n + b];
  return m;
}

// Available ids ordered by decreasing probability, ties by lower id.
inline std::vector<std::size_t> ranked_ops(const PolicyParams& p) {
  const auto probs = probabilities(p);
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p.available(i)) ids.push_back(i);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  return ids;
}

// Removes the k most probable available operations.
inline PolicyParams mask_top_k(const PolicyParams& p, std::size_t k) {
  if (k >= p.available_count()) throw Error("cannot remove all operations");
  auto mask = p.mask();
  const auto ranked = ranked_ops(p);
  for (std::size_t i = 0; i < k; ++i) mask[ranked[i]] = 0;
  return p.with_mask(std::move(mask));
}

inline double entropy(const PolicyParams& p) {
  double h = 0.0;
  for (double q : probabilities(p))
    if (q > 0.0) h -= q * std::log(q);
  return h;
}

// ---------------------------------------------------------------------------
// Text serialization:
//   awsaug-policy 1
//   K <k>
//   mask <k characters of 0/1>
//   theta
//   <k lines, %.17g>

inline constexpr int kPolicyFormatVersion = 1;

inline void write_policy(std::ostream& os, const PolicyParams& p) {
  os << "awsaug-policy " << kPolicyFormatVersion << '\n' << "K " << p.size() << '\n' << "mask ";
  for (auto m : p.mask()) os << (m ? '1' : '0');
  os << "\ntheta\n" << std::setprecision(17);
  for (double t : p.theta()) os << t << '\n';
}

inline PolicyParams read_policy(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "awsaug-policy") throw Error("not a policy file");
  if (version != kPolicyFormatVersion) throw Error("unsupported policy version");
  std::size_t k = 0;
  if (!(is >> tag >> k) || tag != "K" || k == 0) throw Error("corrupt policy file");
  std::string bits;
  if (!(is >> tag >> bits) || tag != "mask" || bits.size() != k) throw Error("corrupt policy file");
  std::vector<std::uint8_t> mask(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (bits[i] != '0' && bits[i] != '1') throw Error("corrupt policy file");
    mask[i] = bits[i] == '1';
  }
  if (!(is >> tag) || tag != "theta") throw Error("corrupt policy file");
  std::vector<double> theta(k);
  for (auto& t : theta) {
    std::string tok;
    if (!(is >> tok)) throw Error("corrupt policy file");
    try {
      std::size_t used = 0;
      t = std::stod(tok, &used);
      if (used != tok.size()) throw Error("corrupt policy file");
    } catch (const std::logic_error&) {
      throw Error("corrupt policy file");
    }
  }
  return PolicyParams(std::move(theta), std::move(mask));
}

inline void save_policy(const PolicyParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write policy file: " + path);
  write_policy(os, p);
  if (!os) throw Error("cannot write policy file: " + path);
}

inline PolicyParams load_policy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UserError("policy file not found: " + path);
  return read_policy(is);
}

}  // namespace awsaug
