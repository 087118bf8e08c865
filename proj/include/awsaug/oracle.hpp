#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "awsaug/error.hpp"

namespace awsaug::oracle {

// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
  if (!(h > 0.0)) throw Error("finite_diff: step must be positive");
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    x[j] = xj + h;
    const double fp = f(x);
    x[j] = xj - h;
    const double fm = f(x);
    x[j] = xj;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw Error("finite_diff: non-finite evaluation");
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Trajectories of n_steps operations out of k_ops; the first k_early steps
// are drawn from the shared policy.
struct TrajectorySpace {
  std::size_t k_ops = 3;
  std::size_t n_steps = 3;
  std::size_t k_early = 1;

  std::size_t trajectories() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < n_steps; ++i) n *= k_ops;
    return n;
  }

  void validate() const {
    if (k_ops < 1 || k_ops > 6 || n_steps < 1 || n_steps > 6 || k_early > n_steps)
      throw Error("trajectory space out of range");
    if (trajectories() > 50000) throw Error("trajectory space too large to enumerate");
  }
};

inline void check_distribution(const std::vector<double>& p, std::size_t k) {
  if (p.size() != k) throw Error("policy size does not match trajectory space");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error("policy entries must be finite and non-negative");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw Error("policy must sum to one");
}

// Exact KL(p_tt || p_bt) by enumerating every trajectory, where
//   p_tt(tau) = prod_i p(tau_i),
//   p_bt(tau) = prod_{i <= K} shared(tau_i) prod_{i > K} p(tau_i).
// Returns +inf when the shared policy misses an operation p can draw early.
inline double kl_divergence(const TrajectorySpace& space, const std::vector<double>& p,
                            const std::vector<double>& shared) {
  space.validate();
  check_distribution(p, space.k_ops);
  check_distribution(shared, space.k_ops);
  std::vector<std::size_t> tau(space.n_steps, 0);
  const std::size_t count = space.trajectories();
  double kl = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    double p_tt = 1.0, p_bt = 1.0;
    for (std::size_t i = 0; i < space.n_steps; ++i) {
      p_tt *= p[tau[i]];
      p_bt *= i < space.k_early ? shared[tau[i]] : p[tau[i]];
    }
    if (p_tt > 0.0) {
      if (p_bt == 0.0) return std::numeric_limits<double>::infinity();
      kl += p_tt * std::log(p_tt / p_bt);
    }
    for (std::size_t i = space.n_steps; i-- > 0;) {
      if (++tau[i] < space.k_ops) break;
      tau[i] = 0;
    }
  }
  return kl;
}

// Single-step KL(p || q).
inline double kl_single(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

// The late factors cancel, so the trajectory KL telescopes to the early
// steps alone: k_early * KL(p || shared).
inline double kl_closed_form(const TrajectorySpace& space, const std::vector<double>& p,
                             const std::vector<double>& shared) {
  space.validate();
  check_distribution(p, space.k_ops);
  check_distribution(shared, space.k_ops);
  return static_cast<double>(space.k_early) * kl_single(p, shared);
}

// Every composition of `resolution` into k parts, normalized.
inline std::vector<std::vector<double>> simplex_grid(std::size_t k, std::size_t resolution) {
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> parts(k, 0);
  const auto r = static_cast<double>(resolution);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
    if (i + 1 == k) {
      parts[i] = left;
      std::vector<double> q(k);
      for (std::size_t j = 0; j < k; ++j) q[j] = static_cast<double>(parts[j]) / r;
      out.push_back(std::move(q));
      return;
    }
    for (std::size_t v = 0; v <= left; ++v) {
      parts[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, resolution);
  return out;
}

// Grid candidates for the shared policy, with the exact uniform point
// appended when the grid does not already contain it.
inline std::vector<std::vector<double>> shared_candidates(std::size_t k, std::size_t resolution) {
  auto out = simplex_grid(k, resolution);
  const std::vector<double> uniform(k, 1.0 / static_cast<double>(k));
  if (std::find(out.begin(), out.end(), uniform) == out.end()) out.push_back(uniform);
  return out;
}

struct MinimizerReport {
  bool uniform_is_minimizer = false;
  double kl_uniform = 0.0;
  double best_candidate_kl = 0.0;  // smallest finite candidate KL
  double margin = 0.0;             // smallest KL(candidate) - KL(uniform) over non-uniform candidates
  std::vector<double> best_candidate;
  std::size_t candidates = 0;
  std::size_t infinite = 0;        // candidates with a zero where p is positive
};

// Evaluates KL(p_tt || p_bt) on the simplex grid of shared policies and
// checks that the uniform shared policy is no worse than any candidate.
inline MinimizerReport verify_uniform_minimizer(const TrajectorySpace& space, const std::vector<double>& p,
                                                std::size_t grid_resolution) {
  if (grid_resolution < 3) throw Error("grid_resolution must be at least 3");
  MinimizerReport rep;
  const std::vector<double> uniform(space.k_ops, 1.0 / static_cast<double>(space.k_ops));
  rep.kl_uniform = kl_divergence(space, p, uniform);
  rep.best_candidate_kl = std::numeric_limits<double>::infinity();
  rep.margin = std::numeric_limits<double>::infinity();
  for (const auto& q : shared_candidates(space.k_ops, grid_resolution)) {
    ++rep.candidates;
    const double kl = kl_divergence(space, p, q);
    if (!std::isfinite(kl)) {
      ++rep.infinite;
      continue;
    }
    if (kl < rep.best_candidate_kl) {
      rep.best_candidate_kl = kl;
      rep.best_candidate = q;
    }
    if (q != uniform) rep.margin = std::min(rep.margin, kl - rep.kl_uniform);
  }
  rep.uniform_is_minimizer = rep.margin >= 0.0;
  return rep;
}

// Same comparison for the KL averaged over every permutation of p, i.e. over
// an exchangeable family of given policies. The permutation average has a
// uniform mean, so here the uniform shared policy is the exact minimizer.
inline MinimizerReport verify_uniform_expected_minimizer(const TrajectorySpace& space,
                                                         const std::vector<double>& p,
                                                         std::size_t grid_resolution) {
  if (grid_resolution < 3) throw Error("grid_resolution must be at least 3");
  if (space.k_ops > 4) throw Error("permutation average limited to k_ops <= 4");
  std::vector<std::vector<double>> family;
  std::vector<std::size_t> perm(space.k_ops);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  do {
    std::vector<double> q(space.k_ops);
    for (std::size_t i = 0; i < space.k_ops; ++i) q[i] = p[perm[i]];
    family.push_back(std::move(q));
  } while (std::next_permutation(perm.begin(), perm.end()));
  auto mean_kl = [&](const std::vector<double>& shared) {
    double s = 0.0;
    for (const auto& q : family) {
      const double kl = kl_divergence(space, q, shared);
      if (!std::isfinite(kl)) return kl;
      s += kl;
    }
    return s / static_cast<double>(family.size());
  };
  MinimizerReport rep;
  const std::vector<double> uniform(space.k_ops, 1.0 / static_cast<double>(space.k_ops));
  rep.kl_uniform = mean_kl(uniform);
  rep.best_candidate_kl = std::numeric_limits<double>::infinity();
  rep.margin = std::numeric_limits<double>::infinity();
  for (const auto& q : shared_candidates(space.k_ops, grid_resolution)) {
    ++rep.candidates;
    const double kl = mean_kl(q);
    if (!std::isfinite(kl)) {
      ++rep.infinite;
      continue;
    }
    if (kl < rep.best_candidate_kl) {
      rep.best_candidate_kl = kl;
      rep.best_candidate = q;
    }
    if (q != uniform) rep.margin = std::min(rep.margin, kl - rep.kl_uniform);
  }
  // Grid points next to uniform can tie up to rounding.
  rep.uniform_is_minimizer = rep.margin >= -1e-12;
  return rep;
}

// Minimax form: for every shared candidate q, the worst KL over all policies
// p on the grid. Uniform minimizes that worst case.
inline MinimizerReport verify_uniform_worst_case(const TrajectorySpace& space, std::size_t grid_resolution) {
  if (grid_resolution < 3) throw Error("grid_resolution must be at least 3");
  if (space.k_ops > 4 || space.n_steps > 3) throw Error("worst case limited to k_ops <= 4, n_steps <= 3");
  const auto policies = simplex_grid(space.k_ops, grid_resolution);
  auto worst = [&](const std::vector<double>& shared) {
    double w = 0.0;
    for (const auto& p : policies) {
      w = std::max(w, kl_divergence(space, p, shared));
      if (!std::isfinite(w)) break;
    }
    return w;
  };
  MinimizerReport rep;
  const std::vector<double> uniform(space.k_ops, 1.0 / static_cast<double>(space.k_ops));
  rep.kl_uniform = worst(uniform);
  rep.best_candidate_kl = std::numeric_limits<double>::infinity();
  rep.margin = std::numeric_limits<double>::infinity();
  for (const auto& q : shared_candidates(space.k_ops, grid_resolution)) {
    ++rep.candidates;
    const double kl = worst(q);
    if (!std::isfinite(kl)) {
      ++rep.infinite;
      continue;
    }
    if (kl < rep.best_candidate_kl) {
      rep.best_candidate_kl = kl;
      rep.best_candidate = q;
    }
    if (q != uniform) rep.margin = std::min(rep.margin, kl - rep.kl_uniform);
  }
  rep.uniform_is_minimizer = rep.margin >= -1e-12;
  return rep;
}

}  // namespace awsaug::oracle
