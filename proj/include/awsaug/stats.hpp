#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "awsaug/error.hpp"

namespace awsaug::stats {

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw Error("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

struct PairedTest {
  double mean_diff = 0.0;
  double t = 0.0;
  double p_value = 1.0;  // one-sided, H1: mean(a - b) > 0
  std::size_t n = 0;
};

inline PairedTest paired_t_greater(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("paired test needs two samples of equal size >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  PairedTest r;
  r.n = d.size();
  r.mean_diff = mean(d);
  const double sd = stddev(d);
  if (sd == 0.0) {
    // Degenerate: every difference is identical.
    r.t = r.mean_diff > 0 ? INFINITY : (r.mean_diff < 0 ? -INFINITY : 0.0);
    r.p_value = r.mean_diff > 0 ? 0.0 : 1.0;
    return r;
  }
  r.t = r.mean_diff / (sd / std::sqrt(static_cast<double>(r.n)));
  boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

struct SignTest {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t ties = 0;
  double p_value = 1.0;  // one-sided, H1: positives more likely
};

// Ties are dropped, as usual for the sign test.
inline SignTest sign_test(const std::vector<double>& diffs) {
  SignTest r;
  for (double d : diffs) {
    if (d > 0) ++r.positive;
    else if (d < 0) ++r.negative;
    else ++r.ties;
  }
  const std::size_t n = r.positive + r.negative;
  if (n == 0) return r;
  boost::math::binomial dist(static_cast<double>(n), 0.5);
  // P(X >= positive)
  r.p_value = r.positive == 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, static_cast<double>(r.positive) - 1.0));
  return r;
}

}  // namespace awsaug::stats
