#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "moralprobe/error.hpp"

namespace moralprobe::stats {

enum class Stars { kNs, kOne, kTwo, kThree };

/// "ns", "*", "**", "***" for p >= .05, < .05, < .01, < .001.
Stars stars_for(double p);
std::string_view to_string(Stars s);

struct CorrelationResult {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  Stars stars = Stars::kNs;
};

enum class Direction { kModelHigher, kModelLower, kNone };
std::string_view to_string(Direction d);

struct RankTestResult {
  double u_statistic = 0.0;  // U of the first sample
  double p_raw = 1.0;
  double p_corrected = 1.0;  // equals p_raw until bonferroni() is applied
  Direction direction = Direction::kNone;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  bool exact = false;
};

struct IntervalEstimate {
  double mean_r = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.05;
  std::size_t replicates = 0;
};

/// Two-sided p for Pearson r with n samples: t = r sqrt(n-2) / sqrt(1-r^2)
/// against Student's t with n-2 degrees of freedom.
double pearson_p_value(double r, std::size_t n);

template <class DX, class DY>
CorrelationResult pearson(const Eigen::DenseBase<DX>& x, const Eigen::DenseBase<DY>& y) {
  const Eigen::Index n = x.size();
  if (y.size() != n)
    throw ValidationError("pearson: length mismatch (" + std::to_string(n) + " vs " +
                          std::to_string(y.size()) + ")");
  if (n < 3) throw ValidationError("pearson: need at least 3 points");
  const Eigen::ArrayXd xc = x.derived().template cast<double>().array() -
                            x.derived().template cast<double>().mean();
  const Eigen::ArrayXd yc = y.derived().template cast<double>().array() -
                            y.derived().template cast<double>().mean();
  const double sxx = xc.square().sum();
  const double syy = yc.square().sum();
  if (sxx == 0.0 || syy == 0.0) throw DegeneracyError("pearson: constant input vector");
  double r = (xc * yc).sum() / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);
  const double p = pearson_p_value(r, static_cast<std::size_t>(n));
  return {r, p, static_cast<std::size_t>(n), stars_for(p)};
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

/// Sample standard deviation (n - 1 denominator).
template <class D>
double sample_stddev(const Eigen::DenseBase<D>& values) {
  const Eigen::Index n = values.size();
  if (n < 2) throw DegeneracyError("sample_stddev: need at least 2 values");
  const Eigen::ArrayXd v = values.derived().template cast<double>().array();
  const double ss = (v - v.mean()).square().sum();
  return std::sqrt(ss / static_cast<double>(n - 1));
}

double sample_stddev(std::span<const double> values);

template <class D>
Eigen::VectorXd zscores(const Eigen::DenseBase<D>& values) {
  const double sd = sample_stddev(values);
  if (sd == 0.0) throw DegeneracyError("zscores: constant input");
  const Eigen::ArrayXd v = values.derived().template cast<double>().array();
  return ((v - v.mean()) / sd).matrix();
}

std::vector<double> zscores(std::span<const double> values);

double median(std::span<const double> values);

enum class PValueMethod { kAuto, kExact, kNormal };

/// Largest combined size n1 + n2 for which kAuto uses exact enumeration.
inline constexpr std::size_t kExactMannWhitneyLimit = 16;

/// Two-sided Mann-Whitney U with midranks. U is reported for `a`;
/// direction compares the medians of `a` and `b`. The exact path
/// enumerates the permutation distribution of the midranks, so it stays
/// exact under ties.
RankTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                              PValueMethod method = PValueMethod::kAuto);

/// min(1, p * m).
double bonferroni(double p, std::size_t m);

/// One country's (x, y) points inside a group.
struct CountryPoints {
  std::string country;
  std::vector<std::pair<double, double>> points;
};

/// For each group: draw `sample_size` countries without replacement,
/// correlate their pooled points, repeat `replicates` times and report
/// mean r with a normal-approximation interval at level `alpha`.
/// Replicate k of group g draws from the substream (seed, g, k).
std::map<std::string, IntervalEstimate> resampled_correlation_ci(
    const std::map<std::string, std::vector<CountryPoints>>& groups, std::size_t sample_size,
    std::size_t replicates, double alpha, std::uint64_t seed);

}  // namespace moralprobe::stats
