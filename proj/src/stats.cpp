#include "moralprobe/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <limits>
#include <numeric>

#include "moralprobe/rng.hpp"

namespace moralprobe::stats {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

struct Midranks {
  std::vector<double> ranks;  // per pooled element, a first then b
  double tie_term = 0.0;      // sum of t^3 - t over tie groups
};

Midranks midranks(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size() + b.size();
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  Midranks m;
  m.ranks.assign(n, 0.0);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && pooled[order[j]] == pooled[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    for (std::size_t k = i; k < j; ++k) m.ranks[order[k]] = rank;
    const double t = static_cast<double>(j - i);
    m.tie_term += t * t * t - t;
    i = j;
  }
  return m;
}

// Exact two-sided p from the permutation distribution of the (doubled,
// hence integral) midranks: count size-n1 subsets by rank sum.
double exact_p(const std::vector<double>& ranks, std::size_t n1, double u) {
  const std::size_t n = ranks.size();
  const std::size_t n2 = n - n1;
  std::vector<long> doubled(n);
  long total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    doubled[i] = std::lround(2.0 * ranks[i]);
    total += doubled[i];
  }
  // ways[k][s]: subsets of size k with doubled rank sum s.
  std::vector<std::vector<std::uint64_t>> ways(n1 + 1, std::vector<std::uint64_t>(total + 1, 0));
  ways[0][0] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const long r = doubled[i];
    for (std::size_t k = std::min(n1, i + 1); k >= 1; --k) {
      auto& dst = ways[k];
      const auto& src = ways[k - 1];
      for (long s = total; s >= r; --s) dst[s] += src[s - r];
    }
  }
  const long offset = static_cast<long>(n1 * (n1 + 1));
  const long center = static_cast<long>(n1 * n2);
  const long observed = std::labs(std::lround(2.0 * u) - center);
  std::uint64_t extreme = 0;
  std::uint64_t all = 0;
  for (long s = 0; s <= total; ++s) {
    const std::uint64_t w = ways[n1][s];
    if (w == 0) continue;
    all += w;
    if (std::labs((s - offset) - center) >= observed) extreme += w;
  }
  return static_cast<double>(extreme) / static_cast<double>(all);
}

double normal_p(double u, std::size_t n1, std::size_t n2, double tie_term) {
  const double n = static_cast<double>(n1 + n2);
  const double mu = 0.5 * static_cast<double>(n1 * n2);
  const double var = static_cast<double>(n1 * n2) / 12.0 *
                     ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) return 1.0;
  const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

Stars stars_for(double p) {
  if (p < 0.001) return Stars::kThree;
  if (p < 0.01) return Stars::kTwo;
  if (p < 0.05) return Stars::kOne;
  return Stars::kNs;
}

std::string_view to_string(Stars s) {
  switch (s) {
    case Stars::kNs: return "ns";
    case Stars::kOne: return "*";
    case Stars::kTwo: return "**";
    case Stars::kThree: return "***";
  }
  return "ns";
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::kModelHigher: return "model_higher";
    case Direction::kModelLower: return "model_lower";
    case Direction::kNone: return "none";
  }
  return "none";
}

double pearson_p_value(double r, std::size_t n) {
  if (n < 3) throw ValidationError("pearson p: need at least 3 points");
  const double ar = std::abs(r);
  if (ar >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = ar * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  return pearson(as_vector(x), as_vector(y));
}

double sample_stddev(std::span<const double> values) { return sample_stddev(as_vector(values)); }

std::vector<double> zscores(std::span<const double> values) {
  const Eigen::VectorXd z = zscores(as_vector(values));
  return {z.data(), z.data() + z.size()};
}

double median(std::span<const double> values) {
  if (values.empty()) throw ValidationError("median of empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

RankTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                              PValueMethod method) {
  if (a.empty() || b.empty()) throw ValidationError("mann_whitney_u: empty sample");
  for (double v : a)
    if (std::isnan(v)) throw ValidationError("mann_whitney_u: NaN in sample");
  for (double v : b)
    if (std::isnan(v)) throw ValidationError("mann_whitney_u: NaN in sample");

  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  const Midranks m = midranks(a, b);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n1; ++i) rank_sum += m.ranks[i];

  RankTestResult out;
  out.n1 = n1;
  out.n2 = n2;
  out.u_statistic = rank_sum - 0.5 * static_cast<double>(n1 * (n1 + 1));

  bool exact = method == PValueMethod::kExact ||
               (method == PValueMethod::kAuto && n1 + n2 <= kExactMannWhitneyLimit);
  if (exact && n1 + n2 > 60)
    throw ValidationError("mann_whitney_u: exact enumeration limited to n1 + n2 <= 60");
  out.exact = exact;
  out.p_raw = exact ? exact_p(m.ranks, n1, out.u_statistic)
                    : normal_p(out.u_statistic, n1, n2, m.tie_term);
  out.p_corrected = out.p_raw;

  const double ma = median(a);
  const double mb = median(b);
  out.direction = ma > mb   ? Direction::kModelHigher
                  : ma < mb ? Direction::kModelLower
                            : Direction::kNone;
  return out;
}

double bonferroni(double p, std::size_t m) {
  if (m == 0) throw ValidationError("bonferroni: m must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("bonferroni: p outside [0, 1]");
  return std::min(1.0, p * static_cast<double>(m));
}

std::map<std::string, IntervalEstimate> resampled_correlation_ci(
    const std::map<std::string, std::vector<CountryPoints>>& groups, std::size_t sample_size,
    std::size_t replicates, double alpha, std::uint64_t seed) {
  if (replicates == 0) throw ValidationError("resampled_correlation_ci: replicates must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("resampled_correlation_ci: alpha outside (0, 1)");
  if (sample_size == 0) throw ValidationError("resampled_correlation_ci: sample_size must be >= 1");

  const double z = boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2.0);
  const CounterRng root(seed);
  std::map<std::string, IntervalEstimate> out;

  for (const auto& [label, members] : groups) {
    if (members.size() < sample_size)
      throw ValidationError("group '" + label + "' has " + std::to_string(members.size()) +
                            " countries, fewer than sample size " + std::to_string(sample_size));
    std::vector<const CountryPoints*> sorted;
    for (const auto& c : members) sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto* l, const auto* r) { return l->country < r->country; });

    const CounterRng group_rng = root.split(label);
    Eigen::VectorXd rs(static_cast<Eigen::Index>(replicates));
    for (std::size_t k = 0; k < replicates; ++k) {
      CounterRng rng = group_rng.split(k);
      auto picks = rng.sample_indices(sorted.size(), sample_size);
      std::sort(picks.begin(), picks.end());
      std::vector<double> xs;
      std::vector<double> ys;
      for (std::size_t idx : picks) {
        for (const auto& [x, y] : sorted[idx]->points) {
          xs.push_back(x);
          ys.push_back(y);
        }
      }
      rs[static_cast<Eigen::Index>(k)] = pearson(xs, ys).r;
    }
    IntervalEstimate est;
    est.alpha = alpha;
    est.replicates = replicates;
    est.mean_r = rs.mean();
    const double sd = replicates > 1 ? sample_stddev(rs) : 0.0;
    est.lower = std::max(-1.0, est.mean_r - z * sd);
    est.upper = std::min(1.0, est.mean_r + z * sd);
    est.lower = std::min(est.lower, est.mean_r);
    est.upper = std::max(est.upper, est.mean_r);
    out.emplace(label, est);
  }
  return out;
}

}  // namespace moralprobe::stats
