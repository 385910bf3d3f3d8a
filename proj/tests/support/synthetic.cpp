#include "synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "moralprobe/rng.hpp"

namespace moralprobe::testing {

SyntheticShape wvs_shape(std::uint64_t seed, std::size_t records_per_pair) {
  return {DatasetId::wvs(), 55, 19, 17, records_per_pair, seed};
}

SyntheticShape pew_shape(std::uint64_t seed, std::size_t records_per_pair) {
  return {DatasetId::pew(), 40, 8, 8, records_per_pair, seed};
}

std::vector<std::string> country_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("Country {:02}", i + 1));
  return out;
}

std::vector<std::string> topic_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("topic {:02}", i + 1));
  return out;
}

std::vector<ResponseRecord> synthetic_records(const SyntheticShape& shape) {
  const auto countries = country_names(shape.countries);
  const auto topics = topic_names(shape.topics);
  const auto range = *shape.dataset.raw_range();
  const double lo = range.min, hi = range.max;
  const double mid = 0.5 * (lo + hi), span = hi - lo;

  // Diagonal-ish holes: distinct, and no row or column loses every pair.
  std::set<std::pair<std::size_t, std::size_t>> holes;
  for (std::size_t i = 0; holes.size() < shape.missing; ++i)
    holes.insert({i % shape.topics, (i * 7 + i / shape.topics) % shape.countries});

  CounterRng root(shape.seed);
  CounterRng effects = root.split("effects");
  std::vector<double> topic_effect(shape.topics), country_effect(shape.countries);
  for (auto& t : topic_effect) t = 0.3 * span * (2.0 * effects.uniform() - 1.0);
  for (auto& c : country_effect) c = 0.15 * span * (2.0 * effects.uniform() - 1.0);

  std::vector<ResponseRecord> out;
  out.reserve(shape.topics * shape.countries * shape.records_per_pair);
  for (std::size_t t = 0; t < shape.topics; ++t) {
    for (std::size_t c = 0; c < shape.countries; ++c) {
      if (holes.count({t, c})) continue;
      CounterRng rng = root.split(t * 1000 + c);
      const double center = mid + topic_effect[t] + country_effect[c];
      for (std::size_t r = 0; r < shape.records_per_pair; ++r) {
        const double raw = std::clamp(std::round(center + 0.2 * span * rng.normal()), lo, hi);
        out.push_back({shape.dataset, countries[c], topics[t], raw,
                       normalize_rating(shape.dataset, raw)});
      }
    }
  }
  return out;
}

PairMeanTable synthetic_pairs(const SyntheticShape& shape) {
  return aggregate_pairs(synthetic_records(shape));
}

std::string survey_csv(const std::vector<ResponseRecord>& records) {
  std::ostringstream os;
  write_records(os, records);
  return os.str();
}

CountryGrouping split_grouping(const std::vector<std::string>& countries, std::size_t split,
                               const std::string& first, const std::string& second) {
  CountryGrouping g;
  g.name = "split";
  for (std::size_t i = 0; i < countries.size(); ++i)
    g.assignment[countries[i]] = i < split ? first : second;
  g.labels = {first, second};
  return g;
}

MoralScoreTable scores_from(
    const PairMeanTable& empirical,
    const std::function<double(const std::string&, const std::string&, double)>& f) {
  MoralScoreTable t;
  t.backend_kind = "mock";
  t.model_id = "synthetic";
  t.template_id = "in-country";
  t.scoring_mode = "last-token";
  for (const auto& [k, stat] : empirical.entries) {
    ScoreEntry e;
    e.raw_score = f(k.topic, k.country, stat.mean);
    t.entries[{k.topic, k.country}] = e;
  }
  normalize_scores(t);
  return t;
}

MoralScoreTable topic_scores(const std::vector<std::pair<std::string, double>>& values) {
  MoralScoreTable t;
  t.backend_kind = "mock";
  t.model_id = "synthetic";
  t.template_id = "in-country";
  for (const auto& [topic, v] : values) {
    ScoreEntry e;
    e.raw_score = v;
    t.entries[{topic, std::nullopt}] = e;
  }
  normalize_scores(t);
  return t;
}

PlantedEmbeddings planted_embeddings(std::size_t n, Eigen::Index dim, double variance_ratio,
                                     std::uint64_t seed, double offset) {
  CounterRng rng(seed);
  PlantedEmbeddings out;
  out.axis = Eigen::VectorXd(dim);
  for (Eigen::Index i = 0; i < dim; ++i) out.axis[i] = rng.normal();
  out.axis.normalize();
  const double spread = std::sqrt(variance_ratio);
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::VectorXd noise(dim);
    for (Eigen::Index i = 0; i < dim; ++i) noise[i] = rng.normal();
    noise -= noise.dot(out.axis) * out.axis;
    const double along = spread * rng.normal();
    SeedEmbedding s;
    s.label = fmt::format("seed {:03}", k);
    s.vector = (offset + along) * out.axis + noise;
    s.polarity = along >= 0 ? Polarity::kPositive : Polarity::kNegative;
    out.seeds.push_back(std::move(s));
  }
  return out;
}

}  // namespace moralprobe::testing
