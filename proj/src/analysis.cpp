#include "moralprobe/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <set>

namespace moralprobe {
namespace {

double pick(const ScoreEntry& e, ScoreField field) {
  return field == ScoreField::kRaw ? e.raw_score : e.normalized_score;
}

Provenance provenance_of(const MoralScoreTable& scores, const DatasetId& dataset) {
  Provenance p;
  p.backend = scores.backend_kind;
  p.model_id = scores.model_id;
  p.template_id = scores.template_id;
  p.dataset_id = dataset.name();
  p.cache_digest = scores.cache_digest;
  return p;
}

void require_country_free(const MoralScoreTable& scores) {
  for (const auto& [unit, _] : scores.entries)
    if (unit.country)
      throw ValidationError(fmt::format(
          "homogeneous evaluation needs country-free scores; found ({}, {})", unit.topic,
          *unit.country));
}

// Topic -> score over successfully scored country-free units.
std::map<std::string, double> topic_scores(const MoralScoreTable& scores, ScoreField field,
                                           std::vector<std::string>& notes) {
  std::map<std::string, double> out;
  for (const auto& [unit, entry] : scores.entries) {
    if (!entry.ok) {
      notes.push_back(fmt::format("excluded topic '{}': scoring failed ({})", unit.topic,
                                  entry.error));
      continue;
    }
    out.emplace(unit.topic, pick(entry, field));
  }
  return out;
}

stats::CorrelationResult correlate(const std::vector<JoinedPoint>& points) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(points.size()));
  Eigen::VectorXd y(x.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    x[static_cast<Eigen::Index>(i)] = points[i].empirical;
    y[static_cast<Eigen::Index>(i)] = points[i].model;
  }
  return stats::pearson(x, y);
}

RowResult correlate_or_flag(const std::vector<JoinedPoint>& points, std::string_view what,
                            std::vector<std::string>& notes) {
  if (points.size() < 3) {
    notes.push_back(fmt::format("{}: {} pairs, need at least 3", what, points.size()));
    return FlagRow{"fewer than 3 pairs", points.size()};
  }
  try {
    return correlate(points);
  } catch (const DegeneracyError& e) {
    notes.push_back(fmt::format("{}: {}", what, e.what()));
    return FlagRow{"constant input", points.size()};
  }
}

}  // namespace

std::string_view to_string(ReportKind kind) {
  switch (kind) {
    case ReportKind::kHomogeneous: return "homogeneous";
    case ReportKind::kFineGrained: return "fine_grained";
    case ReportKind::kCluster: return "cluster";
    case ReportKind::kBiasTopics: return "bias_topics";
    case ReportKind::kDiversity: return "diversity";
    case ReportKind::kFinetuneEval: return "finetune_eval";
  }
  return "unknown";
}

void EvalReport::add_row(ReportRow row) {
  if (find(row.label)) throw ValidationError("duplicate report row label: " + row.label);
  rows.push_back(std::move(row));
}

const ReportRow* EvalReport::find(std::string_view label) const {
  for (const auto& r : rows)
    if (r.label == label) return &r;
  return nullptr;
}

std::vector<JoinedPoint> join_pairs(const MoralScoreTable& scores, const PairMeanTable& empirical,
                                    ScoreField field, std::vector<std::string>& notes) {
  std::vector<JoinedPoint> out;
  std::size_t missing = 0;
  for (const auto& [key, stat] : empirical.entries) {
    auto it = scores.entries.find(ScoreUnit{key.topic, key.country});
    if (it == scores.entries.end()) {
      ++missing;
      continue;
    }
    if (!it->second.ok) {
      notes.push_back(fmt::format("excluded ({}, {}): scoring failed ({})", key.topic,
                                  key.country, it->second.error));
      continue;
    }
    out.push_back({key.topic, key.country, stat.mean, pick(it->second, field)});
  }
  if (missing > 0)
    notes.push_back(fmt::format("{} empirical pairs have no score and were excluded", missing));
  return out;
}

EvalReport eval_homogeneous(const MoralScoreTable& scores, const PairMeanTable& empirical,
                            EvalOptions options) {
  require_country_free(scores);
  EvalReport report;
  report.kind = ReportKind::kHomogeneous;
  report.provenance = provenance_of(scores, empirical.dataset);
  const auto by_topic = topic_scores(scores, options.field, report.notes);

  std::set<std::string> absent;
  for (const auto& [key, stat] : empirical.entries) {
    auto it = by_topic.find(key.topic);
    if (it == by_topic.end()) {
      absent.insert(key.topic);
      continue;
    }
    report.joined.push_back({key.topic, key.country, stat.mean, it->second});
  }
  for (const auto& t : absent)
    report.notes.push_back(fmt::format("excluded topic '{}': no country-free score", t));
  if (report.joined.empty())
    throw ValidationError("homogeneous evaluation: no overlap between scores and empirical");
  report.add_row({"all", "", correlate(report.joined)});
  return report;
}

EvalReport eval_homogeneous(const MoralScoreTable& scores, const HomogeneousNormsTable& empirical,
                            EvalOptions options) {
  require_country_free(scores);
  EvalReport report;
  report.kind = ReportKind::kHomogeneous;
  report.provenance = provenance_of(scores, DatasetId::homogeneous());
  const auto by_topic = topic_scores(scores, options.field, report.notes);

  for (const auto& [statement, rating] : empirical.entries) {
    auto it = by_topic.find(statement);
    if (it == by_topic.end()) {
      report.notes.push_back(fmt::format("excluded statement '{}': no score", statement));
      continue;
    }
    report.joined.push_back({statement, "", rating, it->second});
  }
  if (report.joined.empty())
    throw ValidationError("homogeneous evaluation: no overlap between scores and empirical");
  report.add_row({"all", "", correlate(report.joined)});
  return report;
}

EvalReport eval_fine_grained(const MoralScoreTable& scores, const PairMeanTable& empirical,
                             EvalOptions options) {
  EvalReport report;
  report.kind = ReportKind::kFineGrained;
  report.provenance = provenance_of(scores, empirical.dataset);
  report.joined = join_pairs(scores, empirical, options.field, report.notes);
  if (report.joined.size() < 3)
    throw ValidationError(fmt::format("fine-grained evaluation: {} overlapping pairs, need 3",
                                      report.joined.size()));
  report.add_row({"all", "", correlate(report.joined)});
  return report;
}

EvalReport eval_clusters(const MoralScoreTable& scores, const PairMeanTable& empirical,
                         const CountryGrouping& grouping,
                         const std::optional<EqualizeOptions>& equalize, EvalOptions options) {
  EvalReport report;
  report.kind = ReportKind::kCluster;
  report.provenance = provenance_of(scores, empirical.dataset);
  report.joined = join_pairs(scores, empirical, options.field, report.notes);
  if (report.joined.empty())
    throw ValidationError("cluster evaluation: no overlap between scores and empirical");

  std::set<std::string> countries;
  for (const auto& p : report.joined) countries.insert(p.country);
  grouping.require_covers(countries);

  std::map<std::string, std::vector<JoinedPoint>> by_group;
  for (const auto& p : report.joined) by_group[grouping.assignment.at(p.country)].push_back(p);

  std::map<std::string, std::vector<stats::CountryPoints>> resample;
  for (const auto& label : grouping.labels) {
    const auto& points = by_group[label];
    report.add_row({label, "", correlate_or_flag(points, "group " + label, report.notes)});
    if (!equalize) continue;
    std::map<std::string, stats::CountryPoints> per_country;
    for (const auto& p : points) {
      auto& cp = per_country[p.country];
      cp.country = p.country;
      cp.points.emplace_back(p.empirical, p.model);
    }
    if (per_country.size() < equalize->sample_size) {
      report.notes.push_back(fmt::format("group {}: {} countries, fewer than sample size {}",
                                         label, per_country.size(), equalize->sample_size));
      continue;
    }
    auto& list = resample[label];
    for (auto& [_, cp] : per_country) list.push_back(std::move(cp));
  }

  if (equalize) {
    report.provenance.seed = equalize->seed;
    const auto intervals =
        stats::resampled_correlation_ci(resample, equalize->sample_size, equalize->replicates,
                                        equalize->alpha, equalize->seed);
    for (const auto& label : grouping.labels) {
      const std::string row_label = label + "/equalized";
      auto it = intervals.find(label);
      if (it != intervals.end())
        report.add_row({row_label, "", it->second});
      else
        report.add_row({row_label, "", FlagRow{"fewer countries than sample size", 0}});
    }
  }
  return report;
}

EvalReport eval_bias_topics(const MoralScoreTable& scores, const PairMeanTable& empirical,
                            const CountryGrouping& grouping, std::string_view group_label,
                            EvalOptions options) {
  if (std::find(grouping.labels.begin(), grouping.labels.end(), group_label) ==
      grouping.labels.end())
    throw ValidationError(fmt::format("grouping '{}' has no group '{}'", grouping.name,
                                      group_label));
  EvalReport report;
  report.kind = ReportKind::kBiasTopics;
  report.provenance = provenance_of(scores, empirical.dataset);
  report.joined = join_pairs(scores, empirical, options.field, report.notes);
  if (report.joined.size() < 2)
    throw ValidationError("bias evaluation: fewer than 2 overlapping pairs");

  std::set<std::string> countries;
  for (const auto& p : report.joined) countries.insert(p.country);
  grouping.require_covers(countries);

  const auto n = static_cast<Eigen::Index>(report.joined.size());
  Eigen::VectorXd model(n), emp(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    model[i] = report.joined[static_cast<std::size_t>(i)].model;
    emp[i] = report.joined[static_cast<std::size_t>(i)].empirical;
  }
  const Eigen::VectorXd zm = stats::zscores(model);
  const Eigen::VectorXd ze = stats::zscores(emp);

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_topic;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = report.joined[static_cast<std::size_t>(i)];
    if (grouping.assignment.at(p.country) != group_label) continue;
    auto& [m, e] = by_topic[p.topic];
    m.push_back(zm[i]);
    e.push_back(ze[i]);
  }

  std::vector<std::pair<std::string, stats::RankTestResult>> tested;
  for (const auto& [topic, samples] : by_topic) {
    if (samples.first.size() < 2) {
      report.notes.push_back(
          fmt::format("topic '{}' skipped: group {} has fewer than 2 countries", topic,
                      group_label));
      continue;
    }
    tested.emplace_back(topic, stats::mann_whitney_u(samples.first, samples.second));
  }
  if (tested.empty())
    throw ValidationError(fmt::format("bias evaluation: group '{}' has no testable topic",
                                      group_label));
  for (auto& [topic, result] : tested) {
    result.p_corrected = stats::bonferroni(result.p_raw, tested.size());
    report.add_row({fmt::format("{}/{}", group_label, topic), topic, result});
  }
  return report;
}

std::vector<std::string> significant_topics(const EvalReport& report, double alpha) {
  std::vector<std::string> out;
  for (const auto& row : report.rows)
    if (const auto* r = std::get_if<stats::RankTestResult>(&row.result))
      if (r->p_corrected < alpha) out.push_back(row.topic);
  return out;
}

EvalReport eval_diversity(const MoralScoreTable& scores, const PairMeanTable& empirical,
                          EvalOptions options) {
  EvalReport report;
  report.kind = ReportKind::kDiversity;
  report.provenance = provenance_of(scores, empirical.dataset);
  const auto joined = join_pairs(scores, empirical, options.field, report.notes);

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_topic;
  for (const auto& p : joined) {
    by_topic[p.topic].first.push_back(p.empirical);
    by_topic[p.topic].second.push_back(p.model);
  }
  for (const auto& [topic, values] : by_topic) {
    if (values.first.size() < 2) {
      report.notes.push_back(fmt::format("excluded topic '{}': only one country", topic));
      continue;
    }
    report.joined.push_back(
        {topic, "", stats::sample_stddev(values.first), stats::sample_stddev(values.second)});
  }
  if (report.joined.size() < 3)
    throw ValidationError(fmt::format("diversity evaluation: {} usable topics, need 3",
                                      report.joined.size()));
  report.add_row({"all", "", correlate(report.joined)});
  return report;
}

}  // namespace moralprobe
