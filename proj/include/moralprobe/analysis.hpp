#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "moralprobe/scoring/score_table.hpp"
#include "moralprobe/stats.hpp"
#include "moralprobe/survey_data.hpp"

namespace moralprobe {

enum class ReportKind { kHomogeneous, kFineGrained, kCluster, kBiasTopics, kDiversity, kFinetuneEval };

std::string_view to_string(ReportKind kind);

/// A row that could not be computed (too few points, degenerate input).
struct FlagRow {
  std::string reason;
  std::size_t n = 0;
};

using RowResult = std::variant<stats::CorrelationResult, stats::RankTestResult,
                               stats::IntervalEstimate, FlagRow>;

struct ReportRow {
  std::string label;
  std::string topic;
  RowResult result;
};

struct Provenance {
  std::string backend;
  std::string model_id;
  std::string template_id;
  std::string dataset_id;
  std::optional<std::uint64_t> seed;
  std::string cache_digest;
  std::string input_digest;  // filled in by callers that read inputs from disk
};

/// One (topic, country) point of a join; diversity reports reuse it with
/// per-topic standard deviations and an empty country.
struct JoinedPoint {
  std::string topic;
  std::string country;
  double empirical = 0.0;
  double model = 0.0;
};

struct EvalReport {
  ReportKind kind = ReportKind::kFineGrained;
  std::vector<ReportRow> rows;
  Provenance provenance;
  std::vector<JoinedPoint> joined;
  std::vector<std::string> notes;  // exclusions and flagged conditions

  /// Appends a row; throws ValidationError on a duplicate label.
  void add_row(ReportRow row);
  const ReportRow* find(std::string_view label) const;
};

enum class ScoreField { kRaw, kNormalized };

struct EvalOptions {
  ScoreField field = ScoreField::kRaw;
};

/// Country-free scores against fine-grained pairs: every empirical pair is a
/// point whose model value is its topic's score.
EvalReport eval_homogeneous(const MoralScoreTable& scores, const PairMeanTable& empirical,
                            EvalOptions options = {});
/// Country-free scores against statement-level ratings.
EvalReport eval_homogeneous(const MoralScoreTable& scores, const HomogeneousNormsTable& empirical,
                            EvalOptions options = {});

EvalReport eval_fine_grained(const MoralScoreTable& scores, const PairMeanTable& empirical,
                             EvalOptions options = {});

struct EqualizeOptions {
  std::size_t sample_size = 11;
  std::size_t replicates = 50;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

/// Per-group correlation; with `equalize`, also an interval from repeated
/// equal-size country samples (row label `<group>/equalized`).
EvalReport eval_clusters(const MoralScoreTable& scores, const PairMeanTable& empirical,
                         const CountryGrouping& grouping,
                         const std::optional<EqualizeOptions>& equalize = std::nullopt,
                         EvalOptions options = {});

/// Per topic, Mann-Whitney U between the group's model z-scores and
/// empirical z-scores (each z-scored over all joined pairs), Bonferroni
/// corrected over the topics tested. Row labels are `<group>/<topic>`.
EvalReport eval_bias_topics(const MoralScoreTable& scores, const PairMeanTable& empirical,
                            const CountryGrouping& grouping, std::string_view group_label,
                            EvalOptions options = {});

/// Topics whose corrected p falls below `alpha`.
std::vector<std::string> significant_topics(const EvalReport& report, double alpha = 0.05);

/// Correlation of per-topic cross-country standard deviations.
EvalReport eval_diversity(const MoralScoreTable& scores, const PairMeanTable& empirical,
                          EvalOptions options = {});

/// Inner join of scored pairs with empirical pairs; failed or missing units
/// are noted in `notes`.
std::vector<JoinedPoint> join_pairs(const MoralScoreTable& scores, const PairMeanTable& empirical,
                                    ScoreField field, std::vector<std::string>& notes);

}  // namespace moralprobe
