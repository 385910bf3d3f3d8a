#pragma once

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moralprobe/prompt_factory.hpp"
#include "moralprobe/scoring/backend.hpp"
#include "moralprobe/scoring/direction.hpp"
#include "moralprobe/scoring/scorer.hpp"
#include "moralprobe/survey_data.hpp"

namespace moralprobe {

/// A topic, optionally within a country (country-free units are homogeneous).
struct ScoreUnit {
  std::string topic;
  std::optional<std::string> country;

  auto operator<=>(const ScoreUnit&) const = default;
};

struct ScoreEntry {
  double raw_score = 0.0;
  double normalized_score = 0.0;
  bool ok = true;
  std::string error;  // set when !ok
  ErrorClass error_class = ErrorClass::kScoring;
  std::size_t format_errors = 0;
};

struct MoralScoreTable {
  std::string backend_kind;
  std::string model_id;
  std::string template_id;
  std::string scoring_mode;
  std::string cache_digest;
  std::map<ScoreUnit, ScoreEntry> entries;

  std::size_t failed() const;
  /// Raw score of a successfully scored unit.
  std::optional<double> raw(const ScoreUnit& unit) const;
};

/// What score_units needs besides the scorer; fields beyond `tmpl` apply
/// to particular backend kinds.
struct ScoringSetup {
  PromptTemplate tmpl;
  std::vector<JudgmentPair> pairs = default_judgment_pairs();
  DatasetId dataset = DatasetId::wvs();  // QA option wording
  int qa_repeats = 5;
  std::optional<MoralDirection> direction;            // embedding backend
  std::shared_ptr<const EmbeddingTable> embeddings;   // embedding backend
};

/// Maps values affinely onto [-1, 1]; a zero range maps everything to 0.
std::vector<double> min_max_normalize(std::span<const double> values);

/// Recomputes normalized_score over the successfully scored entries.
void normalize_scores(MoralScoreTable& table);

/// Scores each unit with the backend-appropriate method. Failures are
/// recorded per unit and left out of normalization. Cache-only misses and
/// configuration errors abort the whole call.
MoralScoreTable score_units(Scorer& scorer, const ScoringSetup& setup,
                            std::span<const ScoreUnit> units);

/// Cartesian product of topics and countries; no countries means
/// country-free probing.
MoralScoreTable score_grid(Scorer& scorer, const ScoringSetup& setup,
                           std::span<const std::string> topics,
                           const std::optional<std::vector<std::string>>& countries);

/// CSV `topic,country,raw_score,normalized_score,status` preceded by
/// `# key=value` provenance lines.
void write_score_table(std::ostream& out, const MoralScoreTable& table);
MoralScoreTable read_score_table(const std::filesystem::path& path);
MoralScoreTable parse_score_table(std::string_view text, std::string source = "<memory>");

}  // namespace moralprobe
