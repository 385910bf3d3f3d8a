#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moralprobe/survey_data.hpp"

namespace moralprobe {

/// Opposing moral judgments appended to a probe prefix.
struct JudgmentPair {
  std::string positive;
  std::string negative;
};

/// (always justifiable, never justifiable), (morally good, morally bad),
/// (right, wrong), (ethically right, ethically wrong), (ethical, unethical).
std::vector<JudgmentPair> default_judgment_pairs();

/// CSV with header `positive,negative`.
std::vector<JudgmentPair> read_judgment_pairs(const std::filesystem::path& path);
void validate(const JudgmentPair& pair);

enum class TemplateKind { kStatement, kQa, kEmbedding, kFinetune };

std::string_view to_string(TemplateKind kind);
TemplateKind parse_template_kind(std::string_view s);

inline constexpr std::string_view kCountrySlot = "[Country]";
inline constexpr std::string_view kTopicSlot = "[Topic]";
inline constexpr std::string_view kJudgementSlot = "[Moral judgement]";
inline constexpr std::string_view kRatingSlot = "[Moral rating]";

struct PromptTemplate {
  std::string id;
  TemplateKind kind = TemplateKind::kStatement;
  std::string pattern;
  /// Pattern used when no country is given; its presence makes the country
  /// optional.
  std::optional<std::string> homogeneous_pattern;
  /// Answer options, in order, for QA templates.
  std::vector<std::string> options;

  bool country_optional() const { return homogeneous_pattern.has_value(); }
  /// Throws ConfigError when the slot requirements for `kind` are not met.
  void validate() const;
};

class TemplateRegistry {
 public:
  /// in-country, people-believe, sbert, qa-wvs, qa-pew, finetune.
  static TemplateRegistry defaults();
  /// JSON: {"templates": [{"id", "kind", "pattern", "homogeneous_pattern"?, "options"?}]}
  static TemplateRegistry read(const std::filesystem::path& path);
  static TemplateRegistry parse(std::string_view json_text);

  void add(PromptTemplate t);
  const PromptTemplate& get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

enum class Polarity { kPositive, kNegative, kNeutral };

std::string_view to_string(Polarity p);

struct RenderedPrompt {
  std::string text;
  std::string template_id;
  std::string topic;
  std::optional<std::string> country;
  Polarity polarity = Polarity::kNeutral;
  std::optional<int> judgment_index;  // 1-based index into the judgment pairs
  std::string judgment;               // empty for neutral prompts
};

RenderedPrompt render_statement(const PromptTemplate& tmpl, std::string_view topic,
                                const std::optional<std::string>& country,
                                std::string_view judgment, Polarity polarity,
                                std::optional<int> judgment_index = std::nullopt);

/// `[Topic] in [Country].` style prompts for the embedding backend.
RenderedPrompt render_embedding(const PromptTemplate& tmpl, std::string_view topic,
                                const std::optional<std::string>& country);

std::vector<std::string> qa_options(const DatasetId& dataset);
std::string render_qa(std::string_view topic, std::string_view country, const DatasetId& dataset);
std::string render_qa(const PromptTemplate& tmpl, std::string_view topic,
                      std::string_view country);

std::string render_finetune(std::string_view country, std::string_view topic,
                            std::string_view rating_label);

/// Survey wording used as the fine-tuning rating phrase.
std::string map_rating_to_label(const DatasetId& dataset, int raw);

/// Text submitted for scoring: the statement without its trailing period.
std::string scoring_text(const RenderedPrompt& prompt);

}  // namespace moralprobe
