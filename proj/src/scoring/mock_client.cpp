#include "moralprobe/scoring/mock_client.hpp"

#include <fstream>
#include <sstream>

#include "moralprobe/csv.hpp"
#include "moralprobe/error.hpp"

namespace moralprobe {

namespace {

std::string key_of(std::string_view text) {
  while (!text.empty() && (text.back() == '.' || text.back() == ' ')) text.remove_suffix(1);
  return std::string(text);
}

}  // namespace

MockClient MockClient::from_file(const std::filesystem::path& path) {
  const auto table = csv::Table::read(path);
  MockClient mock;
  if (table.header() == std::vector<std::string>{"text", "logprob"}) {
    for (const auto& row : table.rows())
      mock.set_logprob(row.fields[0], csv::to_double(table, row, 1));
  } else if (table.header() == std::vector<std::string>{"text", "answer"}) {
    for (const auto& row : table.rows()) mock.add_answer(row.fields[0], row.fields[1]);
  } else if (table.has_column("mean") && table.has_column("count")) {
    const auto means = read_pair_means(path);
    const auto registry = TemplateRegistry::defaults();
    const auto pairs = default_judgment_pairs();
    return from_pair_means(means, registry.get("in-country"), pairs);
  } else {
    throw ParseError(table.source(), 1,
                     "mock fixture needs header 'text,logprob', 'text,answer' or a pair-means table");
  }
  return mock;
}

MockClient MockClient::from_pair_means(const PairMeanTable& table, const PromptTemplate& tmpl,
                                       std::span<const JudgmentPair> pairs,
                                       bool include_homogeneous) {
  MockClient mock;
  auto add_unit = [&](const std::string& topic, const std::optional<std::string>& country,
                      double score) {
    for (const auto& jp : pairs) {
      const auto plus = render_statement(tmpl, topic, country, jp.positive, Polarity::kPositive);
      const auto minus = render_statement(tmpl, topic, country, jp.negative, Polarity::kNegative);
      mock.set_logprob(plus.text, score);
      mock.set_logprob(minus.text, 0.0);
    }
  };
  for (const auto& [key, stat] : table.entries) add_unit(key.topic, key.country, stat.mean);
  if (include_homogeneous && tmpl.country_optional() && !table.entries.empty()) {
    for (const auto& [topic, mean] : aggregate_homogeneous(table)) add_unit(topic, std::nullopt, mean);
  }
  return mock;
}

void MockClient::set_logprob(const std::string& text, double logprob) {
  logprobs_[key_of(text)] = logprob;
}

void MockClient::add_answer(const std::string& prompt, const std::string& answer) {
  answers_[key_of(prompt)].push_back(answer);
}

TokenLogprobs MockClient::echo_logprobs(const std::string& /*model*/, const std::string& prompt) {
  ++calls_;
  auto it = logprobs_.find(key_of(prompt));
  if (it == logprobs_.end()) throw ScoringError("mock fixture has no entry for '" + prompt + "'");
  // The whole prompt is reported as one token carrying the fixture value.
  return {{prompt}, {it->second}, {0}};
}

std::string MockClient::complete(const std::string& /*model*/, const CompletionRequest& request) {
  ++calls_;
  auto it = answers_.find(key_of(request.prompt));
  if (it == answers_.end() || it->second.empty())
    throw ScoringError("mock fixture has no answer for prompt");
  return it->second[static_cast<std::size_t>(request.repeat) % it->second.size()];
}

}  // namespace moralprobe
