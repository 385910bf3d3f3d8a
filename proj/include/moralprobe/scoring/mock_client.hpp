#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "moralprobe/prompt_factory.hpp"
#include "moralprobe/scoring/backend.hpp"
#include "moralprobe/survey_data.hpp"

namespace moralprobe {

/// Fixture-backed client. Texts are matched after stripping a trailing
/// period, so fixtures may list either form.
class MockClient final : public CompletionClient {
 public:
  MockClient() = default;
  MockClient(MockClient&& other) noexcept
      : logprobs_(std::move(other.logprobs_)),
        answers_(std::move(other.answers_)),
        calls_(other.calls_.load()) {}

  /// `text,logprob` (logprob fixture), `text,answer` (QA answers, repeated
  /// rows give successive repeats), or a pair-means table, which is turned
  /// into a perfect-score fixture with the default statement template and
  /// judgment pairs.
  static MockClient from_file(const std::filesystem::path& path);

  /// Logprob fixture under which every unit's moral score equals the
  /// empirical pair mean: s+ gets the mean, s- gets 0. Country-free units get
  /// the per-topic homogeneous aggregate when `include_homogeneous` is set.
  static MockClient from_pair_means(const PairMeanTable& table, const PromptTemplate& tmpl,
                                    std::span<const JudgmentPair> pairs,
                                    bool include_homogeneous = true);

  void set_logprob(const std::string& text, double logprob);
  void add_answer(const std::string& prompt, const std::string& answer);

  TokenLogprobs echo_logprobs(const std::string& model, const std::string& prompt) override;
  std::string complete(const std::string& model, const CompletionRequest& request) override;

  std::size_t calls() const { return calls_.load(); }
  std::size_t fixture_size() const { return logprobs_.size() + answers_.size(); }

 private:
  std::map<std::string, double> logprobs_;
  std::map<std::string, std::vector<std::string>> answers_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace moralprobe
