#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moralprobe/error.hpp"
#include "moralprobe/prompt_factory.hpp"
#include "moralprobe/scoring/backend.hpp"
#include "moralprobe/scoring/cache.hpp"

namespace moralprobe {

/// How a probe's token logprobs collapse to one number. kLastToken takes
/// the final token of the judgment phrase (the trailing period is never
/// sent); kPhraseSum adds every token overlapping the phrase.
enum class ScoringMode { kLastToken, kPhraseSum };

std::string_view to_string(ScoringMode m);
ScoringMode parse_scoring_mode(std::string_view s);

struct ScorerOptions {
  ScoringMode mode = ScoringMode::kLastToken;
  std::size_t concurrency = 4;
  bool cache_only = false;
  double qa_temperature = 0.6;
  int qa_max_tokens = 8;
};

/// Payload of one backend request, or why it failed.
struct FetchOutcome {
  std::optional<nlohmann::json> payload;
  ErrorClass error_class = ErrorClass::kScoring;
  std::string error;

  bool ok() const { return payload.has_value(); }
};

struct QaRequest {
  std::string prompt;
  int repeat = 0;
};

/// Cache-first gateway to one backend. All requests are looked up in the
/// cache; misses are sent to the client with bounded parallelism and
/// appended to the cache in request order once the batch completes.
class Scorer {
 public:
  Scorer(BackendDescriptor backend, std::shared_ptr<CompletionClient> client,
         std::shared_ptr<ScoreCache> cache, ScorerOptions options = {});

  const BackendDescriptor& backend() const { return backend_; }
  const ScorerOptions& options() const { return options_; }

  std::vector<FetchOutcome> fetch_logprobs(std::span<const std::string> prompts);
  std::vector<FetchOutcome> fetch_answers(std::span<const QaRequest> requests);

  std::size_t backend_calls() const { return backend_calls_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

  /// SHA-256 over the (hash, payload) pairs this scorer has served, sorted
  /// by hash; independent of timestamps and completion order.
  std::string cache_digest() const;

 private:
  template <class Req, class Call>
  std::vector<FetchOutcome> fetch(std::span<const Req> requests, Call&& call,
                                  const std::function<nlohmann::json(const Req&)>& options_of,
                                  const std::function<std::string(const Req&)>& prompt_of);

  BackendDescriptor backend_;
  std::shared_ptr<CompletionClient> client_;
  std::shared_ptr<ScoreCache> cache_;
  ScorerOptions options_;
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
  mutable std::mutex used_mu_;
  std::map<std::string, std::string> used_;  // request hash -> payload dump
};

TokenLogprobs token_logprobs_from_json(const nlohmann::json& payload);
nlohmann::json to_json(const TokenLogprobs& t);

/// Collapses echoed token logprobs for `text` (ending in `judgment`).
double reduce_logprobs(const TokenLogprobs& tokens, std::string_view text,
                       std::string_view judgment, ScoringMode mode);

/// Logprob of `prompt` from a fetched payload under `mode`.
double logprob_from_payload(const nlohmann::json& payload, const RenderedPrompt& prompt,
                            ScoringMode mode);

/// log P(final token | preceding tokens) for `text`, trailing period
/// stripped.
double last_token_logprob(Scorer& scorer, std::string_view text);

/// Logprob of a rendered statement under the scorer's mode.
double probe_logprob(Scorer& scorer, const RenderedPrompt& prompt);

/// log P(s+_T | s+_<T) - log P(s-_T | s-_<T).
double moral_score_pair(Scorer& scorer, const RenderedPrompt& positive,
                        const RenderedPrompt& negative);

/// Mean of moral_score_pair over all judgment pairs.
double moral_score(Scorer& scorer, std::string_view topic,
                   const std::optional<std::string>& country,
                   std::span<const JudgmentPair> pairs, const PromptTemplate& tmpl);

struct QaScore {
  double score = 0.0;
  std::size_t answered = 0;
  std::size_t format_errors = 0;
  std::vector<int> options;  // chosen option per parsed repeat
};

/// Option index 1..3 from a model answer: a leading option number, or an
/// option text matched case-insensitively at the start of the answer.
std::optional<int> parse_qa_answer(std::string_view answer, std::span<const std::string> options);

/// Mean over repeats of option 1 -> +1, 2 -> 0, 3 -> -1. Throws ScoringError
/// when no repeat is parseable.
QaScore qa_moral_score(Scorer& scorer, std::string_view topic, std::string_view country,
                       const DatasetId& dataset, int repeats = 5);

/// Reduces fetched QA answers; rethrows the first fetch failure.
QaScore qa_score_from(std::span<const FetchOutcome> answers, std::span<const std::string> options,
                      std::string_view what);

/// Averaging step shared with fixtures: options must be in 1..3.
double qa_option_mean(std::span<const int> options);

}  // namespace moralprobe
