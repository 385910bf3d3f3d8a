#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace moralprobe {

enum class BackendKind { kLogprob, kQa, kEmbedding, kMock };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view s);

struct BackendDescriptor {
  BackendKind kind = BackendKind::kMock;
  std::string model_id;
  std::optional<std::string> endpoint;   // full completions URL for remote kinds
  std::optional<std::string> auth_env;   // name of the env var holding the API key
  std::optional<std::string> fixture_path;
  std::map<std::string, std::string> request_options;

  /// Throws ConfigError when required fields for `kind` are missing.
  void validate() const;
};

/// Per-token view of an echoed prompt. Entries with no logprob (the first
/// token of most providers) hold nullopt.
struct TokenLogprobs {
  std::vector<std::string> tokens;
  std::vector<std::optional<double>> logprobs;
  std::vector<std::size_t> offsets;
};

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.6;
  int max_tokens = 8;
  int repeat = 0;  // sample index; only meaningful for fixtures
};

/// Provider adapter. Implementations must be safe to call concurrently.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;

  /// Logprobs of every prompt token (echo mode, nothing generated).
  virtual TokenLogprobs echo_logprobs(const std::string& model, const std::string& prompt) = 0;

  /// Sampled continuation text.
  virtual std::string complete(const std::string& model, const CompletionRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_delay{500};
  std::chrono::milliseconds max_delay{20'000};
  double multiplier = 2.0;

  std::chrono::milliseconds delay_before(int attempt) const;  // attempt >= 1
};

}  // namespace moralprobe
