#pragma once

#include <atomic>
#include <string>

#include "moralprobe/scoring/backend.hpp"

namespace moralprobe {

/// Completions-style HTTP adapter. Logprob requests send
/// {"model","prompt","max_tokens":0,"echo":true,"logprobs":0,"temperature":0}
/// and read choices[0].logprobs.{tokens,token_logprobs,text_offset};
/// QA requests send {"model","prompt","max_tokens","temperature"} and read
/// choices[0].text. Transport failures, 429 and 5xx are retried with
/// exponential backoff.
class HttpCompletionClient final : public CompletionClient {
 public:
  HttpCompletionClient(std::string endpoint, std::string api_key, RetryPolicy retry = {},
                       int logprob_max_tokens = 0);

  TokenLogprobs echo_logprobs(const std::string& model, const std::string& prompt) override;
  std::string complete(const std::string& model, const CompletionRequest& request) override;

  std::size_t requests_sent() const { return requests_sent_.load(); }

 private:
  std::string post(const std::string& body);

  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::string api_key_;
  RetryPolicy retry_;
  int logprob_max_tokens_;
  std::atomic<std::size_t> requests_sent_{0};
};

/// Reads the key from the named environment variable; empty name -> "".
std::string resolve_api_key(const std::optional<std::string>& env_name);

}  // namespace moralprobe
