#include "moralprobe/scoring/http_client.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <regex>
#include <thread>

#include "moralprobe/error.hpp"

namespace moralprobe {

namespace {

using json = nlohmann::json;

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string resolve_api_key(const std::optional<std::string>& env_name) {
  if (!env_name || env_name->empty()) return "";
  const char* value = std::getenv(env_name->c_str());
  if (value == nullptr)
    throw ConfigError("credential environment variable '" + *env_name + "' is not set");
  return value;
}

HttpCompletionClient::HttpCompletionClient(std::string endpoint, std::string api_key,
                                           RetryPolicy retry, int logprob_max_tokens)
    : api_key_(std::move(api_key)), retry_(retry), logprob_max_tokens_(logprob_max_tokens) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint, m, kUrl))
    throw ConfigError("endpoint is not an http(s) URL: '" + endpoint + "'");
  base_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/completions";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (base_.rfind("https://", 0) == 0)
    throw ConfigError("built without TLS support; cannot reach " + base_);
#endif
}

std::string HttpCompletionClient::post(const std::string& body) {
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(retry_.delay_before(attempt));
    httplib::Client client(base_);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    ++requests_sent_;
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    if (!retryable(res->status)) break;
  }
  throw TransportError(base_ + path_ + ": " + last_error);
}

TokenLogprobs HttpCompletionClient::echo_logprobs(const std::string& model,
                                                  const std::string& prompt) {
  const json request = {{"model", model},          {"prompt", prompt},
                        {"max_tokens", logprob_max_tokens_}, {"echo", true},
                        {"logprobs", 0},           {"temperature", 0}};
  json response;
  try {
    response = json::parse(post(request.dump()));
  } catch (const json::parse_error& e) {
    throw ResponseFormatError(std::string("completions response is not JSON: ") + e.what());
  }
  try {
    const auto& choice = response.at("choices").at(0);
    if (!choice.contains("logprobs") || choice["logprobs"].is_null() ||
        !choice["logprobs"].contains("token_logprobs"))
      throw CapabilityError("backend returned no token logprobs for model '" + model + "'");
    const auto& lp = choice.at("logprobs");
    TokenLogprobs out;
    const auto& tokens = lp.at("tokens");
    const auto& values = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    if (tokens.size() != values.size() || tokens.size() != offsets.size())
      throw ResponseFormatError("logprob arrays differ in length");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto offset = offsets[i].get<std::size_t>();
      // Anything generated past the echoed prompt is not part of the probe.
      if (offset >= prompt.size()) break;
      out.tokens.push_back(tokens[i].get<std::string>());
      out.offsets.push_back(offset);
      if (values[i].is_null())
        out.logprobs.emplace_back(std::nullopt);
      else
        out.logprobs.emplace_back(values[i].get<double>());
    }
    if (out.tokens.empty()) throw CapabilityError("backend echoed no prompt tokens");
    return out;
  } catch (const json::exception& e) {
    throw ResponseFormatError(std::string("unexpected completions response: ") + e.what());
  }
}

std::string HttpCompletionClient::complete(const std::string& model,
                                           const CompletionRequest& request) {
  const json body = {{"model", model},
                     {"prompt", request.prompt},
                     {"max_tokens", request.max_tokens},
                     {"temperature", request.temperature}};
  try {
    const json response = json::parse(post(body.dump()));
    return response.at("choices").at(0).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw ResponseFormatError(std::string("unexpected completions response: ") + e.what());
  }
}

}  // namespace moralprobe
