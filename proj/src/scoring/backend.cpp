#include "moralprobe/scoring/backend.hpp"

#include <algorithm>
#include <cmath>

#include "moralprobe/error.hpp"

namespace moralprobe {

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kLogprob: return "logprob";
    case BackendKind::kQa: return "qa";
    case BackendKind::kEmbedding: return "embedding";
    case BackendKind::kMock: return "mock";
  }
  return "?";
}

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "logprob") return BackendKind::kLogprob;
  if (s == "qa") return BackendKind::kQa;
  if (s == "embedding") return BackendKind::kEmbedding;
  if (s == "mock") return BackendKind::kMock;
  throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

void BackendDescriptor::validate() const {
  switch (kind) {
    case BackendKind::kLogprob:
    case BackendKind::kQa:
      if (!endpoint || endpoint->empty())
        throw ConfigError(std::string(to_string(kind)) + " backend requires an endpoint");
      if (model_id.empty())
        throw ConfigError(std::string(to_string(kind)) + " backend requires a model id");
      break;
    case BackendKind::kMock:
      if (!fixture_path || fixture_path->empty())
        throw ConfigError("mock backend requires a fixture table");
      break;
    case BackendKind::kEmbedding:
      if (!fixture_path || fixture_path->empty())
        throw ConfigError("embedding backend requires an embedding file");
      break;
  }
}

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  if (attempt <= 1) return std::chrono::milliseconds(0);
  const double scaled = static_cast<double>(initial_delay.count()) *
                        std::pow(multiplier, static_cast<double>(attempt - 2));
  return std::chrono::milliseconds(
      static_cast<long long>(std::min(scaled, static_cast<double>(max_delay.count()))));
}

}  // namespace moralprobe
