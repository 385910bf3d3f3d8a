#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "moralprobe/scoring/backend.hpp"

namespace moralprobe {

struct CacheRecord {
  std::string request_hash;
  std::string kind;
  std::string model_id;
  std::string prompt;
  nlohmann::json options;
  nlohmann::json payload;
  std::string timestamp;
};

/// SHA-256 over the canonical JSON of (kind, model_id, prompt, options).
std::string request_hash(BackendKind kind, const std::string& model_id,
                         const std::string& prompt, const nlohmann::json& options);

struct CacheStats {
  std::size_t records = 0;      // lines in the file
  std::size_t unique = 0;       // distinct request hashes
  std::size_t duplicates = 0;   // lines shadowed by an earlier record
  std::map<std::string, std::size_t> by_kind;
};

/// Append-only JSON-lines score cache (`score_cache.jsonl` in `dir`).
/// Each record is written with a single O_APPEND write so concurrent
/// processes interleave whole lines; on load the first record for a hash
/// wins.
class ScoreCache {
 public:
  explicit ScoreCache(std::filesystem::path dir);

  std::optional<nlohmann::json> lookup(const std::string& hash) const;
  void append(CacheRecord record);

  const std::filesystem::path& file() const { return file_; }
  std::size_t size() const;

  /// Re-reads the file and recomputes every hash; throws CacheError on a
  /// malformed line or a hash that does not match its request.
  CacheStats verify() const;
  CacheStats stats() const;

 private:
  void load();

  std::filesystem::path file_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, nlohmann::json> entries_;
};

}  // namespace moralprobe
