#include "moralprobe/scoring/cache.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"

namespace moralprobe {

namespace {

using json = nlohmann::json;

constexpr const char* kCacheFile = "score_cache.jsonl";

CacheRecord parse_record(const std::string& line, std::size_t line_no, const std::string& file) {
  try {
    const json j = json::parse(line);
    CacheRecord r;
    r.request_hash = j.at("request_hash").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.options = j.at("options");
    r.payload = j.at("payload");
    r.timestamp = j.value("timestamp", "");
    return r;
  } catch (const json::exception& e) {
    throw CacheError(file + ":" + std::to_string(line_no) + ": corrupt cache record: " + e.what());
  }
}

template <class Fn>
void for_each_line(const std::filesystem::path& file, Fn&& fn) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    fn(parse_record(line, line_no, file.string()), line_no);
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string request_hash(BackendKind kind, const std::string& model_id, const std::string& prompt,
                         const json& options) {
  const json canonical = {{"kind", std::string(to_string(kind))},
                          {"model_id", model_id},
                          {"prompt", prompt},
                          {"options", options}};
  return sha256_hex(canonical.dump());
}

ScoreCache::ScoreCache(std::filesystem::path dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create cache directory " + dir.string() + ": " + ec.message());
  file_ = dir / kCacheFile;
  load();
}

void ScoreCache::load() {
  for_each_line(file_, [&](CacheRecord r, std::size_t) {
    entries_.try_emplace(r.request_hash, std::move(r.payload));
  });
}

std::optional<json> ScoreCache::lookup(const std::string& hash) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(hash);
  if (it == entries_.end()) return std::nullopt;
  return std::optional<json>(std::in_place, it->second);
}

void ScoreCache::append(CacheRecord record) {
  if (record.timestamp.empty()) record.timestamp = utc_now();
  const json j = {{"request_hash", record.request_hash}, {"kind", record.kind},
                  {"model_id", record.model_id},         {"prompt", record.prompt},
                  {"options", record.options},           {"payload", record.payload},
                  {"timestamp", record.timestamp}};
  const std::string line = j.dump() + "\n";

  std::lock_guard lock(mu_);
  if (entries_.contains(record.request_hash)) return;
  const int fd = ::open(file_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw CacheError("cannot open " + file_.string() + ": " + std::strerror(errno));
  const ssize_t written = ::write(fd, line.data(), line.size());
  const int saved = errno;
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size()))
    throw CacheError("short write to " + file_.string() + ": " + std::strerror(saved));
  entries_.emplace(record.request_hash, std::move(record.payload));
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

CacheStats ScoreCache::stats() const {
  CacheStats s;
  std::unordered_map<std::string, int> seen;
  for_each_line(file_, [&](const CacheRecord& r, std::size_t) {
    ++s.records;
    if (seen[r.request_hash]++ == 0) {
      ++s.unique;
      ++s.by_kind[r.kind];
    } else {
      ++s.duplicates;
    }
  });
  return s;
}

CacheStats ScoreCache::verify() const {
  for_each_line(file_, [&](const CacheRecord& r, std::size_t line_no) {
    BackendKind kind;
    try {
      kind = parse_backend_kind(r.kind);
    } catch (const ConfigError&) {
      throw CacheError(file_.string() + ":" + std::to_string(line_no) + ": unknown kind '" +
                       r.kind + "'");
    }
    if (request_hash(kind, r.model_id, r.prompt, r.options) != r.request_hash)
      throw CacheError(file_.string() + ":" + std::to_string(line_no) +
                       ": request_hash does not match its request");
  });
  return stats();
}

}  // namespace moralprobe
