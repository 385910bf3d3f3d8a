#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moralprobe {

enum class DatasetKind { kWvs, kPew, kHomogeneous, kCustom };

/// Inclusive integer rating range of a custom survey.
struct RatingScale {
  int min = 0;
  int max = 0;
};

class DatasetId {
 public:
  static DatasetId wvs() { return DatasetId(DatasetKind::kWvs, "WVS"); }
  static DatasetId pew() { return DatasetId(DatasetKind::kPew, "PEW"); }
  static DatasetId homogeneous() { return DatasetId(DatasetKind::kHomogeneous, "HOMOGENEOUS"); }
  static DatasetId custom(std::string name, std::optional<RatingScale> scale = std::nullopt);

  /// Case-insensitive; anything but WVS/PEW/HOMOGENEOUS becomes a custom id
  /// with no known scale.
  static DatasetId parse(std::string_view name);

  DatasetKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const std::optional<RatingScale>& scale() const { return scale_; }

  /// Legal raw range for ordinal datasets; nullopt for HOMOGENEOUS and
  /// scale-less custom ids.
  std::optional<RatingScale> raw_range() const;

  bool operator==(const DatasetId& other) const {
    return kind_ == other.kind_ && name_ == other.name_;
  }

 private:
  DatasetId(DatasetKind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  DatasetKind kind_;
  std::string name_;
  std::optional<RatingScale> scale_;
};

/// One participant's rating of one topic in one country.
struct ResponseRecord {
  DatasetId dataset = DatasetId::wvs();
  std::string country;  // empty for HOMOGENEOUS
  std::string topic;    // the statement for HOMOGENEOUS
  double raw_rating = 0.0;
  double normalized_rating = 0.0;
};

struct PairKey {
  std::string topic;
  std::string country;

  auto operator<=>(const PairKey&) const = default;
};

struct PairStat {
  double mean = 0.0;
  std::size_t count = 0;
};

/// Empirical mean normalized rating per (topic, country). Missing pairs are
/// absent rather than zero.
struct PairMeanTable {
  DatasetId dataset = DatasetId::wvs();
  std::map<PairKey, PairStat> entries;

  std::set<std::string> topics() const;
  std::set<std::string> countries() const;
  std::optional<double> mean(const PairKey& key) const;
  std::size_t total_count() const;
};

/// Statement -> aggregated rating in [-1, 1].
struct HomogeneousNormsTable {
  std::map<std::string, double> entries;
};

struct CountryGrouping {
  std::string name;
  std::map<std::string, std::string> assignment;  // country -> group label
  std::set<std::string> labels;

  std::vector<std::string> countries_in(std::string_view label) const;
  /// Throws ValidationError naming every country without an assignment.
  void require_covers(const std::set<std::string>& countries) const;
};

/// Maps a raw rating onto [-1, 1]. WVS: (raw - 1) / 9 * 2 - 1 on 1..10;
/// PEW: 1, 2, 3 -> -1, 0, +1; custom scales are mapped affinely.
double normalize_rating(const DatasetId& dataset, double raw);

/// Reads the canonical long-format survey CSV (`dataset,country,topic,raw_rating`,
/// or `dataset,statement,rating` for HOMOGENEOUS).
std::vector<ResponseRecord> ingest_survey(const std::filesystem::path& path,
                                          const DatasetId& dataset);
std::vector<ResponseRecord> ingest_survey_text(std::string_view text,
                                               const DatasetId& dataset,
                                               std::string source = "<memory>");

PairMeanTable aggregate_pairs(std::span<const ResponseRecord> records);

/// Per topic, the unweighted mean of its per-country means.
std::map<std::string, double> aggregate_homogeneous(const PairMeanTable& table);

HomogeneousNormsTable homogeneous_norms(std::span<const ResponseRecord> records);

// Canonical serializations. Means are written with 17 significant digits so
// that a write/read cycle is exact.
void write_pair_means(std::ostream& out, const PairMeanTable& table);
PairMeanTable read_pair_means(const std::filesystem::path& path);
PairMeanTable parse_pair_means(std::string_view text, std::string source = "<memory>");
void write_records(std::ostream& out, std::span<const ResponseRecord> records);
void write_homogeneous(std::ostream& out, const HomogeneousNormsTable& table);

/// Grouping CSV with header `country,group`.
CountryGrouping read_grouping(const std::filesystem::path& path, std::string name);
CountryGrouping parse_grouping(std::string_view text, std::string name,
                               std::string source = "<memory>");

}  // namespace moralprobe
