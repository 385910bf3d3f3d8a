#include "moralprobe/survey_data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>

#include "moralprobe/csv.hpp"
#include "moralprobe/error.hpp"

namespace moralprobe {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool is_integral(double v) { return std::floor(v) == v; }

std::string format_violations(const std::string& source,
                              const std::vector<std::string>& violations) {
  std::string msg = source + ": " + std::to_string(violations.size()) + " invalid row(s)";
  const std::size_t shown = std::min<std::size_t>(violations.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + violations[i];
  if (shown < violations.size())
    msg += "\n  ... " + std::to_string(violations.size() - shown) + " more";
  return msg;
}

std::vector<ResponseRecord> parse_ordinal(const csv::Table& table, const DatasetId& dataset) {
  table.require_header({"dataset", "country", "topic", "raw_rating"});
  const auto range = dataset.raw_range();
  if (!range) throw ConfigError("no rating scale known for dataset '" + dataset.name() + "'");

  std::vector<ResponseRecord> records;
  records.reserve(table.rows().size());
  std::vector<std::string> violations;
  for (const auto& row : table.rows()) {
    const auto& f = row.fields;
    const std::string where = "line " + std::to_string(row.line);
    if (upper(f[0]) != upper(dataset.name())) {
      violations.push_back(where + ": dataset '" + f[0] + "' does not match '" +
                           dataset.name() + "'");
      continue;
    }
    if (f[1].empty() || f[2].empty()) {
      violations.push_back(where + ": empty country or topic");
      continue;
    }
    const long long raw = csv::to_integer(table, row, 3);
    if (raw < range->min || raw > range->max) {
      violations.push_back(where + ": raw_rating " + std::to_string(raw) +
                           " outside [" + std::to_string(range->min) + ", " +
                           std::to_string(range->max) + "]");
      continue;
    }
    const double value = static_cast<double>(raw);
    records.push_back({dataset, f[1], f[2], value, normalize_rating(dataset, value)});
  }
  if (!violations.empty()) throw ValidationError(format_violations(table.source(), violations));
  return records;
}

std::vector<ResponseRecord> parse_homogeneous(const csv::Table& table) {
  table.require_header({"dataset", "statement", "rating"});
  std::vector<ResponseRecord> records;
  std::vector<std::string> violations;
  for (const auto& row : table.rows()) {
    const std::string where = "line " + std::to_string(row.line);
    if (upper(row.fields[0]) != "HOMOGENEOUS") {
      violations.push_back(where + ": dataset '" + row.fields[0] + "' is not HOMOGENEOUS");
      continue;
    }
    if (row.fields[1].empty()) {
      violations.push_back(where + ": empty statement");
      continue;
    }
    const double rating = csv::to_double(table, row, 2);
    if (!(rating >= -1.0 && rating <= 1.0)) {
      violations.push_back(where + ": rating " + row.fields[2] + " outside [-1, 1]");
      continue;
    }
    records.push_back({DatasetId::homogeneous(), "", row.fields[1], rating, rating});
  }
  if (!violations.empty()) throw ValidationError(format_violations(table.source(), violations));
  return records;
}

std::vector<ResponseRecord> parse_survey(const csv::Table& table, const DatasetId& dataset) {
  if (dataset.kind() == DatasetKind::kHomogeneous) return parse_homogeneous(table);
  return parse_ordinal(table, dataset);
}

}  // namespace

DatasetId DatasetId::custom(std::string name, std::optional<RatingScale> scale) {
  if (name.empty()) throw ConfigError("empty dataset id");
  DatasetId id(DatasetKind::kCustom, std::move(name));
  if (scale && scale->max <= scale->min)
    throw ConfigError("custom rating scale needs max > min");
  id.scale_ = scale;
  return id;
}

DatasetId DatasetId::parse(std::string_view name) {
  const std::string u = upper(name);
  if (u == "WVS") return wvs();
  if (u == "PEW") return pew();
  if (u == "HOMOGENEOUS") return homogeneous();
  return custom(std::string(name));
}

std::optional<RatingScale> DatasetId::raw_range() const {
  switch (kind_) {
    case DatasetKind::kWvs:
      return RatingScale{1, 10};
    case DatasetKind::kPew:
      return RatingScale{1, 3};
    case DatasetKind::kHomogeneous:
      return std::nullopt;
    case DatasetKind::kCustom:
      return scale_;
  }
  return std::nullopt;
}

std::set<std::string> PairMeanTable::topics() const {
  std::set<std::string> out;
  for (const auto& [key, stat] : entries) out.insert(key.topic);
  return out;
}

std::set<std::string> PairMeanTable::countries() const {
  std::set<std::string> out;
  for (const auto& [key, stat] : entries) out.insert(key.country);
  return out;
}

std::optional<double> PairMeanTable::mean(const PairKey& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) return std::nullopt;
  return it->second.mean;
}

std::size_t PairMeanTable::total_count() const {
  std::size_t n = 0;
  for (const auto& [key, stat] : entries) n += stat.count;
  return n;
}

std::vector<std::string> CountryGrouping::countries_in(std::string_view label) const {
  std::vector<std::string> out;
  for (const auto& [country, group] : assignment)
    if (group == label) out.push_back(country);
  return out;
}

void CountryGrouping::require_covers(const std::set<std::string>& countries) const {
  std::vector<std::string> missing;
  for (const auto& c : countries)
    if (!assignment.contains(c)) missing.push_back(c);
  if (missing.empty()) return;
  std::string msg = "grouping '" + name + "' does not assign:";
  for (const auto& c : missing) msg += " '" + c + "'";
  throw ValidationError(msg);
}

double normalize_rating(const DatasetId& dataset, double raw) {
  switch (dataset.kind()) {
    case DatasetKind::kWvs:
      if (!is_integral(raw) || raw < 1 || raw > 10)
        throw ValidationError(fmt::format("WVS rating {} outside 1..10", raw));
      return (2.0 * (raw - 1.0) - 9.0) / 9.0;
    case DatasetKind::kPew:
      if (!is_integral(raw) || raw < 1 || raw > 3)
        throw ValidationError(fmt::format("PEW rating {} outside 1..3", raw));
      return raw - 2.0;
    case DatasetKind::kHomogeneous:
      if (!(raw >= -1.0 && raw <= 1.0))
        throw ValidationError(fmt::format("homogeneous rating {} outside [-1, 1]", raw));
      return raw;
    case DatasetKind::kCustom: {
      const auto& scale = dataset.scale();
      if (!scale) throw ConfigError("no rating scale known for dataset '" + dataset.name() + "'");
      if (!is_integral(raw) || raw < scale->min || raw > scale->max)
        throw ValidationError(fmt::format("{} rating {} outside {}..{}", dataset.name(), raw,
                                          scale->min, scale->max));
      const double span = scale->max - scale->min;
      return (2.0 * (raw - scale->min) - span) / span;
    }
  }
  throw ConfigError("unknown dataset kind");
}

std::vector<ResponseRecord> ingest_survey(const std::filesystem::path& path,
                                          const DatasetId& dataset) {
  if (dataset.kind() == DatasetKind::kCustom && !dataset.scale())
    throw ConfigError("no rating scale known for dataset '" + dataset.name() + "'");
  return parse_survey(csv::Table::read(path), dataset);
}

std::vector<ResponseRecord> ingest_survey_text(std::string_view text, const DatasetId& dataset,
                                               std::string source) {
  if (dataset.kind() == DatasetKind::kCustom && !dataset.scale())
    throw ConfigError("no rating scale known for dataset '" + dataset.name() + "'");
  return parse_survey(csv::Table::parse(text, std::move(source)), dataset);
}

PairMeanTable aggregate_pairs(std::span<const ResponseRecord> records) {
  if (records.empty()) throw ValidationError("aggregate_pairs: no records");
  PairMeanTable table;
  table.dataset = records.front().dataset;

  std::map<PairKey, std::vector<double>> grouped;
  for (const auto& r : records) {
    if (!(r.dataset == table.dataset))
      throw ValidationError("aggregate_pairs: mixed datasets '" + table.dataset.name() +
                            "' and '" + r.dataset.name() + "'");
    grouped[{r.topic, r.country}].push_back(r.normalized_rating);
  }
  for (auto& [key, values] : grouped) {
    // Sorted summation makes the mean independent of record order.
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    table.entries.emplace(key, PairStat{sum / static_cast<double>(values.size()), values.size()});
  }
  return table;
}

std::map<std::string, double> aggregate_homogeneous(const PairMeanTable& table) {
  if (table.entries.empty()) throw ValidationError("aggregate_homogeneous: empty table");
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& [key, stat] : table.entries) {
    auto& [sum, n] = acc[key.topic];
    sum += stat.mean;
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [topic, sn] : acc) out[topic] = sn.first / static_cast<double>(sn.second);
  return out;
}

HomogeneousNormsTable homogeneous_norms(std::span<const ResponseRecord> records) {
  HomogeneousNormsTable table;
  for (const auto& r : records) {
    if (!table.entries.emplace(r.topic, r.normalized_rating).second)
      throw ValidationError("duplicate homogeneous statement '" + r.topic + "'");
  }
  return table;
}

void write_pair_means(std::ostream& out, const PairMeanTable& table) {
  csv::write_row(out, {"dataset", "topic", "country", "mean", "count"});
  for (const auto& [key, stat] : table.entries) {
    csv::write_row(out, {table.dataset.name(), key.topic, key.country,
                         fmt::format("{:.17g}", stat.mean), std::to_string(stat.count)});
  }
}

namespace {

PairMeanTable pair_means_from(const csv::Table& t) {
  t.require_header({"dataset", "topic", "country", "mean", "count"});
  if (t.rows().empty()) throw ParseError(t.source(), 1, "no pairs");
  PairMeanTable table;
  table.dataset = DatasetId::parse(t.rows().front().fields[0]);
  for (const auto& row : t.rows()) {
    if (!(DatasetId::parse(row.fields[0]) == table.dataset))
      throw ParseError(t.source(), row.line, "mixed datasets");
    const double mean = csv::to_double(t, row, 3);
    const long long count = csv::to_integer(t, row, 4);
    if (!(mean >= -1.0 && mean <= 1.0) || count < 1)
      throw ParseError(t.source(), row.line, "mean outside [-1, 1] or count < 1");
    PairKey key{row.fields[1], row.fields[2]};
    if (!table.entries.emplace(key, PairStat{mean, static_cast<std::size_t>(count)}).second)
      throw ParseError(t.source(), row.line, "duplicate pair");
  }
  return table;
}

}  // namespace

PairMeanTable read_pair_means(const std::filesystem::path& path) {
  return pair_means_from(csv::Table::read(path));
}

PairMeanTable parse_pair_means(std::string_view text, std::string source) {
  return pair_means_from(csv::Table::parse(text, std::move(source)));
}

void write_records(std::ostream& out, std::span<const ResponseRecord> records) {
  if (!records.empty() && records.front().dataset.kind() == DatasetKind::kHomogeneous) {
    csv::write_row(out, {"dataset", "statement", "rating"});
    for (const auto& r : records)
      csv::write_row(out, {r.dataset.name(), r.topic, fmt::format("{:.17g}", r.raw_rating)});
    return;
  }
  csv::write_row(out, {"dataset", "country", "topic", "raw_rating"});
  for (const auto& r : records)
    csv::write_row(out, {r.dataset.name(), r.country, r.topic,
                         fmt::format("{:.17g}", r.raw_rating)});
}

void write_homogeneous(std::ostream& out, const HomogeneousNormsTable& table) {
  csv::write_row(out, {"dataset", "statement", "rating"});
  for (const auto& [statement, rating] : table.entries)
    csv::write_row(out, {"HOMOGENEOUS", statement, fmt::format("{:.17g}", rating)});
}

namespace {

CountryGrouping grouping_from(const csv::Table& t, std::string name) {
  t.require_header({"country", "group"});
  CountryGrouping g;
  g.name = std::move(name);
  for (const auto& row : t.rows()) {
    if (row.fields[0].empty() || row.fields[1].empty())
      throw ParseError(t.source(), row.line, "empty country or group");
    if (!g.assignment.emplace(row.fields[0], row.fields[1]).second)
      throw ParseError(t.source(), row.line, "country '" + row.fields[0] + "' assigned twice");
    g.labels.insert(row.fields[1]);
  }
  if (g.labels.empty()) throw ParseError(t.source(), 1, "grouping has no rows");
  return g;
}

}  // namespace

CountryGrouping read_grouping(const std::filesystem::path& path, std::string name) {
  return grouping_from(csv::Table::read(path), std::move(name));
}

CountryGrouping parse_grouping(std::string_view text, std::string name, std::string source) {
  return grouping_from(csv::Table::parse(text, std::move(source)), std::move(name));
}

}  // namespace moralprobe
