#include "moralprobe/scoring/score_table.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "moralprobe/csv.hpp"
#include "moralprobe/error.hpp"

namespace moralprobe {

namespace {

bool is_fatal(ErrorClass cls) {
  return cls == ErrorClass::kCache || cls == ErrorClass::kConfiguration;
}

void fail(ScoreEntry& e, const std::string& why, ErrorClass cls) {
  e.ok = false;
  e.error = why;
  e.error_class = cls;
}

void score_logprob_units(Scorer& scorer, const ScoringSetup& setup,
                         std::span<const ScoreUnit> units, MoralScoreTable& table) {
  if (setup.pairs.empty()) throw ConfigError("no judgment pairs configured");
  if (setup.tmpl.kind != TemplateKind::kStatement)
    throw ConfigError("template '" + setup.tmpl.id + "' is not a statement template");

  // Render everything first so the backend sees one deterministic batch.
  struct Rendered {
    std::vector<RenderedPrompt> prompts;
    std::string render_error;
  };
  std::vector<Rendered> rendered(units.size());
  std::vector<std::string> texts;
  for (std::size_t u = 0; u < units.size(); ++u) {
    try {
      for (std::size_t i = 0; i < setup.pairs.size(); ++i) {
        const int index = static_cast<int>(i) + 1;
        rendered[u].prompts.push_back(render_statement(setup.tmpl, units[u].topic, units[u].country,
                                                       setup.pairs[i].positive, Polarity::kPositive, index));
        rendered[u].prompts.push_back(render_statement(setup.tmpl, units[u].topic, units[u].country,
                                                       setup.pairs[i].negative, Polarity::kNegative, index));
      }
      for (const auto& p : rendered[u].prompts) texts.push_back(scoring_text(p));
    } catch (const RenderError& e) {
      rendered[u].prompts.clear();
      rendered[u].render_error = e.what();
    }
  }
  std::sort(texts.begin(), texts.end());
  texts.erase(std::unique(texts.begin(), texts.end()), texts.end());
  const auto outcomes = scorer.fetch_logprobs(texts);
  std::map<std::string, const FetchOutcome*> by_text;
  for (std::size_t i = 0; i < texts.size(); ++i) by_text.emplace(texts[i], &outcomes[i]);

  for (std::size_t u = 0; u < units.size(); ++u) {
    ScoreEntry entry;
    if (!rendered[u].render_error.empty()) {
      fail(entry, rendered[u].render_error, ErrorClass::kRender);
      table.entries[units[u]] = entry;
      continue;
    }
    try {
      const auto& prompts = rendered[u].prompts;
      std::vector<double> lp;
      for (const auto& p : prompts) {
        const auto* o = by_text.at(scoring_text(p));
        if (!o->ok()) throw Error(o->error_class, o->error);
        lp.push_back(logprob_from_payload(*o->payload, p, scorer.options().mode));
      }
      double sum = 0.0;
      for (std::size_t i = 0; i < lp.size(); i += 2) sum += lp[i] - lp[i + 1];
      entry.raw_score = sum / static_cast<double>(setup.pairs.size());
    } catch (const Error& e) {
      if (is_fatal(e.error_class())) throw;
      fail(entry, e.what(), e.error_class());
    }
    table.entries[units[u]] = entry;
  }
}

void score_qa_units(Scorer& scorer, const ScoringSetup& setup, std::span<const ScoreUnit> units,
                    MoralScoreTable& table) {
  if (setup.qa_repeats < 1) throw ConfigError("QA repeats must be >= 1");
  const auto options = qa_options(setup.dataset);
  // Every (prompt, repeat) goes out in one batch, then is reduced per unit.
  std::vector<QaRequest> requests;
  for (const auto& unit : units) {
    if (!unit.country) continue;
    const std::string prompt = render_qa(unit.topic, *unit.country, setup.dataset);
    for (int r = 0; r < setup.qa_repeats; ++r) requests.push_back({prompt, r});
  }
  const auto outcomes = scorer.fetch_answers(requests);
  for (const auto& o : outcomes)
    if (!o.ok() && is_fatal(o.error_class)) throw Error(o.error_class, o.error);

  std::size_t next = 0;
  const auto repeats = static_cast<std::size_t>(setup.qa_repeats);
  for (const auto& unit : units) {
    ScoreEntry entry;
    if (!unit.country) {
      fail(entry, "QA probing needs a country", ErrorClass::kValidation);
    } else {
      try {
        const auto qa = qa_score_from(std::span(outcomes).subspan(next, repeats), options,
                                      "'" + unit.topic + "' in '" + *unit.country + "'");
        entry.raw_score = qa.score;
        entry.format_errors = qa.format_errors;
      } catch (const Error& e) {
        if (is_fatal(e.error_class())) throw;
        fail(entry, e.what(), e.error_class());
      }
      next += repeats;
    }
    table.entries[unit] = entry;
  }
}

void score_embedding_units(const ScoringSetup& setup, std::span<const ScoreUnit> units,
                           MoralScoreTable& table) {
  if (!setup.direction || !setup.embeddings)
    throw ConfigError("embedding backend needs a fitted direction and an embedding table");
  for (const auto& unit : units) {
    ScoreEntry entry;
    try {
      const auto prompt = render_embedding(setup.tmpl, unit.topic, unit.country);
      const auto* v = setup.embeddings->find(prompt.text);
      if (v == nullptr) throw ScoringError("no embedding for '" + prompt.text + "'");
      entry.raw_score = embedding_score(*setup.direction, *v);
    } catch (const Error& e) {
      if (is_fatal(e.error_class())) throw;
      fail(entry, e.what(), e.error_class());
    }
    table.entries[unit] = entry;
  }
}

}  // namespace

std::size_t MoralScoreTable::failed() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                [](const auto& kv) { return !kv.second.ok; }));
}

std::optional<double> MoralScoreTable::raw(const ScoreUnit& unit) const {
  auto it = entries.find(unit);
  if (it == entries.end() || !it->second.ok) return std::nullopt;
  return it->second.raw_score;
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (range == 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = std::clamp(2.0 * (values[i] - *lo) / range - 1.0, -1.0, 1.0);
  return out;
}

void normalize_scores(MoralScoreTable& table) {
  std::vector<double> raw;
  for (const auto& [unit, e] : table.entries)
    if (e.ok) raw.push_back(e.raw_score);
  const auto norm = min_max_normalize(raw);
  std::size_t i = 0;
  for (auto& [unit, e] : table.entries) e.normalized_score = e.ok ? norm[i++] : 0.0;
}

MoralScoreTable score_units(Scorer& scorer, const ScoringSetup& setup,
                            std::span<const ScoreUnit> units) {
  MoralScoreTable table;
  table.backend_kind = std::string(to_string(scorer.backend().kind));
  table.model_id = scorer.backend().model_id;
  table.template_id = setup.tmpl.id;
  table.scoring_mode = std::string(to_string(scorer.options().mode));

  switch (scorer.backend().kind) {
    case BackendKind::kLogprob:
    case BackendKind::kMock:
      score_logprob_units(scorer, setup, units, table);
      break;
    case BackendKind::kQa:
      score_qa_units(scorer, setup, units, table);
      break;
    case BackendKind::kEmbedding:
      score_embedding_units(setup, units, table);
      break;
  }
  normalize_scores(table);
  table.cache_digest = scorer.cache_digest();
  return table;
}

MoralScoreTable score_grid(Scorer& scorer, const ScoringSetup& setup,
                           std::span<const std::string> topics,
                           const std::optional<std::vector<std::string>>& countries) {
  if (topics.empty()) throw ValidationError("score_grid: no topics");
  std::vector<ScoreUnit> units;
  for (const auto& topic : topics) {
    if (countries) {
      for (const auto& c : *countries) units.push_back({topic, c});
    } else {
      units.push_back({topic, std::nullopt});
    }
  }
  return score_units(scorer, setup, units);
}

void write_score_table(std::ostream& out, const MoralScoreTable& table) {
  out << "# backend=" << table.backend_kind << "\n"
      << "# model_id=" << table.model_id << "\n"
      << "# template_id=" << table.template_id << "\n"
      << "# scoring=" << table.scoring_mode << "\n"
      << "# cache_digest=" << table.cache_digest << "\n";
  csv::write_row(out, {"topic", "country", "raw_score", "normalized_score", "status"});
  for (const auto& [unit, e] : table.entries) {
    csv::write_row(out, {unit.topic, unit.country.value_or(""),
                         e.ok ? fmt::format("{:.17g}", e.raw_score) : "",
                         e.ok ? fmt::format("{:.17g}", e.normalized_score) : "",
                         e.ok ? "ok" : "failed: " + e.error});
  }
}

MoralScoreTable parse_score_table(std::string_view text, std::string source) {
  MoralScoreTable table;
  std::size_t skip = 0;
  while (skip < text.size() && text[skip] == '#') {
    const std::size_t eol = text.find('\n', skip);
    const std::string_view line = text.substr(skip + 2, (eol == std::string_view::npos ? text.size() : eol) - skip - 2);
    const auto eq = line.find('=');
    if (eq != std::string_view::npos) {
      const std::string key(line.substr(0, eq));
      std::string value(line.substr(eq + 1));
      if (!value.empty() && value.back() == '\r') value.pop_back();
      if (key == "backend") table.backend_kind = value;
      else if (key == "model_id") table.model_id = value;
      else if (key == "template_id") table.template_id = value;
      else if (key == "scoring") table.scoring_mode = value;
      else if (key == "cache_digest") table.cache_digest = value;
    }
    if (eol == std::string_view::npos) {
      skip = text.size();
      break;
    }
    skip = eol + 1;
  }
  // Keep line numbers meaningful by blanking rather than dropping the header lines.
  std::string body(skip, '\n');
  body.append(text.substr(skip));
  const auto t = csv::Table::parse(body, std::move(source));
  t.require_header({"topic", "country", "raw_score", "normalized_score", "status"});
  for (const auto& row : t.rows()) {
    ScoreUnit unit{row.fields[0], row.fields[1].empty() ? std::nullopt
                                                        : std::optional<std::string>(row.fields[1])};
    ScoreEntry e;
    if (row.fields[4] == "ok") {
      e.raw_score = csv::to_double(t, row, 2);
      e.normalized_score = csv::to_double(t, row, 3);
    } else {
      e.ok = false;
      const std::string& status = row.fields[4];
      e.error = status.rfind("failed: ", 0) == 0 ? status.substr(8) : status;
    }
    if (!table.entries.emplace(std::move(unit), e).second)
      throw ParseError(t.source(), row.line, "duplicate unit");
  }
  return table;
}

MoralScoreTable read_score_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_score_table(ss.str(), path.string());
}

}  // namespace moralprobe
