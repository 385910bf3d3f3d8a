#include "moralprobe/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>

#include "moralprobe/analysis.hpp"
#include "moralprobe/csv.hpp"
#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"
#include "moralprobe/finetune_prep.hpp"
#include "moralprobe/prompt_factory.hpp"
#include "moralprobe/report.hpp"
#include "moralprobe/scoring/cache.hpp"
#include "moralprobe/scoring/direction.hpp"
#include "moralprobe/scoring/http_client.hpp"
#include "moralprobe/scoring/mock_client.hpp"
#include "moralprobe/scoring/score_table.hpp"
#include "moralprobe/scoring/scorer.hpp"
#include "moralprobe/survey_data.hpp"

namespace moralprobe::cli {
namespace {

namespace fs = std::filesystem;

struct RunConfig {
  std::string store = "store";
  std::string dataset;
  std::string input;
  std::string scale;
  std::string grouping;
  std::string group;
  std::string backend = "mock";
  std::string model;
  std::string endpoint;
  std::string auth_env;
  std::string fixtures;
  std::string embeddings;
  std::string seed_embeddings;
  std::string template_id = "in-country";
  std::string templates_path;
  std::string judgment_pairs_path;
  std::string scoring = "last-token";
  bool homogeneous = false;
  std::uint64_t seed = 0;
  std::string cache_dir = ".moralprobe-cache";
  std::string out = "out";
  std::string scores;
  std::string norms;
  std::size_t concurrency = 4;
  bool cache_only = false;
  int qa_repeats = 5;
  std::string equalize;
  double alpha = 0.05;
  std::string strategy = "random";
  double fraction = 0.2;
  std::size_t quota = 100;
  std::string plan;
  std::string baseline_scores;
  std::string base_model;
  std::string field = "raw";
};

struct Context {
  RunConfig cfg;
  bool seed_given = false;
  std::ostream& out;
  std::ostream& err;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::uint64_t require_seed(const Context& ctx, std::string_view command) {
  if (!ctx.seed_given) throw ConfigError(fmt::format("{} needs --seed", command));
  return ctx.cfg.seed;
}

// ---- datasets ----------------------------------------------------------

fs::path store_dir(const RunConfig& c, const DatasetId& id) {
  return fs::path(c.store) / lower(id.name());
}

DatasetId dataset_id(const RunConfig& c) {
  if (c.dataset.empty()) throw ConfigError("--dataset is required");
  DatasetId id = DatasetId::parse(c.dataset);
  if (id.kind() != DatasetKind::kCustom) return id;
  if (!c.scale.empty()) {
    static const std::regex re(R"((-?\d+):(-?\d+))");
    std::smatch m;
    if (!std::regex_match(c.scale, m, re))
      throw ConfigError("--scale expects <min>:<max>, got '" + c.scale + "'");
    return DatasetId::custom(c.dataset, RatingScale{std::stoi(m[1]), std::stoi(m[2])});
  }
  const fs::path meta = store_dir(c, id) / "dataset.json";
  if (fs::is_regular_file(meta)) {
    const auto j = nlohmann::json::parse(read_file(meta));
    if (j.contains("scale"))
      return DatasetId::custom(c.dataset,
                               RatingScale{j["scale"].at(0).get<int>(), j["scale"].at(1).get<int>()});
  }
  return id;
}

struct Empirical {
  DatasetId id = DatasetId::wvs();
  std::optional<PairMeanTable> pairs;
  std::optional<HomogeneousNormsTable> norms;
  fs::path path;
  std::string bytes;
};

Empirical load_norms(const fs::path& path) {
  Empirical e;
  e.id = DatasetId::homogeneous();
  e.path = path;
  e.bytes = read_file(path);
  const auto records = ingest_survey_text(e.bytes, DatasetId::homogeneous(), path.string());
  e.norms = homogeneous_norms(records);
  return e;
}

Empirical load_empirical(const RunConfig& c) {
  if (c.dataset.empty()) throw ConfigError("--dataset is required");
  fs::path path = c.dataset;
  if (!fs::is_regular_file(path)) {
    const fs::path dir = fs::path(c.store) / lower(c.dataset);
    if (fs::is_regular_file(dir / "pairs.csv"))
      path = dir / "pairs.csv";
    else if (fs::is_regular_file(dir / "norms.csv"))
      path = dir / "norms.csv";
    else
      throw ConfigError(fmt::format("dataset '{}' is neither a file nor ingested under {}",
                                    c.dataset, dir.string()));
  }
  const std::string bytes = read_file(path);
  if (csv::Table::parse(bytes, path.string()).has_column("statement")) return load_norms(path);
  Empirical e;
  e.path = path;
  e.bytes = bytes;
  e.pairs = parse_pair_means(bytes, path.string());
  e.id = e.pairs->dataset;
  return e;
}

const PairMeanTable& require_pairs(const Empirical& e, std::string_view what) {
  if (!e.pairs)
    throw ConfigError(fmt::format("{} needs a topic-country dataset, got {}", what,
                                  e.path.string()));
  return *e.pairs;
}

struct Grouping {
  CountryGrouping grouping;
  std::string bytes;
};

Grouping load_grouping(const RunConfig& c) {
  if (c.grouping.empty()) throw ConfigError("--grouping is required");
  fs::path path = c.grouping;
  std::string name = path.stem().string();
  if (!fs::is_regular_file(path)) {
    path = fs::path(c.store) / "groupings" / (c.grouping + ".csv");
    name = c.grouping;
    if (!fs::is_regular_file(path))
      throw ConfigError(fmt::format("grouping '{}' is neither a file nor {}", c.grouping,
                                    path.string()));
  }
  Grouping g;
  g.bytes = read_file(path);
  g.grouping = parse_grouping(g.bytes, name, path.string());
  return g;
}

// ---- scoring -----------------------------------------------------------

TemplateRegistry registry(const RunConfig& c) {
  return c.templates_path.empty() ? TemplateRegistry::defaults()
                                  : TemplateRegistry::read(c.templates_path);
}

std::vector<JudgmentPair> judgment_pairs(const RunConfig& c) {
  return c.judgment_pairs_path.empty() ? default_judgment_pairs()
                                       : read_judgment_pairs(c.judgment_pairs_path);
}

// Adds fixtures under which every country-free statement scores its norm rating.
void add_perfect_norms(MockClient& client, const HomogeneousNormsTable& norms,
                       const PromptTemplate& tmpl, std::span<const JudgmentPair> pairs) {
  for (const auto& [statement, rating] : norms.entries) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const int index = static_cast<int>(i) + 1;
      client.set_logprob(scoring_text(render_statement(tmpl, statement, std::nullopt,
                                                       pairs[i].positive, Polarity::kPositive,
                                                       index)),
                         rating);
      client.set_logprob(scoring_text(render_statement(tmpl, statement, std::nullopt,
                                                       pairs[i].negative, Polarity::kNegative,
                                                       index)),
                         0.0);
    }
  }
}

struct Backend {
  std::unique_ptr<Scorer> scorer;
  ScoringSetup setup;
  std::shared_ptr<MockClient> mock;
  std::shared_ptr<HttpCompletionClient> http;

  std::size_t network_requests() const { return http ? http->requests_sent() : 0; }
};

Backend make_backend(const RunConfig& c, const Empirical* empirical) {
  const auto reg = registry(c);
  Backend b;
  b.setup.tmpl = reg.get(c.template_id);
  b.setup.pairs = judgment_pairs(c);
  b.setup.qa_repeats = c.qa_repeats;
  if (empirical && empirical->pairs) b.setup.dataset = empirical->id;

  BackendDescriptor desc;
  desc.model_id = c.model;
  if (!c.endpoint.empty()) desc.endpoint = c.endpoint;
  if (!c.auth_env.empty()) desc.auth_env = c.auth_env;
  if (!c.fixtures.empty()) desc.fixture_path = c.fixtures;
  std::shared_ptr<CompletionClient> client;

  if (c.backend == "mock-perfect") {
    if (!empirical) throw ConfigError("mock-perfect needs --dataset");
    desc.kind = BackendKind::kMock;
    desc.fixture_path = "perfect:" + empirical->path.string();
    if (desc.model_id.empty()) desc.model_id = "mock-perfect";
    if (empirical->pairs) {
      b.mock = std::make_shared<MockClient>(
          MockClient::from_pair_means(*empirical->pairs, b.setup.tmpl, b.setup.pairs));
    } else {
      b.mock = std::make_shared<MockClient>();
      add_perfect_norms(*b.mock, *empirical->norms, b.setup.tmpl, b.setup.pairs);
    }
    client = b.mock;
  } else if (c.backend == "mock" || c.backend == "mock-qa") {
    desc.kind = c.backend == "mock" ? BackendKind::kMock : BackendKind::kQa;
    if (c.fixtures.empty()) throw ConfigError(c.backend + " backend needs --fixtures");
    if (desc.model_id.empty()) desc.model_id = c.backend;
    b.mock = std::make_shared<MockClient>(MockClient::from_file(c.fixtures));
    client = b.mock;
  } else if (c.backend == "embedding") {
    desc.kind = BackendKind::kEmbedding;
    desc.fixture_path = c.embeddings;
    desc.validate();
    if (c.seed_embeddings.empty()) throw ConfigError("embedding backend needs --seed-embeddings");
    if (desc.model_id.empty()) desc.model_id = fs::path(c.embeddings).stem().string();
    const auto seeds = read_seed_embeddings(c.seed_embeddings);
    b.setup.direction = fit_moral_direction(seeds);
    b.setup.embeddings = std::make_shared<const EmbeddingTable>(EmbeddingTable::read(c.embeddings));
    b.mock = std::make_shared<MockClient>();
    client = b.mock;
  } else {
    desc.kind = parse_backend_kind(c.backend);
    desc.validate();
    b.http = std::make_shared<HttpCompletionClient>(*desc.endpoint, resolve_api_key(desc.auth_env));
    client = b.http;
  }

  ScorerOptions options;
  options.mode = parse_scoring_mode(c.scoring);
  options.concurrency = c.concurrency;
  options.cache_only = c.cache_only;
  auto cache = c.cache_dir.empty() ? nullptr : std::make_shared<ScoreCache>(c.cache_dir);
  b.scorer = std::make_unique<Scorer>(desc, client, cache, options);
  return b;
}

void report_failures(const MoralScoreTable& table, std::ostream& err) {
  std::map<std::string, std::size_t> reasons;
  for (const auto& [unit, e] : table.entries)
    if (!e.ok) ++reasons[e.error];
  std::size_t shown = 0;
  for (const auto& [why, n] : reasons) {
    if (shown++ == 5) {
      fmt::print(err, "  ... {} more distinct failures\n", reasons.size() - 5);
      break;
    }
    fmt::print(err, "  {} unit(s): {}\n", n, why);
  }
}

// Every unit failed: surface the most common failure class.
void throw_if_all_failed(const MoralScoreTable& table) {
  if (table.entries.empty() || table.failed() < table.entries.size()) return;
  std::map<ErrorClass, std::size_t> classes;
  for (const auto& [_, e] : table.entries) ++classes[e.error_class];
  const auto top = std::max_element(classes.begin(), classes.end(),
                                    [](auto& a, auto& b) { return a.second < b.second; });
  const auto& first = table.entries.begin()->second;
  throw Error(top->first, fmt::format("all {} units failed; first: {}", table.entries.size(),
                                      first.error));
}

EvalOptions eval_options(const RunConfig& c) {
  if (c.field == "raw") return {ScoreField::kRaw};
  if (c.field == "normalized") return {ScoreField::kNormalized};
  throw ConfigError("--field expects raw or normalized");
}

// ---- commands ----------------------------------------------------------

void cmd_ingest(Context& ctx) {
  const auto& c = ctx.cfg;
  if (c.input.empty()) throw ConfigError("ingest needs --input");
  const DatasetId id = dataset_id(c);
  const auto records = ingest_survey(c.input, id);
  const fs::path dir = store_dir(c, id);

  std::ostringstream responses;
  write_records(responses, records);
  write_file(dir / "responses.csv", responses.str());
  if (id.kind() == DatasetKind::kCustom && id.raw_range()) {
    nlohmann::ordered_json meta;
    meta["name"] = id.name();
    meta["scale"] = {id.raw_range()->min, id.raw_range()->max};
    write_file(dir / "dataset.json", meta.dump(2) + "\n");
  }

  if (id.kind() == DatasetKind::kHomogeneous) {
    const auto norms = homogeneous_norms(records);
    std::ostringstream os;
    write_homogeneous(os, norms);
    write_file(dir / "norms.csv", os.str());
    fmt::print(ctx.out, "{}: {} statements\n", id.name(), norms.entries.size());
    return;
  }
  const auto table = aggregate_pairs(records);
  std::ostringstream os;
  write_pair_means(os, table);
  write_file(dir / "pairs.csv", os.str());
  fmt::print(ctx.out, "{}: {} records, {} countries, {} topics\n", id.name(), records.size(),
             table.countries().size(), table.topics().size());
  fmt::print(ctx.out, "{} pairs\n", table.entries.size());
}

fs::path scores_path(const RunConfig& c) {
  return c.scores.empty() ? fs::path(c.out) / "scores.csv" : fs::path(c.scores);
}

void cmd_probe(Context& ctx) {
  const auto& c = ctx.cfg;
  const Empirical emp = load_empirical(c);
  Backend b = make_backend(c, &emp);

  std::vector<ScoreUnit> units;
  if (emp.norms) {
    for (const auto& [s, _] : emp.norms->entries) units.push_back({s, std::nullopt});
  } else if (c.homogeneous) {
    for (const auto& t : emp.pairs->topics()) units.push_back({t, std::nullopt});
  } else {
    for (const auto& [k, _] : emp.pairs->entries) units.push_back({k.topic, k.country});
  }
  MoralScoreTable table = score_units(*b.scorer, b.setup, units);

  std::ostringstream os;
  write_score_table(os, table);
  const fs::path path = scores_path(c);
  write_file(path, os.str());
  write_file(fs::path(c.out) / "cache_digest.txt", table.cache_digest + "\n");

  fmt::print(ctx.out, "scored {} units ({} failed) -> {}\n", table.entries.size(), table.failed(),
             path.string());
  fmt::print(ctx.out, "backend calls: {}\n", b.scorer->backend_calls());
  fmt::print(ctx.out, "cache hits: {}\n", b.scorer->cache_hits());
  if (b.http) fmt::print(ctx.out, "network requests: {}\n", b.network_requests());
  fmt::print(ctx.out, "cache digest: {}\n", table.cache_digest);
  if (table.failed() > 0) {
    fmt::print(ctx.err, "{} unit(s) failed:\n", table.failed());
    report_failures(table, ctx.err);
  }
  throw_if_all_failed(table);
}

std::string input_digest(const std::vector<std::pair<std::string, std::string>>& parts) {
  Sha256 h;
  for (const auto& [name, bytes] : parts) {
    h.update(name);
    h.update(std::string_view("\0", 1));
    h.update(std::to_string(bytes.size()));
    h.update(std::string_view("\0", 1));
    h.update(bytes);
  }
  return h.hex();
}

void emit_report(Context& ctx, const std::string& stem, EvalReport& report,
                 const std::vector<std::pair<std::string, std::string>>& inputs) {
  report.provenance.input_digest = input_digest(inputs);
  write_report_files(ctx.cfg.out, stem, report);
  for (const auto& row : report.rows)
    fmt::print(ctx.out, "{}: {}\n", row.label, describe_result(row.result));
  if (!report.notes.empty())
    fmt::print(ctx.err, "{} note(s), see {}.md\n", report.notes.size(),
               (fs::path(ctx.cfg.out) / stem).string());
  fmt::print(ctx.out, "report: {}\n", (fs::path(ctx.cfg.out) / (stem + ".csv")).string());
}

std::pair<std::size_t, std::size_t> parse_equalize(const std::string& s) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re))
    throw ConfigError("--equalize expects <sample_size>x<replicates>, got '" + s + "'");
  return {std::stoul(m[1]), std::stoul(m[2])};
}

void cmd_eval(Context& ctx, std::string_view which) {
  const auto& c = ctx.cfg;
  const fs::path spath = scores_path(c);
  const std::string sbytes = read_file(spath);
  const MoralScoreTable scores = parse_score_table(sbytes, spath.string());
  const Empirical emp = load_empirical(c);
  std::vector<std::pair<std::string, std::string>> inputs{{"scores", sbytes},
                                                          {"empirical", emp.bytes}};
  const EvalOptions opt = eval_options(c);

  if (which == "homogeneous") {
    EvalReport r = emp.norms ? eval_homogeneous(scores, *emp.norms, opt)
                             : eval_homogeneous(scores, *emp.pairs, opt);
    emit_report(ctx, "homogeneous", r, inputs);
    return;
  }
  const PairMeanTable& pairs = require_pairs(emp, which);
  if (which == "fine-grained") {
    EvalReport r = eval_fine_grained(scores, pairs, opt);
    emit_report(ctx, "fine_grained", r, inputs);
  } else if (which == "diversity") {
    EvalReport r = eval_diversity(scores, pairs, opt);
    emit_report(ctx, "diversity", r, inputs);
  } else if (which == "clusters") {
    const Grouping g = load_grouping(c);
    inputs.emplace_back("grouping", g.bytes);
    std::optional<EqualizeOptions> eq;
    if (!c.equalize.empty()) {
      const auto [size, reps] = parse_equalize(c.equalize);
      eq = EqualizeOptions{size, reps, c.alpha, require_seed(ctx, "eval clusters --equalize")};
    }
    EvalReport r = eval_clusters(scores, pairs, g.grouping, eq, opt);
    emit_report(ctx, "cluster_" + g.grouping.name, r, inputs);
  } else if (which == "bias-topics") {
    const Grouping g = load_grouping(c);
    if (c.group.empty()) throw ConfigError("eval bias-topics needs --group");
    inputs.emplace_back("grouping", g.bytes);
    EvalReport r = eval_bias_topics(scores, pairs, g.grouping, c.group, opt);
    std::string stem = "bias_topics_" + g.grouping.name + "_" + c.group;
    std::replace_if(stem.begin(), stem.end(),
                    [](char ch) { return !std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-'; },
                    '_');
    emit_report(ctx, stem, r, inputs);
    const auto sig = significant_topics(r, c.alpha);
    fmt::print(ctx.out, "significant topics: {}\n",
               sig.empty() ? std::string("none") : fmt::format("{}", fmt::join(sig, ", ")));
  } else {
    throw ConfigError(fmt::format("unknown evaluation '{}'", which));
  }
}

std::vector<ResponseRecord> load_records(const RunConfig& c) {
  const DatasetId id = dataset_id(c);
  const fs::path path = c.input.empty() ? store_dir(c, id) / "responses.csv" : fs::path(c.input);
  if (!fs::is_regular_file(path))
    throw ConfigError(fmt::format("no survey records at {}; run ingest or pass --input",
                                  path.string()));
  return ingest_survey(path, id);
}

void cmd_finetune_prep(Context& ctx) {
  const auto& c = ctx.cfg;
  const std::uint64_t seed = require_seed(ctx, "finetune prep");
  const auto records = load_records(c);
  const auto corpus = build_corpus(records, c.quota, seed);
  const auto plan = partition(corpus, parse_partition_strategy(c.strategy), c.fraction, seed);
  const auto empirical = aggregate_pairs(records);
  TrainerConfig config;
  config.base_model_id = c.base_model;
  const auto files = emit_training_files(corpus, plan, empirical, c.out, config);

  fmt::print(ctx.out, "strategy: {}\n", to_string(plan.strategy));
  fmt::print(ctx.out, "train utterances: {}\n", files.train_lines);
  fmt::print(ctx.out, "train pairs: {}\n", plan.train_pairs.size());
  fmt::print(ctx.out, "eval pairs: {}\n", plan.eval_pairs.size());
  if (!plan.held_out.empty())
    fmt::print(ctx.out, "held out ({}): {}\n", plan.held_out.size(),
               fmt::join(plan.held_out, ", "));
  fmt::print(ctx.out, "dataset: {}\n", files.dataset.string());
}

PairMeanTable restrict_pairs(const PairMeanTable& t, const std::set<PairKey>& keys) {
  PairMeanTable out;
  out.dataset = t.dataset;
  for (const auto& [k, v] : t.entries)
    if (keys.count(k)) out.entries.emplace(k, v);
  return out;
}

void cmd_finetune_eval(Context& ctx) {
  const auto& c = ctx.cfg;
  const fs::path plan_path = c.plan.empty() ? fs::path(c.out) / "plan.json" : fs::path(c.plan);
  const std::string plan_bytes = read_file(plan_path);
  const PartitionPlan plan = parse_plan_json(plan_bytes);
  const Empirical emp = load_empirical(c);
  const PairMeanTable& pairs = require_pairs(emp, "finetune eval");
  std::vector<std::pair<std::string, std::string>> inputs{{"plan", plan_bytes},
                                                          {"empirical", emp.bytes}};

  std::optional<Empirical> norms;
  if (!c.norms.empty()) {
    norms = load_norms(c.norms);
    inputs.emplace_back("norms", norms->bytes);
  }

  // The mock-perfect fixture must also cover the norm statements.
  Backend b = make_backend(c, &emp);
  if (c.backend == "mock-perfect" && norms)
    add_perfect_norms(*b.mock, *norms->norms, b.setup.tmpl, b.setup.pairs);

  std::optional<EvalReport> baseline;
  if (!c.baseline_scores.empty()) {
    const std::string bytes = read_file(c.baseline_scores);
    inputs.emplace_back("baseline", bytes);
    const MoralScoreTable all = parse_score_table(bytes, c.baseline_scores);
    MoralScoreTable paired = all, country_free = all;
    std::erase_if(paired.entries, [](const auto& e) { return !e.first.country; });
    std::erase_if(country_free.entries, [](const auto& e) { return e.first.country.has_value(); });
    const PairMeanTable eval_pairs = restrict_pairs(pairs, plan.eval_pairs);
    EvalReport base;
    base.add_row({"fine_grained", "", eval_fine_grained(paired, eval_pairs).rows.front().result});
    try {
      base.add_row({"diversity", "", eval_diversity(paired, eval_pairs).rows.front().result});
    } catch (const ValidationError&) {
    }
    if (norms && !country_free.entries.empty())
      base.add_row({"homogeneous_norms", "",
                    eval_homogeneous(country_free, *norms->norms).rows.front().result});
    baseline = std::move(base);
  }

  EvalReport r = eval_finetuned(*b.scorer, b.setup, plan, pairs, norms ? &*norms->norms : nullptr,
                                baseline ? &*baseline : nullptr);
  emit_report(ctx, "finetune_eval", r, inputs);
  fmt::print(ctx.out, "backend calls: {}\n", b.scorer->backend_calls());
  fmt::print(ctx.out, "cache hits: {}\n", b.scorer->cache_hits());
}

void cmd_cache(Context& ctx, std::string_view which) {
  if (ctx.cfg.cache_dir.empty()) throw ConfigError("--cache-dir is required");
  const ScoreCache cache(ctx.cfg.cache_dir);
  const CacheStats s = which == "verify" ? cache.verify() : cache.stats();
  fmt::print(ctx.out, "cache: {}\n", cache.file().string());
  fmt::print(ctx.out, "records: {}\nunique: {}\nduplicates: {}\n", s.records, s.unique,
             s.duplicates);
  for (const auto& [kind, n] : s.by_kind) fmt::print(ctx.out, "  {}: {}\n", kind, n);
  if (which == "verify") fmt::print(ctx.out, "cache ok\n");
}

void add_options(CLI::App& app, RunConfig& c, CLI::Option*& seed_opt) {
  app.set_config("--config", "", "TOML file with option values");
  seed_opt = app.add_option("--seed", c.seed, "Seed for every stochastic step");
  app.add_option("--cache-dir", c.cache_dir, "Score cache directory")->capture_default_str();
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--concurrency", c.concurrency, "Parallel backend requests")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--backend", c.backend,
                 "logprob | qa | embedding | mock | mock-qa | mock-perfect")
      ->capture_default_str();
  app.add_option("--template", c.template_id, "Prompt template id")->capture_default_str();
  app.add_option("--dataset", c.dataset, "Dataset id (wvs, pew, homogeneous, ...) or file");
  app.add_option("--grouping", c.grouping, "Grouping name under <store>/groupings or file");
  app.add_flag("--cache-only", c.cache_only, "Fail instead of calling the backend on a miss");

  app.add_option("--store", c.store, "Canonical dataset store")->capture_default_str();
  app.add_option("--input", c.input, "Raw survey CSV");
  app.add_option("--scale", c.scale, "Rating scale <min>:<max> for a custom dataset");
  app.add_option("--group", c.group, "Group label for bias-topics");
  app.add_option("--model", c.model, "Backend model id");
  app.add_option("--endpoint", c.endpoint, "Completions endpoint URL");
  app.add_option("--auth-env", c.auth_env, "Environment variable holding the API key");
  app.add_option("--fixtures", c.fixtures, "Mock fixture table");
  app.add_option("--embeddings", c.embeddings, "Statement embedding table");
  app.add_option("--seed-embeddings", c.seed_embeddings, "Polarity seed embeddings");
  app.add_option("--templates", c.templates_path, "Template registry JSON");
  app.add_option("--judgment-pairs", c.judgment_pairs_path, "Judgment pair CSV");
  app.add_option("--scoring", c.scoring, "last-token | phrase-sum")->capture_default_str();
  app.add_flag("--homogeneous", c.homogeneous, "Probe topics without a country");
  app.add_option("--scores", c.scores, "Score table (default <out>/scores.csv)");
  app.add_option("--norms", c.norms, "Homogeneous norms table for finetune eval");
  app.add_option("--qa-repeats", c.qa_repeats, "Samples per QA prompt")->capture_default_str();
  app.add_option("--equalize", c.equalize, "Equal-size resampling <size>x<replicates>");
  app.add_option("--alpha", c.alpha, "Significance level")->capture_default_str();
  app.add_option("--strategy", c.strategy, "random | country | topic")->capture_default_str();
  app.add_option("--fraction", c.fraction, "Held-out fraction")->capture_default_str();
  app.add_option("--quota", c.quota, "Utterances per pair")->capture_default_str();
  app.add_option("--plan", c.plan, "Partition plan (default <out>/plan.json)");
  app.add_option("--baseline-scores", c.baseline_scores, "Pre-fine-tuning score table");
  app.add_option("--base-model", c.base_model, "Base model id for the trainer config");
  app.add_option("--field", c.field, "raw | normalized")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probe language models for cross-cultural moral norms"};
  app.name("moralprobe");
  app.fallthrough();
  app.require_subcommand(1);

  Context ctx{RunConfig{}, false, out, err};
  CLI::Option* seed_opt = nullptr;
  add_options(app, ctx.cfg, seed_opt);

  auto* ingest = app.add_subcommand("ingest", "Validate a survey CSV into the dataset store");
  auto* probe = app.add_subcommand("probe", "Score every pair of a dataset");
  auto* eval = app.add_subcommand("eval", "Correlate scores with survey data");
  eval->require_subcommand(1);
  std::vector<CLI::App*> evals;
  for (const char* name : {"homogeneous", "fine-grained", "clusters", "bias-topics", "diversity"})
    evals.push_back(eval->add_subcommand(name));
  auto* finetune = app.add_subcommand("finetune", "Fine-tuning corpora and evaluation");
  finetune->require_subcommand(1);
  auto* ft_prep = finetune->add_subcommand("prep", "Build corpus, partition and trainer files");
  auto* ft_eval = finetune->add_subcommand("eval", "Evaluate a fine-tuned model on eval pairs");
  auto* cache = app.add_subcommand("cache", "Inspect the score cache");
  cache->require_subcommand(1);
  auto* cache_stats = cache->add_subcommand("stats");
  auto* cache_verify = cache->add_subcommand("verify");

  std::vector<const char*> argv{"moralprobe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code_for(ErrorClass::kValidation);
  }
  ctx.seed_given = seed_opt->count() > 0;

  std::string command;
  for (const auto* sub : app.get_subcommands()) {
    command = sub->get_name();
    for (const auto* leaf : sub->get_subcommands()) command += "-" + leaf->get_name();
  }

  try {
    const std::string config = app.config_to_str(true, false);
    write_file(fs::path(ctx.cfg.out) / fmt::format("run_config.{}.toml", command), config);
    fmt::print(err, "command: {}\nseed: {}\n", command,
               ctx.seed_given ? std::to_string(ctx.cfg.seed) : std::string("unset"));

    if (*ingest) {
      cmd_ingest(ctx);
    } else if (*probe) {
      cmd_probe(ctx);
    } else if (*eval) {
      for (auto* e : evals)
        if (*e) cmd_eval(ctx, e->get_name());
    } else if (*ft_prep) {
      cmd_finetune_prep(ctx);
    } else if (*ft_eval) {
      cmd_finetune_eval(ctx);
    } else if (*cache_stats) {
      cmd_cache(ctx, "stats");
    } else if (*cache_verify) {
      cmd_cache(ctx, "verify");
    }
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return exit_code_for(e.error_class());
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return exit_code_for(ErrorClass::kIo);
  }
  return 0;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace moralprobe::cli
