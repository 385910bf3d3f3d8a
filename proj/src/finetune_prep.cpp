#include "moralprobe/finetune_prep.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "moralprobe/csv.hpp"
#include "moralprobe/prompt_factory.hpp"
#include "moralprobe/rng.hpp"

namespace moralprobe {
namespace {

// Guards against products like 0.2 * 320 landing just above an integer.
constexpr double kCountEpsilon = 1e-9;

std::string pair_label(const PairKey& k) { return k.topic + '\x1f' + k.country; }

int integral_rating(double raw) {
  const double r = std::round(raw);
  if (std::abs(r - raw) > 1e-9)
    throw ValidationError(fmt::format("rating {} is not an integer scale point", raw));
  return static_cast<int>(r);
}

template <class Key>
std::vector<Key> sample_sorted(const std::vector<Key>& pool, std::size_t k, CounterRng rng) {
  std::vector<Key> out;
  for (auto i : rng.sample_indices(pool.size(), k)) out.push_back(pool[i]);
  std::sort(out.begin(), out.end());
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::ordered_json pairs_json(const std::set<PairKey>& pairs) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : pairs) arr.push_back({p.topic, p.country});
  return arr;
}

std::set<PairKey> pairs_from_json(const nlohmann::json& arr) {
  std::set<PairKey> out;
  for (const auto& p : arr) out.insert({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
  return out;
}

PairMeanTable restrict(const PairMeanTable& table, const std::set<PairKey>& keys) {
  PairMeanTable out;
  out.dataset = table.dataset;
  for (const auto& k : keys) {
    auto it = table.entries.find(k);
    if (it != table.entries.end()) out.entries.emplace(k, it->second);
  }
  return out;
}

}  // namespace

std::string_view to_string(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::kRandomPairs: return "random_pairs";
    case PartitionStrategy::kCountryBased: return "country_based";
    case PartitionStrategy::kTopicBased: return "topic_based";
  }
  return "unknown";
}

PartitionStrategy parse_partition_strategy(std::string_view s) {
  if (s == "random_pairs" || s == "random") return PartitionStrategy::kRandomPairs;
  if (s == "country_based" || s == "country") return PartitionStrategy::kCountryBased;
  if (s == "topic_based" || s == "topic") return PartitionStrategy::kTopicBased;
  throw ConfigError(fmt::format("unknown partition strategy '{}'", s));
}

void PartitionPlan::validate(const std::set<PairKey>& all_pairs) const {
  for (const auto& p : eval_pairs)
    if (train_pairs.count(p))
      throw ValidationError(fmt::format("pair ({}, {}) is in both train and eval", p.topic,
                                        p.country));
  if (train_pairs.size() + eval_pairs.size() != all_pairs.size())
    throw ValidationError("partition does not cover every pair exactly once");
  for (const auto& p : all_pairs)
    if (!train_pairs.count(p) && !eval_pairs.count(p))
      throw ValidationError(fmt::format("pair ({}, {}) missing from partition", p.topic,
                                        p.country));
  if (strategy == PartitionStrategy::kRandomPairs) return;
  const std::set<std::string> held(held_out.begin(), held_out.end());
  const bool by_country = strategy == PartitionStrategy::kCountryBased;
  for (const auto& p : all_pairs) {
    const bool in_held = held.count(by_country ? p.country : p.topic) > 0;
    if (in_held != (eval_pairs.count(p) > 0))
      throw ValidationError(fmt::format("pair ({}, {}) violates the held-out constraint",
                                        p.topic, p.country));
  }
}

FinetuneCorpus build_corpus(std::span<const ResponseRecord> records, std::size_t quota,
                            std::uint64_t seed) {
  if (records.empty()) throw ValidationError("build_corpus: no records");
  if (quota == 0) throw ValidationError("build_corpus: quota must be positive");
  const DatasetId& dataset = records.front().dataset;
  if (dataset.kind() == DatasetKind::kHomogeneous)
    throw ValidationError("build_corpus: records need country and topic fields");

  std::map<PairKey, std::vector<std::size_t>> by_pair;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!(r.dataset == dataset))
      throw ValidationError("build_corpus: records mix datasets");
    by_pair[{r.topic, r.country}].push_back(i);
  }

  FinetuneCorpus corpus;
  corpus.dataset = dataset;
  corpus.per_pair_quota = quota;
  corpus.seed = seed;
  const CounterRng root = CounterRng(seed).split("corpus");
  for (const auto& [key, indices] : by_pair) {
    CounterRng rng = root.split(pair_label(key));
    auto chosen = rng.sample_indices(indices.size(), std::min(quota, indices.size()));
    std::sort(chosen.begin(), chosen.end());
    for (auto c : chosen) {
      const auto& r = records[indices[c]];
      const auto label = map_rating_to_label(dataset, integral_rating(r.raw_rating));
      corpus.utterances.push_back(
          {render_finetune(r.country, r.topic, label), r.country, r.topic, r.raw_rating});
    }
    corpus.pair_counts.emplace(key, chosen.size());
  }
  return corpus;
}

PartitionPlan partition(const FinetuneCorpus& corpus, PartitionStrategy strategy, double fraction,
                        std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValidationError(fmt::format("partition fraction {} is outside (0, 1)", fraction));
  if (corpus.pair_counts.empty()) throw ValidationError("partition: corpus has no pairs");

  PartitionPlan plan;
  plan.strategy = strategy;
  plan.fraction = fraction;
  plan.seed = seed;
  const CounterRng rng = CounterRng(seed).split("partition");

  std::vector<PairKey> pairs;
  std::set<std::string> countries, topics;
  for (const auto& [k, _] : corpus.pair_counts) {
    pairs.push_back(k);
    countries.insert(k.country);
    topics.insert(k.topic);
  }

  if (strategy == PartitionStrategy::kRandomPairs) {
    const auto k = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(pairs.size()) - kCountEpsilon));
    if (k >= pairs.size())
      throw ValidationError("partition: holdout would empty the training set");
    const auto eval = sample_sorted(pairs, k, rng);
    plan.eval_pairs.insert(eval.begin(), eval.end());
  } else {
    const bool by_country = strategy == PartitionStrategy::kCountryBased;
    const std::vector<std::string> pool =
        by_country ? std::vector<std::string>(countries.begin(), countries.end())
                   : std::vector<std::string>(topics.begin(), topics.end());
    const auto k = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(pool.size()) - kCountEpsilon));
    if (k == 0)
      throw ValidationError(fmt::format("partition: {} of {} {} rounds to zero held out",
                                        fraction, pool.size(),
                                        by_country ? "countries" : "topics"));
    if (k >= pool.size())
      throw ValidationError("partition: holdout would empty the training set");
    plan.held_out = sample_sorted(pool, k, rng);
    const std::set<std::string> held(plan.held_out.begin(), plan.held_out.end());
    for (const auto& p : pairs)
      if (held.count(by_country ? p.country : p.topic)) plan.eval_pairs.insert(p);
  }
  if (plan.eval_pairs.empty()) throw ValidationError("partition: empty evaluation set");
  for (const auto& p : pairs)
    if (!plan.eval_pairs.count(p)) plan.train_pairs.insert(p);
  if (plan.train_pairs.empty())
    throw ValidationError("partition: holdout would empty the training set");
  return plan;
}

std::string plan_json(const PartitionPlan& plan) {
  nlohmann::ordered_json j;
  j["strategy"] = std::string(to_string(plan.strategy));
  j["fraction"] = plan.fraction;
  j["seed"] = plan.seed;
  j["held_out"] = plan.held_out;
  j["train_pairs"] = pairs_json(plan.train_pairs);
  j["eval_pairs"] = pairs_json(plan.eval_pairs);
  return j.dump(1) + "\n";
}

PartitionPlan parse_plan_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    PartitionPlan plan;
    plan.strategy = parse_partition_strategy(j.at("strategy").get<std::string>());
    plan.fraction = j.at("fraction").get<double>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.held_out = j.at("held_out").get<std::vector<std::string>>();
    plan.train_pairs = pairs_from_json(j.at("train_pairs"));
    plan.eval_pairs = pairs_from_json(j.at("eval_pairs"));
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("plan", 0, e.what());
  }
}

PartitionPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_plan_json(ss.str());
}

std::string trainer_config_json(const TrainerConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["dataset_path"] = c.dataset_path;
  j["base_model_id"] = c.base_model_id;
  return j.dump(2) + "\n";
}

EmittedFiles emit_training_files(const FinetuneCorpus& corpus, const PartitionPlan& plan,
                                 const PairMeanTable& empirical,
                                 const std::filesystem::path& out_dir, TrainerConfig config) {
  std::set<PairKey> all;
  for (const auto& [k, _] : corpus.pair_counts) all.insert(k);
  plan.validate(all);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<const Utterance*> train;
  for (const auto& u : corpus.utterances)
    if (plan.train_pairs.count({u.topic, u.country})) train.push_back(&u);
  CounterRng shuffle_rng = CounterRng(plan.seed).split("shuffle");
  shuffle_rng.shuffle(std::span<const Utterance*>(train));

  EmittedFiles files;
  files.dataset = out_dir / "train.txt";
  files.manifest = out_dir / "eval_manifest.csv";
  files.config = out_dir / "trainer_config.json";
  files.plan = out_dir / "plan.json";
  files.train_lines = train.size();

  std::string dataset;
  for (const auto* u : train) {
    dataset += u->text;
    dataset += '\n';
  }
  write_file(files.dataset, dataset);

  std::ostringstream manifest;
  manifest << "topic,country,empirical_mean\n";
  for (const auto& p : plan.eval_pairs) {
    const auto mean = empirical.mean(p);
    if (!mean)
      throw ValidationError(fmt::format("eval pair ({}, {}) has no empirical mean", p.topic,
                                        p.country));
    csv::write_row(manifest, {p.topic, p.country, fmt::format("{:.17g}", *mean)});
  }
  write_file(files.manifest, manifest.str());

  // Relative to the config file, so emitted bytes do not depend on out_dir.
  if (config.dataset_path.empty()) config.dataset_path = files.dataset.filename().string();
  write_file(files.config, trainer_config_json(config));
  write_file(files.plan, plan_json(plan));
  return files;
}

EvalReport eval_finetuned(Scorer& scorer, const ScoringSetup& setup, const PartitionPlan& plan,
                          const PairMeanTable& empirical, const HomogeneousNormsTable* homogeneous,
                          const EvalReport* baseline) {
  if (plan.eval_pairs.empty()) throw ValidationError("fine-tuned evaluation: no eval pairs");
  const PairMeanTable eval_empirical = restrict(empirical, plan.eval_pairs);
  if (eval_empirical.entries.empty())
    throw ValidationError("fine-tuned evaluation: eval pairs have no empirical means");

  std::vector<ScoreUnit> units;
  for (const auto& p : plan.eval_pairs) units.push_back({p.topic, p.country});
  MoralScoreTable scores = score_units(scorer, setup, units);

  EvalReport report;
  report.kind = ReportKind::kFinetuneEval;
  {
    EvalReport fine = eval_fine_grained(scores, eval_empirical);
    report.provenance = fine.provenance;
    report.joined = fine.joined;
    report.notes = fine.notes;
    report.add_row({"fine_grained", "", fine.rows.front().result});
  }
  try {
    EvalReport div = eval_diversity(scores, eval_empirical);
    report.add_row({"diversity", "", div.rows.front().result});
  } catch (const ValidationError& e) {
    report.notes.push_back(fmt::format("diversity: {}", e.what()));
    report.add_row({"diversity", "", FlagRow{"too few eval topics", 0}});
  }

  if (homogeneous) {
    if (!setup.tmpl.country_optional() && setup.tmpl.kind != TemplateKind::kEmbedding) {
      report.notes.push_back(fmt::format(
          "homogeneous norms skipped: template '{}' requires a country", setup.tmpl.id));
    } else {
      std::vector<ScoreUnit> statements;
      for (const auto& [s, _] : homogeneous->entries) statements.push_back({s, std::nullopt});
      const MoralScoreTable hs = score_units(scorer, setup, statements);
      EvalReport h = eval_homogeneous(hs, *homogeneous);
      for (auto& n : h.notes) report.notes.push_back(std::move(n));
      report.add_row({"homogeneous_norms", "", h.rows.front().result});
    }
  }

  if (baseline) {
    std::vector<ReportRow> pre;
    for (const auto& row : report.rows)
      if (const auto* b = baseline->find(row.label))
        pre.push_back({row.label + "/pre", b->topic, b->result});
    for (auto& r : pre) report.add_row(std::move(r));
  }
  return report;
}

}  // namespace moralprobe
