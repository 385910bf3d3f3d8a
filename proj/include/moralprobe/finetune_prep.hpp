#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moralprobe/analysis.hpp"
#include "moralprobe/scoring/score_table.hpp"
#include "moralprobe/survey_data.hpp"

namespace moralprobe {

struct Utterance {
  std::string text;
  std::string country;
  std::string topic;
  double raw_rating = 0.0;
};

struct FinetuneCorpus {
  DatasetId dataset = DatasetId::wvs();
  std::vector<Utterance> utterances;  // grouped by pair, pairs in key order
  std::size_t per_pair_quota = 100;
  std::uint64_t seed = 0;
  std::map<PairKey, std::size_t> pair_counts;  // utterances per pair
};

enum class PartitionStrategy { kRandomPairs, kCountryBased, kTopicBased };

std::string_view to_string(PartitionStrategy s);
/// Accepts `random_pairs`/`random`, `country_based`/`country`, `topic_based`/`topic`.
PartitionStrategy parse_partition_strategy(std::string_view s);

struct PartitionPlan {
  PartitionStrategy strategy = PartitionStrategy::kRandomPairs;
  double fraction = 0.2;
  std::set<PairKey> train_pairs;
  std::set<PairKey> eval_pairs;
  std::vector<std::string> held_out;  // countries or topics; empty for random_pairs
  std::uint64_t seed = 0;

  /// Disjoint, exhaustive over `all_pairs`, and held-out constraints hold.
  void validate(const std::set<PairKey>& all_pairs) const;
};

struct TrainerConfig {
  int epochs = 1;
  int batch_size = 8;
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  std::string dataset_path;
  std::string base_model_id;
};

/// Per pair, a uniform subsample of min(quota, available) records rendered
/// as fine-tuning utterances. Pair p draws from substream (seed, "corpus", p).
FinetuneCorpus build_corpus(std::span<const ResponseRecord> records, std::size_t quota = 100,
                            std::uint64_t seed = 0);

/// random_pairs holds out ceil(fraction * pairs) pairs; country_based and
/// topic_based hold out round(fraction * count) countries or topics.
PartitionPlan partition(const FinetuneCorpus& corpus, PartitionStrategy strategy,
                        double fraction = 0.2, std::uint64_t seed = 0);

struct EmittedFiles {
  std::filesystem::path dataset;
  std::filesystem::path manifest;
  std::filesystem::path config;
  std::filesystem::path plan;
  std::size_t train_lines = 0;
};

/// Writes train.txt (train utterances, shuffled under the plan seed),
/// eval_manifest.csv, trainer_config.json and plan.json.
EmittedFiles emit_training_files(const FinetuneCorpus& corpus, const PartitionPlan& plan,
                                 const PairMeanTable& empirical,
                                 const std::filesystem::path& out_dir,
                                 TrainerConfig config = {});

std::string plan_json(const PartitionPlan& plan);
PartitionPlan parse_plan_json(std::string_view text);
PartitionPlan read_plan(const std::filesystem::path& path);
std::string trainer_config_json(const TrainerConfig& config);

/// Scores the plan's eval pairs with the fine-tuned model and reports the
/// fine-grained and diversity correlations over them, plus the
/// homogeneous-norms correlation when `homogeneous` is given. Rows of
/// `baseline` with matching labels are added as `<label>/pre`.
EvalReport eval_finetuned(Scorer& scorer, const ScoringSetup& setup, const PartitionPlan& plan,
                          const PairMeanTable& empirical,
                          const HomogeneousNormsTable* homogeneous = nullptr,
                          const EvalReport* baseline = nullptr);

}  // namespace moralprobe
