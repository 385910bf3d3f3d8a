#include <gtest/gtest.h>

#include <sstream>

#include "moralprobe/scoring/cache.hpp"
#include "moralprobe/scoring/mock_client.hpp"
#include "moralprobe/scoring/score_table.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

using namespace moralprobe;

namespace {

const TemplateRegistry& registry() {
  static const auto reg = TemplateRegistry::defaults();
  return reg;
}

std::unique_ptr<Scorer> mock_scorer(std::shared_ptr<MockClient> client,
                                    BackendKind kind = BackendKind::kMock) {
  BackendDescriptor d;
  d.kind = kind;
  d.model_id = "mock";
  d.fixture_path = "memory";
  return std::make_unique<Scorer>(d, std::move(client), nullptr);
}

PairMeanTable small_table() {
  PairMeanTable t;
  t.entries[{"lying", "Chad"}] = {-0.8, 4};
  t.entries[{"lying", "Peru"}] = {-0.2, 4};
  t.entries[{"divorce", "Chad"}] = {0.1, 4};
  t.entries[{"divorce", "Peru"}] = {0.6, 4};
  return t;
}

}  // namespace

TEST(MinMaxNormalize, EndpointsAndConstant) {
  const std::vector<double> v{3.0, -1.0, 7.0, 1.0};
  const auto n = min_max_normalize(v);
  EXPECT_EQ(n[1], -1.0);
  EXPECT_EQ(n[2], 1.0);
  EXPECT_DOUBLE_EQ(n[0], 0.0);
  EXPECT_DOUBLE_EQ(n[3], -0.5);
  const std::vector<double> c{2.0, 2.0};
  EXPECT_EQ(min_max_normalize(c), (std::vector<double>{0.0, 0.0}));
  EXPECT_TRUE(min_max_normalize(std::vector<double>{}).empty());
}

TEST(MinMaxNormalize, InvariantUnderPositiveAffineMaps) {
  const std::vector<double> v{0.3, -2.5, 4.0, 1.75, 0.0};
  std::vector<double> w;
  for (double x : v) w.push_back(3.5 * x - 11.0);
  const auto a = min_max_normalize(v), b = min_max_normalize(w);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(ScoreTable, WriteParseRoundTripIsExact) {
  MoralScoreTable t;
  t.backend_kind = "mock";
  t.model_id = "m";
  t.template_id = "in-country";
  t.scoring_mode = "last-token";
  t.cache_digest = "abc";
  t.entries[{"lying", std::string("Chad")}] = {0.1 + 0.2, 0, true, "", ErrorClass::kScoring, 0};
  t.entries[{"lying", std::nullopt}] = {-1.0 / 3.0, 0, true, "", ErrorClass::kScoring, 0};
  ScoreEntry bad;
  bad.ok = false;
  bad.error = "no logprobs, at all";
  t.entries[{"divorce", std::string("Peru")}] = bad;
  normalize_scores(t);

  std::ostringstream os;
  write_score_table(os, t);
  const auto back = parse_score_table(os.str());
  EXPECT_EQ(back.backend_kind, "mock");
  EXPECT_EQ(back.cache_digest, "abc");
  EXPECT_EQ(back.scoring_mode, "last-token");
  ASSERT_EQ(back.entries.size(), 3u);
  for (const auto& [unit, e] : t.entries) {
    const auto& b = back.entries.at(unit);
    EXPECT_EQ(b.ok, e.ok);
    if (e.ok) {
      EXPECT_EQ(b.raw_score, e.raw_score);
      EXPECT_EQ(b.normalized_score, e.normalized_score);
    } else {
      EXPECT_EQ(b.error, e.error);
    }
  }
  EXPECT_EQ(back.failed(), 1u);
  EXPECT_FALSE(back.raw({"divorce", std::string("Peru")}));
}

TEST(ScoreTable, DuplicateUnitRejected) {
  const std::string text =
      "topic,country,raw_score,normalized_score,status\nx,A,1,1,ok\nx,A,2,1,ok\n";
  EXPECT_THROW(parse_score_table(text), ParseError);
}

TEST(ScoreUnits, PerfectMockReproducesMeans) {
  const auto table = small_table();
  auto client = std::make_shared<MockClient>(MockClient::from_pair_means(
      table, registry().get("in-country"), default_judgment_pairs()));
  auto scorer = mock_scorer(client);
  ScoringSetup setup;
  setup.tmpl = registry().get("in-country");
  std::vector<ScoreUnit> units;
  for (const auto& [k, s] : table.entries) units.push_back({k.topic, k.country});
  units.push_back({"lying", std::nullopt});
  const auto scores = score_units(*scorer, setup, units);
  EXPECT_EQ(scores.failed(), 0u);
  for (const auto& [k, s] : table.entries)
    EXPECT_NEAR(*scores.raw({k.topic, k.country}), s.mean, 1e-12);
  EXPECT_NEAR(*scores.raw({"lying", std::nullopt}), -0.5, 1e-12);
  EXPECT_EQ(scores.entries.at({"lying", std::string("Chad")}).normalized_score, -1.0);
  EXPECT_EQ(scores.entries.at({"divorce", std::string("Peru")}).normalized_score, 1.0);
  EXPECT_EQ(scores.template_id, "in-country");
  EXPECT_EQ(scores.backend_kind, "mock");
}

TEST(ScoreUnits, FailedUnitsExcludedFromNormalization) {
  auto table = small_table();
  auto client = std::make_shared<MockClient>(MockClient::from_pair_means(
      table, registry().get("in-country"), default_judgment_pairs()));
  auto scorer = mock_scorer(client);
  ScoringSetup setup;
  setup.tmpl = registry().get("in-country");
  const std::vector<ScoreUnit> units{{"lying", std::string("Chad")},
                                     {"lying", std::string("Peru")},
                                     {"lying", std::string("Mars")}};
  const auto scores = score_units(*scorer, setup, units);
  EXPECT_EQ(scores.failed(), 1u);
  const auto& missing = scores.entries.at({"lying", std::string("Mars")});
  EXPECT_EQ(missing.error_class, ErrorClass::kScoring);
  EXPECT_FALSE(missing.error.empty());
  EXPECT_EQ(scores.entries.at({"lying", std::string("Chad")}).normalized_score, -1.0);
  EXPECT_EQ(scores.entries.at({"lying", std::string("Peru")}).normalized_score, 1.0);
}

TEST(ScoreUnits, CountryRequiredTemplateFailsRender) {
  PromptTemplate strict{"strict", TemplateKind::kStatement,
                        "In [Country] [Topic] is [Moral judgement].", std::nullopt, {}};
  auto client = std::make_shared<MockClient>();
  auto scorer = mock_scorer(client);
  ScoringSetup setup;
  setup.tmpl = strict;
  const std::vector<ScoreUnit> units{{"lying", std::nullopt}};
  const auto scores = score_units(*scorer, setup, units);
  EXPECT_EQ(scores.entries.at(units[0]).error_class, ErrorClass::kRender);
  EXPECT_EQ(client->calls(), 0u);
}

TEST(ScoreUnits, WrongTemplateKindIsConfigError) {
  auto scorer = mock_scorer(std::make_shared<MockClient>());
  ScoringSetup setup;
  setup.tmpl = registry().get("sbert");
  const std::vector<ScoreUnit> units{{"lying", std::string("Chad")}};
  EXPECT_THROW(score_units(*scorer, setup, units), ConfigError);
}

TEST(ScoreUnits, QaBackend) {
  auto client = std::make_shared<MockClient>();
  const auto prompt = render_qa("lying", "Chad", DatasetId::wvs());
  for (const char* a : {"1", "1", "2", "3", "1"}) client->add_answer(prompt, a);
  auto scorer = mock_scorer(client, BackendKind::kQa);
  ScoringSetup setup;
  setup.tmpl = registry().get("qa-wvs");
  const std::vector<ScoreUnit> units{{"lying", std::string("Chad")}, {"lying", std::nullopt}};
  const auto scores = score_units(*scorer, setup, units);
  EXPECT_NEAR(*scores.raw(units[0]), 0.4, 1e-12);
  EXPECT_EQ(scores.entries.at(units[1]).error_class, ErrorClass::kValidation);
}

TEST(ScoreUnits, EmbeddingBackend) {
  auto emb = std::make_shared<EmbeddingTable>();
  emb->add("lying in Chad.", Eigen::Vector2d(2.0, 9.0));
  emb->add("lying.", Eigen::Vector2d(-1.0, 4.0));
  ScoringSetup setup;
  setup.tmpl = registry().get("sbert");
  setup.direction = MoralDirection{Eigen::Vector2d(1.0, 0.0), "x"};
  setup.embeddings = emb;
  auto scorer = mock_scorer(std::make_shared<MockClient>(), BackendKind::kEmbedding);
  const std::vector<ScoreUnit> units{{"lying", std::string("Chad")},
                                     {"lying", std::nullopt},
                                     {"lying", std::string("Peru")}};
  const auto scores = score_units(*scorer, setup, units);
  EXPECT_EQ(*scores.raw(units[0]), 2.0);
  EXPECT_EQ(*scores.raw(units[1]), -1.0);
  EXPECT_FALSE(scores.raw(units[2]));

  ScoringSetup bare;
  bare.tmpl = registry().get("sbert");
  EXPECT_THROW(score_units(*scorer, bare, units), ConfigError);
}

TEST(ScoreGrid, CartesianProduct) {
  PairMeanTable t;
  for (const char* c : {"A", "B", "C"})
    for (const char* topic : {"x", "y"}) t.entries[{topic, c}] = {0.25, 1};
  auto client = std::make_shared<MockClient>(MockClient::from_pair_means(
      t, registry().get("in-country"), default_judgment_pairs()));
  auto scorer = mock_scorer(client);
  ScoringSetup setup;
  setup.tmpl = registry().get("in-country");
  const std::vector<std::string> topics{"x", "y"};
  const auto grid = score_grid(*scorer, setup, topics, std::vector<std::string>{"A", "B", "C"});
  EXPECT_EQ(grid.entries.size(), 6u);
  const auto free = score_grid(*scorer, setup, topics, std::nullopt);
  EXPECT_EQ(free.entries.size(), 2u);
  EXPECT_THROW(score_grid(*scorer, setup, {}, std::nullopt), ValidationError);
}
