// End-to-end acceptance checks. Prints one PASS/FAIL/SKIP line per check
// and exits non-zero when any check fails.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>

#include "cli_harness.hpp"
#include "fake_server.hpp"
#include "moralprobe/csv.hpp"
#include "moralprobe/finetune_prep.hpp"
#include "moralprobe/rng.hpp"
#include "moralprobe/scoring/direction.hpp"
#include "moralprobe/scoring/mock_client.hpp"
#include "moralprobe/scoring/scorer.hpp"
#include "moralprobe/stats.hpp"
#include "moralprobe/analysis.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

using namespace moralprobe;
namespace syn = moralprobe::testing;
using syn::CliHarness;

namespace {

enum class Outcome { kPass, kFail, kSkip };

struct Verdict {
  Outcome outcome = Outcome::kPass;
  std::string detail;
};

// Collects failures inside one check without stopping at the first.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  Verdict verdict(std::string summary) const {
    if (failed_ == 0) return {Outcome::kPass, std::move(summary)};
    std::string d = fmt::format("{} failure(s): ", failed_);
    for (std::size_t i = 0; i < failures_.size(); ++i) d += (i ? "; " : "") + failures_[i];
    return {Outcome::kFail, d};
  }

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Row `label` of a report CSV: {r_or_u, p, n, direction, stars}.
std::optional<std::vector<std::string>> report_row(const std::filesystem::path& path,
                                                   const std::string& label) {
  const auto t = csv::Table::read(path);
  for (const auto& row : t.rows())
    if (row.fields[t.column("label")] == label)
      return std::vector<std::string>(row.fields.begin() + 3, row.fields.end());
  return std::nullopt;
}

Verdict stats_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  CounterRng root(2024);
  double worst_r = 0.0, worst_p = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    CounterRng rng = root.split(static_cast<std::uint64_t>(trial));
    const std::size_t n = 5 + rng.below(496);
    const double rho = 2.0 * rng.uniform() - 1.0;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = rho * x[i] + std::sqrt(1.0 - rho * rho) * rng.normal();
    }
    const auto got = stats::pearson(x, y);
    const double r = oracle::pearson_r(x, y);
    const double p = oracle::pearson_p(r, n);
    worst_r = std::max(worst_r, std::abs(got.r - r));
    worst_p = std::max(worst_p, std::abs(got.p - p));
    c.expect(std::abs(got.r - r) <= 1e-9, fmt::format("r mismatch at n={}", n));
    c.expect(std::abs(got.p - p) <= 1e-6, fmt::format("p mismatch at n={}", n));
  }

  std::size_t mw_cases = 0;
  for (std::size_t n1 = 1; n1 <= 11; ++n1) {
    for (std::size_t n2 = 1; n1 + n2 <= 12; ++n2) {
      for (int rep = 0; rep < 6; ++rep) {
        CounterRng rng = root.split(fmt::format("mw/{}/{}/{}", n1, n2, rep));
        std::vector<double> a(n1), b(n2);
        // Even reps draw from a small alphabet to force ties.
        auto draw = [&] { return rep % 2 ? rng.normal() : static_cast<double>(rng.below(4)); };
        for (auto& v : a) v = draw();
        for (auto& v : b) v = draw() + (rep >= 4 ? 1.0 : 0.0);
        const auto got = stats::mann_whitney_u(a, b, stats::PValueMethod::kExact);
        const double want = oracle::mann_whitney_enumerated_p(a, b);
        c.expect(got.p_raw == want,
                 fmt::format("exact p {} != enumeration {} (n1={}, n2={})", got.p_raw, want, n1, n2));
        ++mw_cases;
      }
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, fmt::format("took {:.2f}s", secs));
  return c.verdict(fmt::format("max |dr| {:.2e}, max |dp| {:.2e}, {} exact rank cases, {:.2f}s",
                               worst_r, worst_p, mw_cases, secs));
}

Verdict mock_perfect_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  syn::TempDir dir;
  CliHarness cli(dir.path());
  cli.write("wvs.csv", syn::survey_csv(syn::synthetic_records(syn::wvs_shape(31, 3))));
  std::string grouping = "country,group\n";
  for (const auto& country : syn::country_names(55))
    grouping += country + "," + (country < "Country 12" ? "Rich West" : "Other") + "\n";
  cli.write("store/groupings/rich-west.csv", grouping);

  auto step = [&](std::vector<std::string> args) {
    const auto r = cli.run(std::move(args));
    c.expect(r.code == 0, "exit " + std::to_string(r.code) + ": " + r.err);
    return r;
  };
  step({"ingest", "--dataset", "wvs", "--input", cli.path("wvs.csv").string()});
  step({"probe", "--backend", "mock-perfect", "--dataset", "wvs"});
  step({"eval", "fine-grained", "--dataset", "wvs"});
  step({"eval", "diversity", "--dataset", "wvs"});
  step({"eval", "clusters", "--dataset", "wvs", "--grouping", "rich-west"});
  const auto bias = step({"eval", "bias-topics", "--dataset", "wvs", "--grouping", "rich-west",
                          "--group", "Other"});
  const auto bias_rw = step({"eval", "bias-topics", "--dataset", "wvs", "--grouping",
                             "rich-west", "--group", "Rich West"});

  std::string summary;
  auto check_r = [&](const std::string& file, const std::string& label, bool stars) {
    const auto row = report_row(cli.out(file), label);
    if (!row) {
      c.expect(false, file + " has no row " + label);
      return;
    }
    const double r = std::stod((*row)[0]);
    c.expect(std::abs(r - 1.0) <= 1e-9, fmt::format("{} {}: r = {}", file, label, (*row)[0]));
    if (stars) c.expect((*row)[4] == "***", file + " stars " + (*row)[4]);
    summary += fmt::format("{}:{} r={} ", file.substr(0, file.find('.')), label, (*row)[0]);
  };
  check_r("fine_grained.csv", "all", true);
  check_r("diversity.csv", "all", false);
  check_r("cluster_rich-west.csv", "Rich West", false);
  check_r("cluster_rich-west.csv", "Other", false);
  c.expect(bias.out.find("significant topics: none") != std::string::npos, "bias flagged topics (Other)");
  c.expect(bias_rw.out.find("significant topics: none") != std::string::npos,
           "bias flagged topics (Rich West)");
  const double secs = seconds_since(t0);
  c.expect(secs < 30.0, fmt::format("took {:.2f}s", secs));
  return c.verdict(summary + fmt::format("bias: none flagged, {:.2f}s", secs));
}

Verdict normalization_endpoints() {
  Checker c;
  c.expect(normalize_rating(DatasetId::wvs(), 1) == -1.0, "WVS 1");
  c.expect(normalize_rating(DatasetId::wvs(), 10) == 1.0, "WVS 10");
  c.expect(normalize_rating(DatasetId::pew(), 1) == -1.0, "PEW 1");
  c.expect(normalize_rating(DatasetId::pew(), 2) == 0.0, "PEW 2");
  c.expect(normalize_rating(DatasetId::pew(), 3) == 1.0, "PEW 3");
  return c.verdict("WVS 1->-1, 10->+1; PEW 1,2,3 -> -1,0,+1 (exact)");
}

Verdict label_table() {
  Checker c;
  const std::vector<std::pair<int, std::string>> wvs{
      {1, "never justifiable"},    {2, "not justifiable"},      {3, "not justifiable"},
      {4, "not justifiable"},      {5, "somewhat justifiable"}, {6, "somewhat justifiable"},
      {7, "justifiable"},          {8, "justifiable"},          {9, "justifiable"},
      {10, "always justifiable"}};
  const std::vector<std::pair<int, std::string>> pew{
      {1, "morally unacceptable"}, {2, "not a moral issue"}, {3, "morally acceptable"}};
  for (const auto& [raw, label] : wvs)
    c.expect(map_rating_to_label(DatasetId::wvs(), raw) == label, fmt::format("WVS {}", raw));
  for (const auto& [raw, label] : pew)
    c.expect(map_rating_to_label(DatasetId::pew(), raw) == label, fmt::format("PEW {}", raw));
  return c.verdict("10 WVS and 3 PEW ratings match the label table");
}

Verdict partition_counts() {
  Checker c;
  const auto wvs = build_corpus(syn::synthetic_records(syn::wvs_shape(5, 100)), 100, 5);
  c.expect(wvs.pair_counts.size() == 1028, fmt::format("{} WVS pairs", wvs.pair_counts.size()));
  const auto random = partition(wvs, PartitionStrategy::kRandomPairs, 0.2, 7);
  std::size_t train_utts = 0;
  for (const auto& [k, n] : wvs.pair_counts)
    if (random.train_pairs.count(k)) train_utts += n;
  c.expect(train_utts == 82200, fmt::format("{} train utterances", train_utts));
  c.expect(random.eval_pairs.size() == 206, fmt::format("{} eval pairs", random.eval_pairs.size()));
  syn::TempDir dir;
  const auto files = emit_training_files(wvs, random, aggregate_pairs(syn::synthetic_records(syn::wvs_shape(5, 1))),
                                         dir.path());
  c.expect(files.train_lines == 82200, fmt::format("{} dataset lines", files.train_lines));

  const auto pew = build_corpus(syn::synthetic_records(syn::pew_shape(5, 3)), 100, 5);
  struct Want {
    const FinetuneCorpus* corpus;
    PartitionStrategy s;
    std::size_t held;
    const char* what;
  };
  for (const auto& w : {Want{&wvs, PartitionStrategy::kCountryBased, 11, "WVS countries"},
                        Want{&wvs, PartitionStrategy::kTopicBased, 4, "WVS topics"},
                        Want{&pew, PartitionStrategy::kCountryBased, 8, "PEW countries"},
                        Want{&pew, PartitionStrategy::kTopicBased, 2, "PEW topics"}}) {
    const auto plan = partition(*w.corpus, w.s, 0.2, 7);
    c.expect(plan.held_out.size() == w.held, fmt::format("{}: {}", w.what, plan.held_out.size()));
  }

  std::size_t plans = 0;
  for (const auto* corpus : {&wvs, &pew}) {
    std::set<PairKey> all;
    for (const auto& [k, _] : corpus->pair_counts) all.insert(k);
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
      for (auto s : {PartitionStrategy::kRandomPairs, PartitionStrategy::kCountryBased,
                     PartitionStrategy::kTopicBased}) {
        const auto plan = partition(*corpus, s, 0.2, seed);
        std::set<PairKey> joined = plan.train_pairs;
        joined.insert(plan.eval_pairs.begin(), plan.eval_pairs.end());
        bool disjoint = true;
        for (const auto& p : plan.eval_pairs) disjoint &= plan.train_pairs.count(p) == 0;
        c.expect(joined == all && disjoint, fmt::format("seed {} not a partition", seed));
        ++plans;
      }
    }
  }
  return c.verdict(fmt::format(
      "82200 train utterances, 206 eval pairs, held out 11/4 (WVS) and 8/2 (PEW), {} plans "
      "partition cleanly", plans));
}

Verdict score_contracts() {
  Checker c;
  const auto reg = TemplateRegistry::defaults();
  const auto& tmpl = reg.get("in-country");
  const auto pairs = default_judgment_pairs();
  BackendDescriptor d;
  d.model_id = "mock";
  d.fixture_path = "memory";
  CounterRng root(66);
  double worst_anti = 0.0, worst_perm = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    CounterRng rng = root.split(static_cast<std::uint64_t>(trial));
    const std::string topic = fmt::format("topic {}", trial), country = "Country X";
    auto client = std::make_shared<MockClient>();
    for (const auto& p : pairs) {
      client->set_logprob(scoring_text(render_statement(tmpl, topic, country, p.positive, Polarity::kPositive)),
                          -30.0 * rng.uniform());
      client->set_logprob(scoring_text(render_statement(tmpl, topic, country, p.negative, Polarity::kNegative)),
                          -30.0 * rng.uniform());
    }
    Scorer scorer(d, client, nullptr);
    for (const auto& p : pairs) {
      const auto pos = render_statement(tmpl, topic, country, p.positive, Polarity::kPositive);
      const auto neg = render_statement(tmpl, topic, country, p.negative, Polarity::kNegative);
      worst_anti = std::max(worst_anti, std::abs(moral_score_pair(scorer, pos, neg) +
                                                 moral_score_pair(scorer, neg, pos)));
    }
    auto shuffled = pairs;
    rng.shuffle(std::span<JudgmentPair>(shuffled));
    worst_perm = std::max(worst_perm, std::abs(moral_score(scorer, topic, country, pairs, tmpl) -
                                               moral_score(scorer, topic, country, shuffled, tmpl)));
  }
  c.expect(worst_anti <= 1e-12, fmt::format("antisymmetry off by {}", worst_anti));
  c.expect(worst_perm <= 1e-12, fmt::format("pair order changes mean by {}", worst_perm));

  const std::vector<int> seq{1, 1, 2, 3, 1};
  const double by_hand = (1.0 + 1.0 + 0.0 - 1.0 + 1.0) / 5.0;
  c.expect(std::abs(qa_option_mean(seq) - by_hand) <= 1e-12, "QA mean of (1,1,2,3,1)");
  auto qa_client = std::make_shared<MockClient>();
  const auto prompt = render_qa("lying", "Chad", DatasetId::wvs());
  for (const char* a : {"1", "1", "2", "3", "1"}) qa_client->add_answer(prompt, a);
  BackendDescriptor qd = d;
  qd.kind = BackendKind::kQa;
  Scorer qa_scorer(qd, qa_client, nullptr);
  const double via_backend = qa_moral_score(qa_scorer, "lying", "Chad", DatasetId::wvs(), 5).score;
  c.expect(std::abs(via_backend - 0.4) <= 1e-12, fmt::format("QA via backend {}", via_backend));
  return c.verdict(fmt::format("100 fixtures: antisymmetry {:.1e}, permutation {:.1e}; QA (1,1,2,3,1) -> {}",
                               worst_anti, worst_perm, via_backend));
}

Verdict cache_determinism() {
  Checker c;
  syn::TempDir dir;
  CliHarness cli(dir.path());
  cli.write("wvs.csv", syn::survey_csv(syn::synthetic_records({DatasetId::wvs(), 6, 5, 2, 3, 9})));
  syn::FakeCompletionServer server;
  c.expect(cli.run({"ingest", "--dataset", "wvs", "--input", cli.path("wvs.csv").string()}).code == 0,
           "ingest");

  const std::vector<std::string> probe{"probe", "--backend", "logprob", "--endpoint", server.url(),
                                       "--model", "recording", "--dataset", "wvs"};
  const std::vector<std::string> eval{"eval", "fine-grained", "--dataset", "wvs"};
  const std::vector<std::string> files{"scores.csv", "cache_digest.txt", "fine_grained.csv",
                                       "fine_grained.md", "fine_grained.joined.csv",
                                       "fine_grained.provenance.json"};
  auto run_both = [&](const std::string& out, bool cache_only) {
    auto p = probe;
    p.insert(p.end(), {"--out", cli.path(out).string()});
    if (cache_only) p.push_back("--cache-only");
    auto e = eval;
    e.insert(e.end(), {"--out", cli.path(out).string()});
    const auto pr = cli.run(p);
    c.expect(pr.code == 0, out + " probe: " + pr.err);
    const auto er = cli.run(e);
    c.expect(er.code == 0, out + " eval: " + er.err);
    return pr.out;
  };
  run_both("cold", false);
  const std::size_t cold_requests = server.requests();
  c.expect(cold_requests > 0, "cold run sent nothing");
  const auto warm_out = run_both("warm", false);
  const auto offline_out = run_both("offline", true);
  c.expect(server.requests() == cold_requests,
           fmt::format("warm runs sent {} requests", server.requests() - cold_requests));
  c.expect(warm_out.find("network requests: 0\n") != std::string::npos, "warm run reported requests");
  for (const auto& f : files) {
    const auto cold = CliHarness::slurp(cli.path("cold") / f);
    c.expect(!cold.empty(), f + " empty");
    c.expect(CliHarness::slurp(cli.path("warm") / f) == cold, f + " differs (warm)");
    c.expect(CliHarness::slurp(cli.path("offline") / f) == cold, f + " differs (cache-only)");
  }
  return c.verdict(fmt::format("{} requests cold, 0 warm, {} report files byte-identical",
                               cold_requests, files.size()));
}

Verdict constructed_shift() {
  Checker c;
  const std::string target = "topic 07";
  std::string summary;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto empirical = syn::synthetic_pairs(syn::wvs_shape(seed, 3));
    const auto g = syn::split_grouping(syn::country_names(55), 27, "A", "B");
    std::vector<double> in_group;
    for (const auto& [k, s] : empirical.entries)
      if (k.topic == target && g.assignment.at(k.country) == "A") in_group.push_back(s.mean);
    const double sd = oracle::sample_sd(in_group);
    const auto scores = syn::scores_from(empirical, [&](const std::string& t, const std::string& country, double m) {
      return t == target && g.assignment.at(country) == "A" ? m + 5.0 * sd : m;
    });
    const auto report = eval_bias_topics(scores, empirical, g, "A");
    const auto sig = significant_topics(report);
    c.expect(sig == std::vector<std::string>{target},
             fmt::format("seed {}: flagged {}", seed, fmt::join(sig, ",")));
    const auto* row = report.find("A/" + target);
    const auto& rt = std::get<stats::RankTestResult>(row->result);
    c.expect(rt.direction == stats::Direction::kModelHigher, fmt::format("seed {}: direction", seed));
    if (seed == 1) summary = fmt::format("seed 1: p_corrected {:.2e}", rt.p_corrected);
  }
  return c.verdict("10 seeds flag exactly the shifted topic as model_higher; " + summary);
}

Verdict direction_fit() {
  Checker c;
  double worst_cos = 1.0, worst_oracle = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto planted = syn::planted_embeddings(500, 16, 10.0, seed);
    const auto dir = fit_moral_direction(planted.seeds);
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(planted.seeds.size()), 16);
    for (std::size_t i = 0; i < planted.seeds.size(); ++i)
      rows.row(static_cast<Eigen::Index>(i)) = planted.seeds[i].vector.transpose();
    Eigen::VectorXd ref = oracle::leading_axis(rows);
    if (ref.dot(dir.direction) < 0) ref = -ref;
    const double cos = std::abs(dir.direction.dot(planted.axis));
    worst_cos = std::min(worst_cos, cos);
    worst_oracle = std::max(worst_oracle, (dir.direction - ref).lpNorm<Eigen::Infinity>());
  }
  c.expect(worst_cos >= 0.99, fmt::format("|cos| {}", worst_cos));
  c.expect(worst_oracle <= 1e-6, fmt::format("oracle gap {}", worst_oracle));
  return c.verdict(fmt::format("10 seeds: min |cos| {:.4f}, max gap to eigensolver {:.1e}",
                               worst_cos, worst_oracle));
}

// Needs MORALPROBE_LIVE_ENDPOINT, MORALPROBE_LIVE_MODEL and
// MORALPROBE_LIVE_NORMS (a homogeneous statement CSV); MORALPROBE_LIVE_AUTH_ENV
// names the variable holding the key and MORALPROBE_LIVE_WVS optionally adds
// the full fine-grained probe.
Verdict live_mode() {
  const char* endpoint = std::getenv("MORALPROBE_LIVE_ENDPOINT");
  const char* model = std::getenv("MORALPROBE_LIVE_MODEL");
  const char* norms = std::getenv("MORALPROBE_LIVE_NORMS");
  if (!endpoint || !model || !norms)
    return {Outcome::kSkip, "set MORALPROBE_LIVE_ENDPOINT, MORALPROBE_LIVE_MODEL and "
                            "MORALPROBE_LIVE_NORMS to enable"};
  Checker c;
  syn::TempDir dir;
  CliHarness cli(dir.path());
  std::vector<std::string> backend{"--backend", "logprob", "--endpoint", endpoint, "--model", model};
  if (const char* auth = std::getenv("MORALPROBE_LIVE_AUTH_ENV"))
    backend.insert(backend.end(), {"--auth-env", auth});
  auto run = [&](std::vector<std::string> args, bool with_backend) {
    if (with_backend) args.insert(args.end(), backend.begin(), backend.end());
    const auto r = cli.run(args);
    c.expect(r.code == 0, args[0] + ": " + r.err);
    return r;
  };
  run({"ingest", "--dataset", "homogeneous", "--input", norms}, false);
  run({"probe", "--dataset", "homogeneous"}, true);
  run({"eval", "homogeneous", "--dataset", "homogeneous"}, false);
  std::string summary;
  if (const auto row = report_row(cli.out("homogeneous.csv"), "all")) {
    const double r = std::stod((*row)[0]);
    c.expect(r > 0.0, fmt::format("homogeneous r = {}", r));
    summary = fmt::format("homogeneous r = {:.3f}, n = {}", r, (*row)[2]);
  } else {
    c.expect(false, "no homogeneous report row");
  }
  if (const char* wvs = std::getenv("MORALPROBE_LIVE_WVS")) {
    run({"ingest", "--dataset", "wvs", "--input", wvs}, false);
    run({"probe", "--dataset", "wvs"}, true);
    run({"eval", "fine-grained", "--dataset", "wvs"}, false);
    const auto row = report_row(cli.out("fine_grained.csv"), "all");
    c.expect(row.has_value(), "no fine-grained report row");
    if (row) summary += fmt::format("; fine-grained r = {}, n = {}", (*row)[0], (*row)[2]);
  }
  return c.verdict(summary);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> checks{
      {"statistics oracle equivalence", stats_oracle},
      {"mock-perfect end to end", mock_perfect_end_to_end},
      {"normalization endpoints", normalization_endpoints},
      {"rating label table", label_table},
      {"partition counts", partition_counts},
      {"moral score contracts", score_contracts},
      {"cache determinism", cache_determinism},
      {"constructed-shift bias test", constructed_shift},
      {"moral direction fit", direction_fit},
      {"live backend", live_mode},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Verdict v;
    try {
      v = checks[i].second();
    } catch (const std::exception& e) {
      v = {Outcome::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.outcome == Outcome::kPass ? "PASS" : v.outcome == Outcome::kFail ? "FAIL" : "SKIP";
    if (v.outcome == Outcome::kFail) ++failed;
    std::cout << fmt::format("{:>2} {} {}: {}", i + 1, tag, checks[i].first, v.detail) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
