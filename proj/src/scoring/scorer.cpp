#include "moralprobe/scoring/scorer.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include "moralprobe/digest.hpp"

namespace moralprobe {

namespace {

using json = nlohmann::json;

std::string strip_period(std::string_view text) {
  while (!text.empty() && (text.back() == '.' || text.back() == ' ')) text.remove_suffix(1);
  return std::string(text);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

[[noreturn]] void rethrow(const FetchOutcome& o) { throw Error(o.error_class, o.error); }

json merged_options(json base, const std::map<std::string, std::string>& extra) {
  for (const auto& [k, v] : extra) base[k] = v;
  return base;
}

}  // namespace

std::string_view to_string(ScoringMode m) {
  return m == ScoringMode::kLastToken ? "last-token" : "phrase-sum";
}

ScoringMode parse_scoring_mode(std::string_view s) {
  if (s == "last-token") return ScoringMode::kLastToken;
  if (s == "phrase-sum") return ScoringMode::kPhraseSum;
  throw ConfigError("unknown scoring mode '" + std::string(s) + "'");
}

Scorer::Scorer(BackendDescriptor backend, std::shared_ptr<CompletionClient> client,
               std::shared_ptr<ScoreCache> cache, ScorerOptions options)
    : backend_(std::move(backend)),
      client_(std::move(client)),
      cache_(std::move(cache)),
      options_(options) {
  if (options_.concurrency == 0) options_.concurrency = 1;
}

template <class Req, class Call>
std::vector<FetchOutcome> Scorer::fetch(std::span<const Req> requests, Call&& call,
                                        const std::function<json(const Req&)>& options_of,
                                        const std::function<std::string(const Req&)>& prompt_of) {
  std::vector<FetchOutcome> out(requests.size());
  std::vector<std::string> hashes(requests.size());
  std::vector<json> opts(requests.size());
  std::vector<std::size_t> misses;
  std::map<std::string, std::size_t> first_miss;
  std::vector<std::pair<std::size_t, std::size_t>> aliases;

  for (std::size_t i = 0; i < requests.size(); ++i) {
    opts[i] = options_of(requests[i]);
    hashes[i] = request_hash(backend_.kind, backend_.model_id, prompt_of(requests[i]), opts[i]);
    if (cache_) {
      if (auto hit = cache_->lookup(hashes[i])) {
        ++cache_hits_;
        {
          std::lock_guard lock(used_mu_);
          used_.try_emplace(hashes[i], hit->dump());
        }
        out[i].payload = std::move(*hit);
        continue;
      }
    }
    auto [it, inserted] = first_miss.try_emplace(hashes[i], i);
    if (inserted)
      misses.push_back(i);
    else
      aliases.emplace_back(i, it->second);
  }

  if (!misses.empty()) {
    if (options_.cache_only)
      throw CacheError(std::to_string(misses.size()) +
                       " request(s) not in cache and --cache-only is set");
    if (!client_) throw ConfigError("no client configured for backend '" + backend_.model_id + "'");

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next++; k < misses.size(); k = next++) {
        const std::size_t idx = misses[k];
        try {
          out[idx].payload = call(requests[idx]);
        } catch (const Error& e) {
          out[idx].error_class = e.error_class();
          out[idx].error = e.what();
        } catch (const std::exception& e) {
          out[idx].error_class = ErrorClass::kScoring;
          out[idx].error = e.what();
        }
        ++backend_calls_;
      }
    };
    const std::size_t n_workers = std::min(options_.concurrency, misses.size());
    if (n_workers <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      pool.reserve(n_workers);
      for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }

    for (std::size_t idx : misses) {
      if (!out[idx].ok()) continue;
      if (cache_) {
        cache_->append({hashes[idx], std::string(to_string(backend_.kind)), backend_.model_id,
                        prompt_of(requests[idx]), opts[idx], *out[idx].payload, ""});
      }
      std::lock_guard lock(used_mu_);
      used_.try_emplace(hashes[idx], out[idx].payload->dump());
    }
  }
  for (const auto& [i, src] : aliases) out[i] = out[src];
  return out;
}

std::vector<FetchOutcome> Scorer::fetch_logprobs(std::span<const std::string> prompts) {
  const json base = merged_options(
      {{"echo", true}, {"logprobs", 0}, {"max_tokens", 0}}, backend_.request_options);
  return fetch<std::string>(
      prompts,
      [this](const std::string& prompt) {
        return to_json(client_->echo_logprobs(backend_.model_id, prompt));
      },
      [&](const std::string&) { return base; }, [](const std::string& p) { return p; });
}

std::vector<FetchOutcome> Scorer::fetch_answers(std::span<const QaRequest> requests) {
  const json base =
      merged_options({{"temperature", options_.qa_temperature}, {"max_tokens", options_.qa_max_tokens}},
                     backend_.request_options);
  return fetch<QaRequest>(
      requests,
      [this](const QaRequest& r) {
        CompletionRequest req{r.prompt, options_.qa_temperature, options_.qa_max_tokens, r.repeat};
        return json{{"text", client_->complete(backend_.model_id, req)}};
      },
      [&](const QaRequest& r) {
        json o = base;
        o["repeat"] = r.repeat;
        return o;
      },
      [](const QaRequest& r) { return r.prompt; });
}

std::string Scorer::cache_digest() const {
  std::lock_guard lock(used_mu_);
  Sha256 h;
  for (const auto& [hash, payload] : used_) h.update(hash).update("\t").update(payload).update("\n");
  return h.hex();
}

json to_json(const TokenLogprobs& t) {
  json values = json::array();
  for (const auto& v : t.logprobs) values.push_back(v ? json(*v) : json(nullptr));
  return {{"tokens", t.tokens}, {"token_logprobs", values}, {"text_offset", t.offsets}};
}

TokenLogprobs token_logprobs_from_json(const json& payload) {
  try {
    TokenLogprobs t;
    t.tokens = payload.at("tokens").get<std::vector<std::string>>();
    t.offsets = payload.at("text_offset").get<std::vector<std::size_t>>();
    for (const auto& v : payload.at("token_logprobs")) {
      if (v.is_null())
        t.logprobs.emplace_back(std::nullopt);
      else
        t.logprobs.emplace_back(v.get<double>());
    }
    if (t.tokens.size() != t.logprobs.size() || t.tokens.size() != t.offsets.size())
      throw CacheError("logprob payload arrays differ in length");
    return t;
  } catch (const json::exception& e) {
    throw CacheError(std::string("malformed logprob payload: ") + e.what());
  }
}

double reduce_logprobs(const TokenLogprobs& tokens, std::string_view text,
                       std::string_view judgment, ScoringMode mode) {
  if (tokens.tokens.empty()) throw CapabilityError("no tokens for '" + std::string(text) + "'");
  if (mode == ScoringMode::kLastToken || judgment.empty()) {
    const auto& last = tokens.logprobs.back();
    if (!last) throw CapabilityError("backend reported no logprob for the final token");
    return *last;
  }
  if (text.size() < judgment.size() || text.substr(text.size() - judgment.size()) != judgment)
    throw ValidationError("probe text does not end with its judgment phrase");
  const std::size_t phrase_start = text.size() - judgment.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < tokens.tokens.size(); ++i) {
    if (tokens.offsets[i] + tokens.tokens[i].size() <= phrase_start) continue;
    if (!tokens.logprobs[i]) throw CapabilityError("backend reported no logprob inside the phrase");
    sum += *tokens.logprobs[i];
  }
  return sum;
}

namespace {

void require_logprob_backend(const Scorer& scorer) {
  const auto kind = scorer.backend().kind;
  if (kind != BackendKind::kLogprob && kind != BackendKind::kMock)
    throw ConfigError("backend kind '" + std::string(to_string(kind)) +
                      "' does not provide token logprobs");
}

}  // namespace

double last_token_logprob(Scorer& scorer, std::string_view text) {
  require_logprob_backend(scorer);
  const std::string prompt = strip_period(text);
  if (prompt.empty()) throw ValidationError("last_token_logprob: empty text");
  const std::string prompts[] = {prompt};
  const auto outcome = scorer.fetch_logprobs(prompts);
  if (!outcome[0].ok()) rethrow(outcome[0]);
  return reduce_logprobs(token_logprobs_from_json(*outcome[0].payload), prompt, "",
                         ScoringMode::kLastToken);
}

double logprob_from_payload(const json& payload, const RenderedPrompt& prompt, ScoringMode mode) {
  return reduce_logprobs(token_logprobs_from_json(payload), scoring_text(prompt), prompt.judgment, mode);
}

double probe_logprob(Scorer& scorer, const RenderedPrompt& prompt) {
  require_logprob_backend(scorer);
  const std::string text = scoring_text(prompt);
  if (text.empty()) throw ValidationError("probe_logprob: empty text");
  const std::string prompts[] = {text};
  const auto outcome = scorer.fetch_logprobs(prompts);
  if (!outcome[0].ok()) rethrow(outcome[0]);
  return logprob_from_payload(*outcome[0].payload, prompt, scorer.options().mode);
}

namespace {

void require_same_probe(const RenderedPrompt& positive, const RenderedPrompt& negative) {
  if (positive.topic != negative.topic || positive.country != negative.country ||
      positive.template_id != negative.template_id)
    throw ValidationError("moral_score_pair: prompts differ beyond the judgment phrase");
}

}  // namespace

double moral_score_pair(Scorer& scorer, const RenderedPrompt& positive,
                        const RenderedPrompt& negative) {
  require_logprob_backend(scorer);
  require_same_probe(positive, negative);
  const std::string texts[] = {scoring_text(positive), scoring_text(negative)};
  const auto o = scorer.fetch_logprobs(texts);
  for (const auto& x : o)
    if (!x.ok()) rethrow(x);
  const auto mode = scorer.options().mode;
  return logprob_from_payload(*o[0].payload, positive, mode) -
         logprob_from_payload(*o[1].payload, negative, mode);
}

double moral_score(Scorer& scorer, std::string_view topic,
                   const std::optional<std::string>& country,
                   std::span<const JudgmentPair> pairs, const PromptTemplate& tmpl) {
  require_logprob_backend(scorer);
  if (pairs.empty()) throw ValidationError("moral_score: no judgment pairs");
  std::vector<RenderedPrompt> prompts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int index = static_cast<int>(i) + 1;
    prompts.push_back(render_statement(tmpl, topic, country, pairs[i].positive, Polarity::kPositive, index));
    prompts.push_back(render_statement(tmpl, topic, country, pairs[i].negative, Polarity::kNegative, index));
  }
  std::vector<std::string> texts;
  for (const auto& p : prompts) texts.push_back(scoring_text(p));
  const auto outcomes = scorer.fetch_logprobs(texts);
  for (const auto& o : outcomes)
    if (!o.ok()) rethrow(o);

  const auto mode = scorer.options().mode;
  double sum = 0.0;
  for (std::size_t i = 0; i < prompts.size(); i += 2) {
    sum += logprob_from_payload(*outcomes[i].payload, prompts[i], mode) -
           logprob_from_payload(*outcomes[i + 1].payload, prompts[i + 1], mode);
  }
  return sum / static_cast<double>(pairs.size());
}

std::optional<int> parse_qa_answer(std::string_view answer, std::span<const std::string> options) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!answer.empty() && is_space(answer.front())) answer.remove_prefix(1);
  while (!answer.empty() && is_space(answer.back())) answer.remove_suffix(1);
  if (!answer.empty() && answer.front() == '(') answer.remove_prefix(1);
  if (answer.empty()) return std::nullopt;

  const char first = answer.front();
  if (first >= '1' && first <= '9') {
    if (answer.size() > 1 && std::isdigit(static_cast<unsigned char>(answer[1]))) return std::nullopt;
    const int n = first - '0';
    if (n <= static_cast<int>(options.size())) return n;
    return std::nullopt;
  }

  const std::string text = lower(answer);
  std::vector<std::size_t> order(options.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return options[a].size() > options[b].size();
  });
  for (std::size_t i : order) {
    const std::string opt = lower(options[i]);
    if (text.rfind(opt, 0) == 0) {
      const std::size_t end = opt.size();
      if (end == text.size() || !std::isalpha(static_cast<unsigned char>(text[end])))
        return static_cast<int>(i) + 1;
    }
  }
  return std::nullopt;
}

double qa_option_mean(std::span<const int> options) {
  if (options.empty()) throw ScoringError("no QA answers to average");
  double sum = 0.0;
  for (int o : options) {
    if (o < 1 || o > 3) throw ValidationError("QA option " + std::to_string(o) + " outside 1..3");
    sum += 2 - o;  // 1 -> +1, 2 -> 0, 3 -> -1
  }
  return sum / static_cast<double>(options.size());
}

QaScore qa_score_from(std::span<const FetchOutcome> answers, std::span<const std::string> options,
                      std::string_view what) {
  QaScore out;
  for (const auto& o : answers) {
    if (!o.ok()) rethrow(o);
    const auto text = o.payload->value("text", "");
    if (auto choice = parse_qa_answer(text, options)) {
      out.options.push_back(*choice);
    } else {
      ++out.format_errors;
    }
  }
  out.answered = out.options.size();
  if (out.answered == 0)
    throw ScoringError("all " + std::to_string(answers.size()) + " QA answers were unparseable for " +
                       std::string(what));
  out.score = qa_option_mean(out.options);
  return out;
}

QaScore qa_moral_score(Scorer& scorer, std::string_view topic, std::string_view country,
                       const DatasetId& dataset, int repeats) {
  if (scorer.backend().kind != BackendKind::kQa && scorer.backend().kind != BackendKind::kMock)
    throw ConfigError("qa_moral_score needs a QA backend");
  if (repeats < 1) throw ValidationError("qa_moral_score: repeats must be >= 1");
  const auto options = qa_options(dataset);
  const std::string prompt = render_qa(topic, country, dataset);
  std::vector<QaRequest> requests;
  for (int r = 0; r < repeats; ++r) requests.push_back({prompt, r});
  return qa_score_from(scorer.fetch_answers(requests), options,
                       "'" + std::string(topic) + "' in '" + std::string(country) + "'");
}

}  // namespace moralprobe
