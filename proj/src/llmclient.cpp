#include "ppibench/llmclient.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <thread>

#include "ppibench/folds.hpp"
#include "ppibench/parse_output.hpp"
#include "ppibench/rng.hpp"

namespace ppibench::llm {

OutputContract contract_for(PromptSetting setting) {
  switch (setting) {
    case PromptSetting::masked_10fold:
    case PromptSetting::masked_nfold:
      return OutputContract::verdicts;
    case PromptSetting::masked_single_sentence:
      return OutputContract::single_verdict;
    default:
      return OutputContract::extraction;
  }
}

std::chrono::milliseconds SystemClock::now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

RateLimiter::RateLimiter(std::size_t rpm, Clock& clock, std::chrono::milliseconds window)
    : rpm_(rpm), clock_(clock), window_(window) {
  if (rpm_ == 0) throw ConfigError("rate limit must allow at least one request per window");
}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  while (true) {
    auto now = clock_.now();
    while (!issued_.empty() && issued_.front() + window_ <= now) issued_.pop_front();
    if (issued_.size() < rpm_) {
      issued_.push_back(now);
      return;
    }
    auto wait = issued_.front() + window_ - now;
    lock.unlock();
    clock_.sleep_for(wait);
    lock.lock();
  }
}

std::chrono::milliseconds RetryPolicy::delay_after(std::size_t attempt) const {
  double ms = static_cast<double>(initial_delay.count()) * std::pow(backoff_factor, static_cast<double>(attempt - 1));
  ms = std::min(ms, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

ChatRequest make_request(std::string model, double temperature, std::string prompt, std::size_t context_window,
                         double safety_margin, OutputContract contract) {
  auto est = estimate_tokens(prompt);
  auto reserve = static_cast<std::size_t>(std::ceil(static_cast<double>(context_window) * safety_margin));
  if (est + reserve >= context_window) {
    throw ContextWindowError("prompt needs ~" + std::to_string(est) + " tokens; window " +
                             std::to_string(context_window) + " leaves no room for output");
  }
  ChatRequest r;
  r.model = std::move(model);
  r.temperature = temperature;
  r.prompt_text = std::move(prompt);
  r.max_tokens = context_window - est - reserve;
  r.contract = contract;
  return r;
}

void preflight(const ChatRequest& request, const ChatBackend& backend, const ClientOptions& options) {
  auto range = backend.temperature_range();
  if (!range.contains(request.temperature)) {
    throw TemperatureError("temperature " + std::to_string(request.temperature) + " outside backend range [" +
                           std::to_string(range.min) + ", " + std::to_string(range.max) + "]");
  }
  if (!options.temperature_cap.contains(request.temperature)) {
    throw TemperatureError("temperature " + std::to_string(request.temperature) + " outside configured range [" +
                           std::to_string(options.temperature_cap.min) + ", " +
                           std::to_string(options.temperature_cap.max) + "]");
  }
  auto est = estimate_tokens(request.prompt_text);
  if (request.max_tokens == 0 || est + request.max_tokens > options.context_window) {
    throw ContextWindowError("prompt (~" + std::to_string(est) + " tokens) + max_tokens " +
                             std::to_string(request.max_tokens) + " exceeds context window " +
                             std::to_string(options.context_window));
  }
}

namespace {

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ChatExchange complete(const ChatRequest& request, ChatBackend& backend, const ClientOptions& options) {
  preflight(request, backend, options);
  SystemClock system_clock;
  Clock& clock = options.clock ? *options.clock : system_clock;

  ChatExchange ex;
  ex.request = request;
  ex.backend = backend.tag();
  ex.timestamp = utc_timestamp();
  const auto started = clock.now();
  const auto max_attempts = std::max<std::size_t>(1, options.retry.max_attempts);
  for (std::size_t attempt = 1;; ++attempt) {
    ex.attempt_count = attempt;
    if (options.limiter) options.limiter->acquire();
    try {
      ex.response_text = backend.send(request);
      break;
    } catch (const TransientError& e) {
      if (attempt >= max_attempts) {
        throw RetriesExhaustedError("gave up after " + std::to_string(attempt) + " attempts: " + e.what());
      }
      clock.sleep_for(options.retry.delay_after(attempt));
    }
  }
  ex.latency = clock.now() - started;
  return ex;
}

void CorruptionParams::validate() const {
  auto check = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  check(p_drop, "p_drop");
  check(p_spur, "p_spur");
  check(p_malformed, "p_malformed");
  check(p_flip, "p_flip");
}

std::uint64_t replay_seed_for_run(std::uint64_t base_seed, std::size_t run) { return rng::derive(base_seed, run); }

ReplayGold::ReplayGold(std::shared_ptr<const Corpus> corpus)
    : corpus_(std::move(corpus)), dictionary_(build_dictionaries(*corpus_).original) {}

std::optional<std::size_t> ReplayGold::resolve_variant(const Sentence& sentence, std::string_view masked_text) const {
  const std::string wanted = input_line("", masked_text);
  for (std::size_t i = 0; i < sentence.pairs.size(); ++i) {
    auto m = mask_sentence(sentence, sentence.pairs[i]);
    if (input_line("", m.masked_text) == wanted) return i;
  }
  return std::nullopt;
}

namespace {

std::string data_row(const std::vector<std::string>& fields, bool malformed) {
  std::string row;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) row += malformed ? ";" : ",";
    row += malformed ? fields[i] : csv_field(fields[i]);
  }
  return row;
}

}  // namespace

std::string gold_replay(const std::vector<InputLine>& inputs, const ReplayGold& gold, OutputContract contract,
                        const CorruptionParams& params) {
  params.validate();
  const auto seed = params.seed;
  std::vector<std::string> rows;

  auto lookup = [&](const std::string& id) -> const Sentence& {
    const auto* s = gold.corpus().find_sentence(id);
    if (!s) throw ReplayError("unknown sentence_id '" + id + "'");
    return *s;
  };

  if (contract == OutputContract::extraction) {
    rows.push_back("Sentence ID,Protein 1,Protein 2,Interaction Type");
    const auto& names = gold.names();
    for (const auto& in : inputs) {
      const auto& s = lookup(in.sentence_id);
      const auto& sid = s.sentence_id;
      for (std::size_t i = 0; i < s.pairs.size(); ++i) {
        const auto& p = s.pairs[i];
        if (!p.positive) continue;
        if (rng::keyed_unit(seed, sid, i, replay_stream::drop) < params.p_drop) continue;
        bool bad = rng::keyed_unit(seed, sid, i, replay_stream::malformed) < params.p_malformed;
        rows.push_back(data_row(
            {sid, s.find_entity(p.e1)->surface, s.find_entity(p.e2)->surface, std::string(kReplayInteraction)}, bad));
      }
      if (names.size() >= 2 && rng::keyed_unit(seed, sid, 0, replay_stream::spurious) < params.p_spur) {
        auto a = rng::keyed_index(seed, sid, 0, replay_stream::spurious_first, names.size());
        auto b = rng::keyed_index(seed, sid, 0, replay_stream::spurious_second, names.size() - 1);
        if (b >= a) ++b;
        bool bad = rng::keyed_unit(seed, sid, s.pairs.size(), replay_stream::malformed) < params.p_malformed;
        rows.push_back(data_row({sid, names[a], names[b], std::string(kReplayInteraction)}, bad));
      }
    }
    rows.push_back("Done");
  } else {
    if (contract == OutputContract::verdicts) rows.push_back("Sentence ID,PPI");
    for (const auto& in : inputs) {
      const auto& s = lookup(in.sentence_id);
      auto variant = gold.resolve_variant(s, in.text);
      if (!variant) throw ReplayError("no annotated pair of '" + s.sentence_id + "' matches the masked text");
      bool verdict = s.pairs[*variant].positive;
      if (rng::keyed_unit(seed, s.sentence_id, *variant, replay_stream::flip) < params.p_flip) verdict = !verdict;
      bool bad = rng::keyed_unit(seed, s.sentence_id, *variant, replay_stream::malformed) < params.p_malformed;
      if (contract == OutputContract::single_verdict) {
        rows.push_back(bad ? "UNSURE" : (verdict ? "TRUE" : "FALSE"));
      } else {
        rows.push_back(data_row({s.sentence_id, verdict ? "TRUE" : "FALSE"}, bad));
      }
    }
    if (contract == OutputContract::verdicts) rows.push_back("Done");
  }

  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) out.push_back('\n');
    out += rows[i];
  }
  return out;
}

ReplayBackend::ReplayBackend(std::shared_ptr<const ReplayGold> gold, CorruptionParams params)
    : gold_(std::move(gold)), params_(params) {
  params_.validate();
}

std::string ReplayBackend::send(const ChatRequest& request) {
  return gold_replay(parse_input_block(request.prompt_text), *gold_, request.contract, params_);
}

std::string WorkItem::id(const std::vector<std::string>& dataset_names) const {
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.2f", temperature);
  std::string ds = dataset < dataset_names.size() ? dataset_names[dataset] : "d" + std::to_string(dataset);
  char run_fold[48];
  std::snprintf(run_fold, sizeof run_fold, "r%02zu_f%02zu", run, fold);
  std::string raw = ds + "_" + run_fold + "_" + model + "_" + std::string(setting_id(setting)) + "_t" + temp;
  for (auto& c : raw) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '-' ||
              c == '_';
    if (!ok) c = '_';
  }
  return raw;
}

std::vector<WorkItem> build_schedule(const std::vector<std::size_t>& folds, const std::vector<std::string>& models,
                                     const std::vector<PromptSetting>& settings,
                                     const std::vector<double>& temperatures, std::size_t runs, std::uint64_t seed,
                                     std::size_t datasets) {
  if (folds.empty() || models.empty() || settings.empty() || temperatures.empty() || runs == 0 || datasets == 0) {
    throw ConfigError("schedule axes must all be non-empty");
  }
  std::vector<WorkItem> items;
  items.reserve(folds.size() * models.size() * settings.size() * temperatures.size() * runs * datasets);
  for (std::size_t run = 1; run <= runs; ++run) {
    for (std::size_t d = 0; d < datasets; ++d) {
      for (auto fold : folds) {
        for (const auto& model : models) {
          for (auto setting : settings) {
            for (auto t : temperatures) items.push_back({run, d, fold, model, setting, t});
          }
        }
      }
    }
  }
  rng::shuffle(items, seed);
  return items;
}

}  // namespace ppibench::llm
