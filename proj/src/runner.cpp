#include "ppibench/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ppibench/rng.hpp"

namespace ppibench::runner {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kFoldSalt = 1;
constexpr std::uint64_t kScheduleSalt = 2;
constexpr std::uint64_t kReplaySalt = 3;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative()) path = fs::path(base_dir) / path;
  return fs::absolute(path).lexically_normal().string();
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
T get(const json& obj, std::string_view key, const std::string& where, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <class T>
T require(const json& obj, std::string_view key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing '" + std::string(key) + "' in " + where);
  return get<T>(obj, key, where, T{});
}

std::string fmt_temperature(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool safe_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '-' ||
           c == '_';
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration.

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"datasets", "models", "settings", "temperatures", "k", "runs", "seed", "fold_mode",
              "dictionary_scope", "backend", "budget", "prompt", "match", "output_root", "run_id", "workers",
              "strict_corpus"},
             "config");

  RunConfig cfg;
  for (const auto& d : require<json>(j, "datasets", "config")) {
    check_keys(d, {"name", "corpus"}, "datasets[]");
    cfg.datasets.push_back({require<std::string>(d, "name", "datasets[]"),
                            resolve_path(base_dir, require<std::string>(d, "corpus", "datasets[]"))});
  }
  for (const auto& m : require<json>(j, "models", "config")) {
    check_keys(m, {"name", "context_window", "temperature_range"}, "models[]");
    ModelSpec spec;
    spec.name = require<std::string>(m, "name", "models[]");
    spec.context_window = get<std::size_t>(m, "context_window", "models[]", spec.context_window);
    auto range = get<std::vector<double>>(m, "temperature_range", "models[]",
                                          {spec.temperature_range.min, spec.temperature_range.max});
    if (range.size() != 2) throw ConfigError("temperature_range of model '" + spec.name + "' needs [min, max]");
    spec.temperature_range = {range[0], range[1]};
    cfg.models.push_back(std::move(spec));
  }
  if (j.contains("settings")) {
    cfg.settings.clear();
    for (const auto& id : get<std::vector<std::string>>(j, "settings", "config", {})) {
      auto s = parse_setting(id);
      if (!s) throw ConfigError("unknown setting '" + id + "'");
      cfg.settings.push_back(*s);
    }
  }
  cfg.temperatures = get<std::vector<double>>(j, "temperatures", "config", cfg.temperatures);
  cfg.k = get<std::size_t>(j, "k", "config", cfg.k);
  cfg.runs = get<std::size_t>(j, "runs", "config", cfg.runs);
  cfg.seed = get<std::uint64_t>(j, "seed", "config", cfg.seed);

  auto fold_mode = get<std::string>(j, "fold_mode", "config", "fixed");
  if (fold_mode == "fixed") {
    cfg.fold_mode = FoldMode::fixed;
  } else if (fold_mode == "per_run") {
    cfg.fold_mode = FoldMode::per_run;
  } else {
    throw ConfigError("fold_mode must be 'fixed' or 'per_run'");
  }
  auto scope = get<std::string>(j, "dictionary_scope", "config", "corpus");
  if (scope == "corpus") {
    cfg.dictionary_scope = DictionaryScope::corpus;
  } else if (scope == "fold") {
    cfg.dictionary_scope = DictionaryScope::fold;
  } else {
    throw ConfigError("dictionary_scope must be 'corpus' or 'fold'");
  }

  if (j.contains("backend")) {
    const auto& b = j["backend"];
    check_keys(b, {"kind", "corruption", "live"}, "backend");
    auto kind = get<std::string>(b, "kind", "backend", "replay");
    if (kind == "replay") {
      cfg.backend.kind = BackendKind::replay;
    } else if (kind == "live") {
      cfg.backend.kind = BackendKind::live;
    } else {
      throw ConfigError("backend.kind must be 'replay' or 'live'");
    }
    if (b.contains("corruption")) {
      const auto& c = b["corruption"];
      check_keys(c, {"p_drop", "p_spur", "p_malformed", "p_flip", "seed"}, "backend.corruption");
      auto& p = cfg.backend.corruption;
      p.p_drop = get<double>(c, "p_drop", "backend.corruption", 0.0);
      p.p_spur = get<double>(c, "p_spur", "backend.corruption", 0.0);
      p.p_malformed = get<double>(c, "p_malformed", "backend.corruption", 0.0);
      p.p_flip = get<double>(c, "p_flip", "backend.corruption", 0.0);
      if (c.contains("seed")) {
        p.seed = get<std::uint64_t>(c, "seed", "backend.corruption", 0);
        cfg.backend.corruption_seed_set = true;
      }
    }
    if (b.contains("live")) {
      const auto& l = b["live"];
      check_keys(l,
                 {"base_url", "timeout_seconds", "rpm", "max_attempts", "initial_backoff_ms", "backoff_factor",
                  "max_backoff_ms"},
                 "backend.live");
      auto& be = cfg.backend;
      be.base_url = get<std::string>(l, "base_url", "backend.live", be.base_url);
      be.timeout = std::chrono::seconds(get<std::int64_t>(l, "timeout_seconds", "backend.live", be.timeout.count()));
      be.rpm = get<std::size_t>(l, "rpm", "backend.live", be.rpm);
      be.retry.max_attempts = get<std::size_t>(l, "max_attempts", "backend.live", be.retry.max_attempts);
      be.retry.initial_delay = std::chrono::milliseconds(
          get<std::int64_t>(l, "initial_backoff_ms", "backend.live", be.retry.initial_delay.count()));
      be.retry.backoff_factor = get<double>(l, "backoff_factor", "backend.live", be.retry.backoff_factor);
      be.retry.max_delay =
          std::chrono::milliseconds(get<std::int64_t>(l, "max_backoff_ms", "backend.live", be.retry.max_delay.count()));
    }
  }

  if (j.contains("budget")) {
    const auto& b = j["budget"];
    check_keys(b, {"output_allowance", "safety_margin"}, "budget");
    cfg.output_allowance = get<std::size_t>(b, "output_allowance", "budget", cfg.output_allowance);
    cfg.safety_margin = get<double>(b, "safety_margin", "budget", cfg.safety_margin);
  }
  if (j.contains("prompt")) {
    const auto& p = j["prompt"];
    check_keys(p, {"library", "template"}, "prompt");
    auto lib = p.contains("library") && !p["library"].is_null() ? get<std::string>(p, "library", "prompt", "") : "";
    cfg.library_path = resolve_path(base_dir, lib);
    cfg.template_name = get<std::string>(p, "template", "prompt", cfg.template_name);
  }
  if (j.contains("match")) {
    const auto& m = j["match"];
    check_keys(m, {"names", "orientation", "dedupe_predictions", "strip_set"}, "match");
    auto names = get<std::string>(m, "names", "match", "normalized");
    if (names == "normalized") {
      cfg.match.names = NameComparison::normalized;
    } else if (names == "exact") {
      cfg.match.names = NameComparison::exact;
    } else {
      throw ConfigError("match.names must be 'normalized' or 'exact'");
    }
    auto orientation = get<std::string>(m, "orientation", "match", "unordered");
    if (orientation == "unordered") {
      cfg.match.orientation = PairOrientation::unordered;
    } else if (orientation == "ordered") {
      cfg.match.orientation = PairOrientation::ordered;
    } else {
      throw ConfigError("match.orientation must be 'unordered' or 'ordered'");
    }
    cfg.match.dedupe_predictions = get<bool>(m, "dedupe_predictions", "match", cfg.match.dedupe_predictions);
    cfg.match.normalize.strip_set = get<std::string>(m, "strip_set", "match", cfg.match.normalize.strip_set);
  }
  cfg.output_root = resolve_path(base_dir, get<std::string>(j, "output_root", "config", cfg.output_root));
  cfg.run_id = get<std::string>(j, "run_id", "config", cfg.run_id);
  cfg.workers = get<std::size_t>(j, "workers", "config", cfg.workers);
  cfg.strict_corpus = get<bool>(j, "strict_corpus", "config", cfg.strict_corpus);
  return cfg;
}

std::string RunConfig::to_json() const {
  json j;
  j["datasets"] = json::array();
  for (const auto& d : datasets) j["datasets"].push_back({{"name", d.name}, {"corpus", d.corpus_path}});
  j["models"] = json::array();
  for (const auto& m : models) {
    j["models"].push_back({{"name", m.name},
                           {"context_window", m.context_window},
                           {"temperature_range", {m.temperature_range.min, m.temperature_range.max}}});
  }
  j["settings"] = json::array();
  for (auto s : settings) j["settings"].push_back(std::string(setting_id(s)));
  j["temperatures"] = temperatures;
  j["k"] = k;
  j["runs"] = runs;
  j["seed"] = seed;
  j["fold_mode"] = fold_mode == FoldMode::fixed ? "fixed" : "per_run";
  j["dictionary_scope"] = dictionary_scope == DictionaryScope::corpus ? "corpus" : "fold";

  json corruption = {{"p_drop", backend.corruption.p_drop},
                     {"p_spur", backend.corruption.p_spur},
                     {"p_malformed", backend.corruption.p_malformed},
                     {"p_flip", backend.corruption.p_flip}};
  if (backend.corruption_seed_set) corruption["seed"] = backend.corruption.seed;
  j["backend"] = {{"kind", backend.kind == BackendKind::replay ? "replay" : "live"},
                  {"corruption", corruption},
                  {"live",
                   {{"base_url", backend.base_url},
                    {"timeout_seconds", backend.timeout.count()},
                    {"rpm", backend.rpm},
                    {"max_attempts", backend.retry.max_attempts},
                    {"initial_backoff_ms", backend.retry.initial_delay.count()},
                    {"backoff_factor", backend.retry.backoff_factor},
                    {"max_backoff_ms", backend.retry.max_delay.count()}}}};
  j["budget"] = {{"output_allowance", output_allowance}, {"safety_margin", safety_margin}};
  j["prompt"] = {{"library", library_path.empty() ? json(nullptr) : json(library_path)},
                 {"template", template_name}};
  j["match"] = {{"names", match.names == NameComparison::normalized ? "normalized" : "exact"},
                {"orientation", match.orientation == PairOrientation::unordered ? "unordered" : "ordered"},
                {"dedupe_predictions", match.dedupe_predictions},
                {"strip_set", match.normalize.strip_set}};
  j["output_root"] = output_root;
  j["run_id"] = run_id;
  j["workers"] = workers;
  j["strict_corpus"] = strict_corpus;
  return j.dump(2);
}

namespace {

PromptTemplate resolve_template(const RunConfig& cfg) {
  const VariationLibrary library =
      cfg.library_path.empty() ? default_variation_library() : load_variation_library_file(cfg.library_path);
  if (cfg.template_name == "base") return library.base_template();
  return canned_template(library, cfg.template_name);
}

}  // namespace

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto fail = [&](std::string msg) { problems.push_back(std::move(msg)); };

  if (datasets.empty()) fail("no datasets configured");
  std::set<std::string> names;
  for (const auto& d : datasets) {
    if (!safe_name(d.name)) fail("dataset name '" + d.name + "' must use only [A-Za-z0-9._-]");
    if (!names.insert(d.name).second) fail("duplicate dataset name '" + d.name + "'");
    if (!fs::is_regular_file(d.corpus_path)) fail("corpus file not found: " + d.corpus_path);
  }
  if (models.empty()) fail("no models configured");
  std::set<std::string> model_names;
  for (const auto& m : models) {
    if (m.name.empty()) fail("model name is empty");
    if (!model_names.insert(m.name).second) fail("duplicate model '" + m.name + "'");
    if (m.context_window == 0) fail("model '" + m.name + "' has a zero context window");
    if (m.temperature_range.min > m.temperature_range.max) fail("model '" + m.name + "' has an empty temperature range");
  }
  if (settings.empty()) fail("no settings configured");
  if (std::set<PromptSetting>(settings.begin(), settings.end()).size() != settings.size()) fail("duplicate setting");
  if (temperatures.empty()) fail("no temperatures configured");
  const llm::TemperatureRange api_range{};
  for (double t : temperatures) {
    if (!api_range.contains(t)) fail("temperature " + fmt_temperature(t) + " outside [0, 2]");
    for (const auto& m : models) {
      if (!m.temperature_range.contains(t)) {
        fail("temperature " + fmt_temperature(t) + " outside the range of model '" + m.name + "' [" +
             fmt_temperature(m.temperature_range.min) + ", " + fmt_temperature(m.temperature_range.max) + "]");
      }
    }
  }
  if (std::set<double>(temperatures.begin(), temperatures.end()).size() != temperatures.size()) {
    fail("duplicate temperature");
  }
  if (k < 2) fail("k must be at least 2");
  if (runs < 1) fail("runs must be at least 1");
  if (workers < 1) fail("workers must be at least 1");
  if (!(safety_margin >= 0.0 && safety_margin < 1.0)) fail("safety_margin must lie in [0, 1)");
  if (run_id.empty() || run_id.find("..") != std::string::npos) fail("run_id must be a non-empty relative name");
  try {
    backend.corruption.validate();
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  if (backend.kind == BackendKind::live) {
    if (backend.rpm == 0) fail("backend.live.rpm must be positive");
    const char* key = std::getenv("PPIBENCH_API_KEY");
    if (key == nullptr || *key == '\0') fail("live backend needs PPIBENCH_API_KEY");
  }
  try {
    resolve_template(*this).validate();
  } catch (const Error& e) {
    fail(std::string("prompt: ") + e.what());
  }

  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

std::uint64_t RunConfig::fold_seed(std::size_t run) const {
  auto base = rng::derive(seed, kFoldSalt);
  return fold_mode == FoldMode::fixed ? base : rng::derive(base, run);
}

std::uint64_t RunConfig::schedule_seed() const { return rng::derive(seed, kScheduleSalt); }

std::uint64_t RunConfig::replay_seed() const {
  return backend.corruption_seed_set ? backend.corruption.seed : rng::derive(seed, kReplaySalt);
}

std::string RunConfig::run_dir() const { return (fs::path(output_root) / run_id).string(); }

RunConfig load_config(const std::string& path) {
  auto dir = fs::path(path).parent_path();
  return RunConfig::from_json_text(read_file(path), dir.empty() ? "." : dir.string());
}

RunConfig config_from_run_dir(const std::string& run_dir) {
  auto manifest = json::parse(read_file(fs::path(run_dir) / "manifest.json"));
  return RunConfig::from_json_text(manifest.at("config").dump(), run_dir);
}

// ---------------------------------------------------------------------------
// Execution.

namespace {

struct DatasetState {
  std::shared_ptr<const Corpus> corpus;
  DictionaryPair dictionaries;
  std::shared_ptr<const llm::ReplayGold> gold;
  /// Index 0 for fixed folds, run number otherwise.
  std::map<std::size_t, FoldPlan> plans;

  const FoldPlan& plan_for(std::size_t run) const {
    auto it = plans.find(run);
    return it != plans.end() ? it->second : plans.at(0);
  }
};

struct ItemOutcome {
  json parsed_lines = json::array();
  json score;
};

class Manifest {
 public:
  explicit Manifest(fs::path log) : path_(std::move(log)) {}

  std::map<std::string, std::string> last_status() const {
    std::map<std::string, std::string> out;
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      out[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return out;
  }

  void append(const std::string& item, const std::string& status) {
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    out << item << '\t' << status << '\n';
    out.flush();
  }

 private:
  fs::path path_;
  std::mutex mutex_;
};

json parse_report_json(std::size_t chunk, const ParseReport& r) {
  json dropped = json::array();
  for (const auto& d : r.dropped) dropped.push_back({{"line", d.line}, {"reason", d.reason}, {"text", d.text}});
  return {{"parse_report",
           {{"chunk", chunk},
            {"total_lines", r.total_lines},
            {"recovered", r.recovered},
            {"structural", r.structural},
            {"done_sentinel_seen", r.done_sentinel_seen},
            {"stripped_wrappers", r.stripped_wrappers},
            {"dropped", dropped}}}};
}

json triple_json(const ScoreTriple& t) {
  return {{"precision", t.precision}, {"recall", t.recall}, {"f1", t.f1}};
}

class Executor {
 public:
  Executor(const RunConfig& cfg, const RunOptions& options, const std::vector<DatasetState>& datasets,
           const PromptTemplate& tmpl, fs::path run_dir, llm::RateLimiter* limiter,
           std::shared_ptr<llm::ChatBackend> live)
      : cfg_(cfg),
        options_(options),
        datasets_(datasets),
        template_(tmpl),
        wording_(MaskedWording::defaults()),
        run_dir_(std::move(run_dir)),
        limiter_(limiter),
        live_(std::move(live)) {
    for (const auto& d : cfg_.datasets) dataset_names_.push_back(d.name);
  }

  const std::vector<std::string>& dataset_names() const { return dataset_names_; }

  ItemOutcome execute(const llm::WorkItem& item) {
    const auto& ds = datasets_.at(item.dataset);
    const auto& model = *std::find_if(cfg_.models.begin(), cfg_.models.end(),
                                      [&](const ModelSpec& m) { return m.name == item.model; });
    const auto& plan = ds.plan_for(item.run);
    const auto sentences = plan.sentences(*ds.corpus, item.fold);
    const auto id = item.id(dataset_names_);

    std::shared_ptr<llm::ChatBackend> backend = backend_for(item);
    llm::ClientOptions client;
    client.context_window = model.context_window;
    client.temperature_cap = model.temperature_range;
    client.retry = cfg_.backend.retry;
    client.limiter = limiter_;
    client.clock = options_.clock;

    ChunkBudget budget;
    budget.per_sentence_output_allowance = cfg_.output_allowance;
    budget.context_window = model.context_window;
    budget.safety_margin = cfg_.safety_margin;

    ItemOutcome outcome;
    std::size_t chunk_counter = 0;
    std::size_t dropped_total = 0;
    std::size_t missing_sentinel = 0;

    auto call = [&](const std::string& prompt, llm::OutputContract contract) {
      auto request = llm::make_request(model.name, item.temperature, prompt, model.context_window,
                                       cfg_.safety_margin, contract);
      auto ex = llm::complete(request, *backend, client);
      if (run_dir_.empty()) return ex.response_text;
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "__c%03zu", chunk_counter);
      auto stem = run_dir_ / "raw" / (id + suffix);
      write_file(stem.string() + ".prompt.txt", prompt);
      write_file(stem.string() + ".txt", ex.response_text);
      json meta = {{"item", id},
                   {"chunk", chunk_counter},
                   {"model", ex.request.model},
                   {"temperature", ex.request.temperature},
                   {"max_tokens", ex.request.max_tokens},
                   {"backend", ex.backend},
                   {"attempts", ex.attempt_count},
                   {"latency_ms", ex.latency.count()},
                   {"timestamp", ex.timestamp}};
      write_file(stem.string() + ".meta.json", meta.dump(2) + "\n");
      return ex.response_text;
    };
    auto note_report = [&](const ParseReport& r) {
      outcome.parsed_lines.push_back(parse_report_json(chunk_counter, r));
      dropped_total += r.dropped.size();
      if (!r.done_sentinel_seen) ++missing_sentinel;
    };

    json score = {{"item", id},
                  {"dataset", dataset_names_[item.dataset]},
                  {"model", item.model},
                  {"setting", std::string(setting_id(item.setting))},
                  {"temperature", item.temperature},
                  {"run", item.run},
                  {"fold", item.fold},
                  {"status", "done"}};

    if (!is_masked(item.setting)) {
      const ProteinDictionary* dict = nullptr;
      DictionaryPair fold_dicts;
      if (uses_dictionary(item.setting)) {
        const DictionaryPair* source = &ds.dictionaries;
        if (cfg_.dictionary_scope == DictionaryScope::fold) {
          fold_dicts = build_dictionaries(sentences, cfg_.match.normalize);
          source = &fold_dicts;
        }
        dict = item.setting == PromptSetting::with_normalized_dictionary ? &source->normalized : &source->original;
      }
      budget.preamble_tokens = estimate_tokens(extraction_preamble(item.setting, template_, dict) + "\n");
      std::vector<ChunkUnit> units;
      for (const auto* s : sentences) units.push_back({s->sentence_id, s->text});
      std::vector<ExtractionRecord> records;
      for (const auto& chunk : split_fold_by_budget(item.fold, units, budget)) {
        std::vector<const Sentence*> subset;
        for (auto i : chunk.unit_indices) subset.push_back(sentences[i]);
        auto prompt = assemble_prompt(item.setting, template_, dict, subset);
        auto [recs, report] = parse_extraction(call(prompt.text, llm::OutputContract::extraction));
        for (const auto& r : recs) {
          outcome.parsed_lines.push_back({{"chunk", chunk_counter},
                                          {"sentence_id", r.sentence_id},
                                          {"protein1", r.protein1},
                                          {"protein2", r.protein2},
                                          {"interaction_type", r.interaction_type}});
        }
        records.insert(records.end(), recs.begin(), recs.end());
        note_report(report);
        ++chunk_counter;
      }
      auto counts = match_extractions(records, sentences, cfg_.match);
      auto t = counts.triple();
      score.update(triple_json(t));
      score["tp"] = counts.tp;
      score["fp"] = counts.fp;
      score["fn"] = counts.fn;
      score["foreign"] = counts.foreign;
      score["duplicates"] = counts.duplicates;
    } else {
      const auto instances = instances_for(sentences);
      std::vector<std::vector<std::size_t>> groups;
      if (item.setting == PromptSetting::masked_nfold) {
        groups = make_duplicate_free_partitions(instances).partitions;
      } else if (item.setting == PromptSetting::masked_single_sentence) {
        for (std::size_t i = 0; i < instances.size(); ++i) groups.push_back({i});
      } else if (!instances.empty()) {
        groups.emplace_back(instances.size());
        for (std::size_t i = 0; i < instances.size(); ++i) groups.back()[i] = i;
      }
      budget.preamble_tokens = estimate_tokens(masked_preamble(item.setting, wording_) + "\n");
      const auto contract = llm::contract_for(item.setting);

      std::vector<VerdictRecord> verdicts;
      for (const auto& group : groups) {
        std::vector<ChunkUnit> units;
        for (auto i : group) units.push_back({instances[i].sentence_id, instances[i].masked_text});
        for (const auto& chunk : split_fold_by_budget(item.fold, units, budget)) {
          std::vector<const MaskedInstance*> subset;
          for (auto u : chunk.unit_indices) subset.push_back(&instances[group[u]]);
          auto prompt = assemble_prompt(item.setting, wording_, subset);
          auto response = call(prompt.text, contract);

          std::vector<VerdictRecord> chunk_verdicts;
          if (contract == llm::OutputContract::single_verdict) {
            auto [verdict, report] = parse_single_verdict(response);
            if (verdict) chunk_verdicts.push_back({subset[0]->sentence_id, subset[0]->variant_index, *verdict});
            note_report(report);
          } else {
            auto [rows, report] = parse_verdicts(response);
            // The k-th row naming a sentence answers the k-th instance of that
            // sentence in the prompt.
            std::map<std::string, std::vector<std::size_t>> queue;
            for (const auto* inst : subset) queue[inst->sentence_id].push_back(inst->variant_index);
            std::map<std::string, std::size_t> used;
            for (auto& row : rows) {
              auto it = queue.find(row.sentence_id);
              auto& n = used[row.sentence_id];
              if (it != queue.end() && n < it->second.size()) row.variant_index = it->second[n];
              ++n;
              chunk_verdicts.push_back(row);
            }
            note_report(report);
          }
          for (const auto& v : chunk_verdicts) {
            json line = {{"chunk", chunk_counter}, {"sentence_id", v.sentence_id}};
            line["variant_index"] = v.variant_index ? json(*v.variant_index) : json(nullptr);
            line["verdict"] = v.verdict;
            outcome.parsed_lines.push_back(std::move(line));
          }
          verdicts.insert(verdicts.end(), chunk_verdicts.begin(), chunk_verdicts.end());
          ++chunk_counter;
        }
      }
      auto scores = score_classification(verdicts, instances);
      score.update(triple_json(scores.positive));
      score["macro"] = triple_json(scores.macro);
      score["tp"] = scores.tp;
      score["fp"] = scores.fp;
      score["fn"] = scores.fn;
      score["tn"] = scores.tn;
      score["missing"] = scores.missing;
      score["excluded"] = scores.excluded;
    }
    score["chunks"] = chunk_counter;
    score["dropped_lines"] = dropped_total;
    score["chunks_without_done"] = missing_sentinel;
    score["match_config"] = cfg_.match.describe();
    outcome.score = std::move(score);
    return outcome;
  }

 private:
  std::shared_ptr<llm::ChatBackend> backend_for(const llm::WorkItem& item) const {
    if (options_.backend_factory) return options_.backend_factory(item);
    if (cfg_.backend.kind == BackendKind::live) return live_;
    auto params = cfg_.backend.corruption;
    params.seed = llm::replay_seed_for_run(cfg_.replay_seed(), item.run);
    return std::make_shared<llm::ReplayBackend>(datasets_.at(item.dataset).gold, params);
  }

  const RunConfig& cfg_;
  const RunOptions& options_;
  const std::vector<DatasetState>& datasets_;
  PromptTemplate template_;
  MaskedWording wording_;
  fs::path run_dir_;
  llm::RateLimiter* limiter_;
  std::shared_ptr<llm::ChatBackend> live_;
  std::vector<std::string> dataset_names_;
};

std::vector<DatasetState> prepare_datasets(const RunConfig& cfg) {
  std::vector<DatasetState> datasets;
  for (const auto& spec : cfg.datasets) {
    DatasetState ds;
    LoadOptions load;
    load.strict = cfg.strict_corpus;
    ds.corpus = std::make_shared<const Corpus>(load_corpus_file(spec.corpus_path, load).corpus);
    ds.dictionaries = build_dictionaries(*ds.corpus, cfg.match.normalize);
    ds.gold = std::make_shared<const llm::ReplayGold>(ds.corpus);
    if (cfg.fold_mode == FoldMode::fixed) {
      ds.plans[0] = make_document_folds(*ds.corpus, cfg.k, cfg.fold_seed(1));
    } else {
      for (std::size_t r = 1; r <= cfg.runs; ++r) ds.plans[r] = make_document_folds(*ds.corpus, cfg.k, cfg.fold_seed(r));
    }
    datasets.push_back(std::move(ds));
  }
  return datasets;
}

std::string schedule_digest(const std::vector<std::string>& ids) {
  std::string joined;
  for (const auto& id : ids) joined += id + "\n";
  return hex64(rng::fnv1a(joined));
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();

  // Everything that can fail on bad input happens before the run directory exists.
  const PromptTemplate tmpl = resolve_template(cfg);
  const auto datasets = prepare_datasets(cfg);

  std::vector<std::size_t> folds(cfg.k);
  for (std::size_t f = 0; f < cfg.k; ++f) folds[f] = f;
  std::vector<std::string> model_names;
  for (const auto& m : cfg.models) model_names.push_back(m.name);
  const auto schedule = llm::build_schedule(folds, model_names, cfg.settings, cfg.temperatures, cfg.runs,
                                            cfg.schedule_seed(), cfg.datasets.size());

  llm::SystemClock system_clock;
  llm::Clock& clock = options.clock ? *options.clock : system_clock;
  std::unique_ptr<llm::RateLimiter> limiter;
  std::shared_ptr<llm::ChatBackend> live;
  if (cfg.backend.kind == BackendKind::live && !options.backend_factory) {
    auto lc = llm::LiveConfig::from_env(cfg.backend.base_url);
    lc.timeout = cfg.backend.timeout;
    live = std::make_shared<llm::LiveBackend>(lc);
    limiter = std::make_unique<llm::RateLimiter>(cfg.backend.rpm, clock);
  }

  const fs::path run_dir = cfg.run_dir();
  Executor executor(cfg, options, datasets, tmpl, run_dir, limiter.get(), live);
  std::vector<std::string> ids;
  for (const auto& item : schedule) ids.push_back(item.id(executor.dataset_names()));
  const auto digest = schedule_digest(ids);

  const auto manifest_path = run_dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    auto existing = json::parse(read_file(manifest_path));
    if (existing.value("schedule_digest", "") != digest ||
        config_from_run_dir(run_dir.string()).to_json() != cfg.to_json()) {
      throw ConfigError("run directory " + run_dir.string() + " holds a different configuration");
    }
  } else {
    json manifest;
    manifest["tool_version"] = std::string(kToolVersion);
    manifest["schedule_digest"] = digest;
    manifest["config"] = json::parse(cfg.to_json());
    manifest["items"] = ids;
    write_file(manifest_path, manifest.dump(2) + "\n");
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      std::ostringstream plan_csv;
      write_fold_plan(plan_csv, datasets[d].plan_for(1), *datasets[d].corpus);
      write_file(run_dir / "folds" / (cfg.datasets[d].name + ".csv"), plan_csv.str());
    }
  }

  Manifest log(run_dir / "manifest.log");
  const auto status = log.last_status();
  RunResult result;
  result.run_dir = run_dir.string();
  result.total_items = schedule.size();

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    auto it = status.find(ids[i]);
    bool done = it != status.end() && it->second == "done" && fs::exists(run_dir / "scores" / (ids[i] + ".json"));
    if (done) {
      ++result.skipped;
    } else {
      pending.push_back(i);
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> started{0};
  std::atomic<std::size_t> executed{0};
  std::atomic<std::size_t> failed{0};
  std::atomic<bool> stopped{false};

  auto worker = [&] {
    while (true) {
      auto n = next.fetch_add(1);
      if (n >= pending.size()) return;
      if (options.stop_after && started.fetch_add(1) >= *options.stop_after) {
        stopped = true;
        return;
      }
      const auto& item = schedule[pending[n]];
      const auto& id = ids[pending[n]];
      log.append(id, "started");
      try {
        auto outcome = executor.execute(item);
        std::string parsed;
        for (const auto& line : outcome.parsed_lines) parsed += line.dump() + "\n";
        write_file(run_dir / "parsed" / (id + ".ndrec"), parsed);
        write_file(run_dir / "scores" / (id + ".json"), outcome.score.dump(2) + "\n");
        log.append(id, "done");
      } catch (const std::exception& e) {
        json score = {{"item", id},
                      {"dataset", cfg.datasets[item.dataset].name},
                      {"model", item.model},
                      {"setting", std::string(setting_id(item.setting))},
                      {"temperature", item.temperature},
                      {"run", item.run},
                      {"fold", item.fold},
                      {"status", "failed"},
                      {"error", e.what()}};
        write_file(run_dir / "errors" / (id + ".txt"), std::string(e.what()) + "\n");
        write_file(run_dir / "scores" / (id + ".json"), score.dump(2) + "\n");
        log.append(id, "failed");
        ++failed;
      }
      ++executed;
    }
  };

  const auto n_workers = std::min<std::size_t>(cfg.workers, std::max<std::size_t>(1, pending.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  result.executed = executed;
  result.failed = failed;
  if (stopped && result.executed + result.skipped < result.total_items) return result;

  result.aggregates = aggregates_from_run_dir(run_dir.string());
  emit_report(result.aggregates, cfg.match, run_dir.string());
  result.complete = true;
  return result;
}

std::vector<AggregateReport> aggregates_from_run_dir(const std::string& run_dir) {
  const auto cfg = config_from_run_dir(run_dir);
  auto manifest = json::parse(read_file(fs::path(run_dir) / "manifest.json"));

  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;
  std::map<Key, std::vector<FoldCell>> cells;
  auto index_of = [](const auto& xs, const auto& x) -> std::size_t {
    return static_cast<std::size_t>(std::find(xs.begin(), xs.end(), x) - xs.begin());
  };
  std::vector<std::string> dataset_names;
  for (const auto& d : cfg.datasets) dataset_names.push_back(d.name);
  std::vector<std::string> model_names;
  for (const auto& m : cfg.models) model_names.push_back(m.name);

  for (const auto& id : manifest.at("items")) {
    auto path = fs::path(run_dir) / "scores" / (id.get<std::string>() + ".json");
    if (!fs::exists(path)) continue;
    auto s = json::parse(read_file(path));
    auto setting = parse_setting(s.at("setting").get<std::string>());
    if (!setting) continue;
    Key key{index_of(dataset_names, s.at("dataset").get<std::string>()),
            index_of(model_names, s.at("model").get<std::string>()), index_of(cfg.settings, *setting),
            index_of(cfg.temperatures, s.at("temperature").get<double>())};
    FoldCell cell;
    cell.run = s.at("run").get<std::size_t>();
    cell.fold = s.at("fold").get<std::size_t>();
    if (s.at("status") == "done") {
      cell.triple = ScoreTriple{s.at("precision").get<double>(), s.at("recall").get<double>(), s.at("f1").get<double>()};
      if (s.contains("macro")) {
        const auto& m = s["macro"];
        cell.macro = ScoreTriple{m.at("precision").get<double>(), m.at("recall").get<double>(), m.at("f1").get<double>()};
      }
      cell.tp = s.at("tp").get<std::size_t>();
      cell.fp = s.at("fp").get<std::size_t>();
      cell.fn = s.at("fn").get<std::size_t>();
    }
    cells[key].push_back(cell);
  }

  std::vector<AggregateReport> out;
  for (auto& [key, group] : cells) {
    auto [d, m, s, t] = key;
    AggregateKey agg_key;
    agg_key.dataset = d < dataset_names.size() ? dataset_names[d] : "?";
    agg_key.model = m < model_names.size() ? model_names[m] : "?";
    agg_key.setting = s < cfg.settings.size() ? std::string(setting_id(cfg.settings[s])) : "?";
    agg_key.temperature = t < cfg.temperatures.size() ? cfg.temperatures[t] : 0.0;
    out.push_back(aggregate(std::move(agg_key), std::move(group)));
  }
  return out;
}

PromptEvaluator make_pipeline_evaluator(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  auto datasets = std::make_shared<const std::vector<DatasetState>>(prepare_datasets(cfg));
  return [cfg, options, datasets](const PromptTemplate& tmpl) {
    Executor executor(cfg, options, *datasets, tmpl, fs::path(), nullptr, nullptr);
    double total = 0.0;
    for (std::size_t f = 0; f < cfg.k; ++f) {
      llm::WorkItem item{1, 0, f, cfg.models.front().name, PromptSetting::base_10fold, cfg.temperatures.front()};
      total += executor.execute(item).score.at("f1").get<double>();
    }
    return total / static_cast<double>(cfg.k);
  };
}

// ---------------------------------------------------------------------------
// Temperature sweep.

SweepResult sweep_temperature(const RunConfig& cfg, const std::vector<double>& temperatures,
                              const RunOptions& options) {
  RunConfig all = cfg;
  all.temperatures = temperatures;
  all.validate();

  SweepResult result;
  std::string csv = "temperature,dataset,model,setting,runs,precision,recall,f1,f1_sd\n";
  std::string md = "| Temperature | Dataset | Model | Setting | Precision | Recall | F1-Score |\n|---|---|---|---|---|---|---|\n";
  for (double t : temperatures) {
    RunConfig one = cfg;
    one.temperatures = {t};
    one.run_id = cfg.run_id + "/t" + fmt_temperature(t);
    auto run = run_experiment(one, options);
    for (const auto& a : run.aggregates) {
      char row[512];
      std::snprintf(row, sizeof row, "%s,%s,%s,%s,%zu,%.2f,%.2f,%.2f,%.2f\n", fmt_temperature(t).c_str(),
                    a.key.dataset.c_str(), a.key.model.c_str(), a.key.setting.c_str(), a.runs.size(),
                    100.0 * a.grand_mean.precision, 100.0 * a.grand_mean.recall, 100.0 * a.grand_mean.f1,
                    100.0 * a.stddev.f1);
      csv += row;
      auto label = parse_setting(a.key.setting);
      md += "| " + fmt_temperature(t) + " | " + a.key.dataset + " | " + a.key.model + " | " +
            std::string(label ? setting_label(*label) : a.key.setting) + " | " + format_percent(a.grand_mean.precision) +
            " | " + format_percent(a.grand_mean.recall) + " | " + format_percent(a.grand_mean.f1) + " |\n";
    }
    result.per_temperature.emplace_back(t, std::move(run));
  }
  write_file(fs::path(cfg.run_dir()) / "temperature_sweep.csv", csv);
  write_file(fs::path(cfg.run_dir()) / "temperature_sweep.md", md);
  result.table_csv = std::move(csv);
  result.table_markdown = std::move(md);
  return result;
}

}  // namespace ppibench::runner
