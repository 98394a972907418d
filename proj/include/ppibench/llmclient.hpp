#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ppibench/corpus.hpp"
#include "ppibench/error.hpp"
#include "ppibench/preprocess.hpp"
#include "ppibench/prompt.hpp"

namespace ppibench::llm {

/// Shape of the answer a prompt asks for.
enum class OutputContract { extraction, verdicts, single_verdict };

OutputContract contract_for(PromptSetting setting);

struct TemperatureRange {
  double min = 0.0;
  double max = 2.0;

  bool contains(double t) const { return t >= min && t <= max; }
};

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  std::size_t max_tokens = 0;
  std::string prompt_text;
  /// Not sent over the wire; tells the replay backend what to answer.
  OutputContract contract = OutputContract::extraction;
};

struct ChatExchange {
  ChatRequest request;
  /// Verbatim response content.
  std::string response_text;
  std::chrono::milliseconds latency{0};
  std::size_t attempt_count = 0;
  std::string backend;
  /// UTC, ISO-8601.
  std::string timestamp;
};

// Failures before any backend call.
class PreflightError : public Error {
 public:
  using Error::Error;
};
class ContextWindowError : public PreflightError {
 public:
  using PreflightError::PreflightError;
};
class TemperatureError : public PreflightError {
 public:
  using PreflightError::PreflightError;
};

/// Retryable: timeouts, connection failures, HTTP 408/429/5xx.
class TransientError : public Error {
 public:
  using Error::Error;
};
class AuthError : public Error {
 public:
  using Error::Error;
};
/// The endpoint answered, but not with a usable chat-completion envelope.
class EnvelopeError : public Error {
 public:
  using Error::Error;
};
class RetriesExhaustedError : public Error {
 public:
  using Error::Error;
};
class ReplayError : public Error {
 public:
  using Error::Error;
};

/// Time source used for backoff and rate limiting. Tests substitute ManualClock.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::milliseconds now() = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock : public Clock {
 public:
  std::chrono::milliseconds now() override;
  void sleep_for(std::chrono::milliseconds d) override;
};

/// Simulated time: sleeping advances the clock instantly.
class ManualClock : public Clock {
 public:
  std::chrono::milliseconds now() override { return std::chrono::milliseconds(now_.load()); }
  void sleep_for(std::chrono::milliseconds d) override { now_ += d.count(); }
  void advance(std::chrono::milliseconds d) { now_ += d.count(); }

 private:
  std::atomic<std::int64_t> now_{0};
};

/// Sliding-window limiter: at most `rpm` acquisitions in any `window`.
class RateLimiter {
 public:
  RateLimiter(std::size_t rpm, Clock& clock, std::chrono::milliseconds window = std::chrono::seconds(60));

  /// Blocks (via the clock) until a slot is free, then takes it.
  void acquire();
  std::size_t rpm() const noexcept { return rpm_; }

 private:
  std::size_t rpm_;
  Clock& clock_;
  std::chrono::milliseconds window_;
  std::mutex mutex_;
  std::deque<std::chrono::milliseconds> issued_;
};

struct RetryPolicy {
  std::size_t max_attempts = 5;
  std::chrono::milliseconds initial_delay{1000};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_delay{60000};

  /// Delay after failed attempt `attempt` (1-based).
  std::chrono::milliseconds delay_after(std::size_t attempt) const;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Returns the response content or throws one of the errors above.
  virtual std::string send(const ChatRequest& request) = 0;
  virtual std::string tag() const = 0;
  virtual TemperatureRange temperature_range() const { return {}; }
};

struct ClientOptions {
  std::size_t context_window = 4096;
  /// Additional cap from the run configuration.
  TemperatureRange temperature_cap{};
  RetryPolicy retry{};
  RateLimiter* limiter = nullptr;
  Clock* clock = nullptr;
};

/// Builds a request whose max_tokens fills the window minus the prompt estimate
/// and the safety margin. Throws ContextWindowError when nothing is left.
ChatRequest make_request(std::string model, double temperature, std::string prompt, std::size_t context_window,
                         double safety_margin, OutputContract contract);

/// Throws TemperatureError / ContextWindowError.
void preflight(const ChatRequest& request, const ChatBackend& backend, const ClientOptions& options);

/// Pre-flight checks, then send with exponential backoff on TransientError.
ChatExchange complete(const ChatRequest& request, ChatBackend& backend, const ClientOptions& options);

// ---------------------------------------------------------------------------
// Gold replay.

struct CorruptionParams {
  double p_drop = 0.0;
  double p_spur = 0.0;
  double p_malformed = 0.0;
  double p_flip = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a probability is outside [0, 1].
  void validate() const;
};

/// Stream tags for the keyed random decisions made by the replay backend.
namespace replay_stream {
inline constexpr std::uint64_t drop = 1;
inline constexpr std::uint64_t malformed = 2;
inline constexpr std::uint64_t spurious = 3;
inline constexpr std::uint64_t spurious_first = 4;
inline constexpr std::uint64_t spurious_second = 5;
inline constexpr std::uint64_t flip = 6;
}  // namespace replay_stream

/// Replay seed used for run `run` (1-based) so runs corrupt independently.
std::uint64_t replay_seed_for_run(std::uint64_t base_seed, std::size_t run);

/// Interaction type written on replayed extraction rows.
inline constexpr std::string_view kReplayInteraction = "interacts with";

/// Gold data the replay backend answers from.
class ReplayGold {
 public:
  explicit ReplayGold(std::shared_ptr<const Corpus> corpus);

  const Corpus& corpus() const noexcept { return *corpus_; }
  /// Original-surface dictionary; spurious names are drawn from it.
  const std::vector<std::string>& names() const noexcept { return dictionary_.names(); }
  /// Pair ordinal whose masked text equals `masked_text` (prompt-flattened).
  std::optional<std::size_t> resolve_variant(const Sentence& sentence, std::string_view masked_text) const;

 private:
  std::shared_ptr<const Corpus> corpus_;
  ProteinDictionary dictionary_;
};

/// Deterministic synthetic answer for the prompt inputs. All randomness is keyed
/// by (params.seed, sentence_id, pair ordinal, stream). Throws ReplayError for
/// unknown sentences.
std::string gold_replay(const std::vector<InputLine>& inputs, const ReplayGold& gold, OutputContract contract,
                        const CorruptionParams& params);

class ReplayBackend : public ChatBackend {
 public:
  ReplayBackend(std::shared_ptr<const ReplayGold> gold, CorruptionParams params);

  std::string send(const ChatRequest& request) override;
  std::string tag() const override { return "replay"; }

 private:
  std::shared_ptr<const ReplayGold> gold_;
  CorruptionParams params_;
};

// ---------------------------------------------------------------------------
// Live OpenAI-compatible endpoint.

struct LiveConfig {
  /// e.g. "https://api.openai.com/v1"; requests go to `<base_url>/chat/completions`.
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::chrono::seconds timeout{120};

  /// Reads the key from PPIBENCH_API_KEY. Throws AuthError when unset.
  static LiveConfig from_env(std::string base_url);
};

class LiveBackend : public ChatBackend {
 public:
  explicit LiveBackend(LiveConfig config);

  std::string send(const ChatRequest& request) override;
  std::string tag() const override { return "live"; }

  /// JSON request body for `request`.
  static std::string request_body(const ChatRequest& request);
  /// Content of the first choice's message. Throws EnvelopeError.
  static std::string extract_content(const std::string& body);

 private:
  LiveConfig config_;
  std::string host_;    // scheme://host[:port]
  std::string prefix_;  // path prefix, without trailing slash
};

// ---------------------------------------------------------------------------
// Randomized run schedule.

struct WorkItem {
  std::size_t run = 1;
  std::size_t dataset = 0;
  std::size_t fold = 0;
  std::string model;
  PromptSetting setting = PromptSetting::base_10fold;
  double temperature = 0.0;

  /// File-name-safe identifier, unique within a schedule.
  std::string id(const std::vector<std::string>& dataset_names = {}) const;

  bool operator==(const WorkItem&) const = default;
};

/// Full cross product shuffled by a seeded RNG. Throws ConfigError on an empty axis.
std::vector<WorkItem> build_schedule(const std::vector<std::size_t>& folds, const std::vector<std::string>& models,
                                     const std::vector<PromptSetting>& settings,
                                     const std::vector<double>& temperatures, std::size_t runs, std::uint64_t seed,
                                     std::size_t datasets = 1);

}  // namespace ppibench::llm
