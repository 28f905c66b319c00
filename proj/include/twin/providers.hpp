// SPDX-License-Identifier: Apache-2.0
//
// Uniform access to external model services (generation, embedding, emotion,
// toxicity, perplexity). A Provider wraps a transport Backend and adds
// batching, bounded concurrency, retries, a persistent response cache and a
// request counter. Result order always equals input order.

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "twin/util.hpp"

namespace twin {

inline constexpr std::size_t kEmotionCount = 11;

/// Label order of every EmotionVector.
inline constexpr std::array<const char*, kEmotionCount> kEmotionLabels = {
    "anger", "anticipation", "disgust",  "fear",     "joy",  "love",
    "optimism", "pessimism", "sadness", "surprise", "trust"};

using EmotionVector = std::array<double, kEmotionCount>;

struct RetryPolicy {
  int max_attempts = 3;
  double initial_backoff_s = 0.25;
  double backoff_factor = 2.0;
};

struct ProviderConfig {
  std::string kind = "http";  // "http" | "mock"
  std::string endpoint;       // base URL, e.g. http://127.0.0.1:8000
  std::string auth_token;
  std::string model;
  double timeout_s = 60.0;
  int max_in_flight = 4;
  std::size_t batch_size = 64;
  std::size_t max_n_per_request = 8;
  RetryPolicy retry;
  std::string generate_path = "/generate";

  // Mock backend only.
  std::uint64_t mock_seed = 0;
  std::size_t mock_embedding_dim = 16;
  std::vector<std::string> mock_vocabulary;

  /// Throws UserError on violated invariants (timeout > 0, max in-flight >= 1, ...).
  void validate() const;

  /// Reads the config object. `auth_token_env` names an environment variable
  /// consulted when `auth_token` is absent; TWIN_API_TOKEN is the fallback.
  static ProviderConfig from_json(const Json& j);
  Json to_json() const;  // without the auth token
};

struct GenerationParams {
  double temperature = 1.0;
  int max_tokens = 64;
  std::size_t count = 1;
  std::uint64_t seed = 0;
};

enum class ScoreKind { Embed, Emotions, Toxicity, Perplexity };

const char* score_kind_name(ScoreKind kind);

class ProviderError : public std::runtime_error {
 public:
  enum class Kind { Transport, Protocol };

  ProviderError(Kind kind, const std::string& what, std::vector<std::size_t> unscored = {})
      : std::runtime_error(what), kind_(kind), unscored_(std::move(unscored)) {}

  Kind kind() const { return kind_; }
  bool retryable() const { return kind_ == Kind::Transport; }
  /// Input indices left without a result when a batched call aborts.
  const std::vector<std::size_t>& unscored() const { return unscored_; }

 private:
  Kind kind_;
  std::vector<std::size_t> unscored_;
};

/// One request to a model service. Implementations throw ProviderError.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Stable identity used in cache keys (endpoint URL for HTTP, seed for mocks).
  virtual std::string identity() const = 0;

  /// Returns exactly params.count completions. `request_index` distinguishes
  /// the chunks of a larger request.
  virtual std::vector<std::string> complete(const std::string& prompt, const GenerationParams& params,
                                            std::size_t request_index) = 0;

  /// One vector per text; scalar kinds return one-element vectors.
  virtual std::vector<std::vector<double>> score(ScoreKind kind, std::span<const std::string> texts) = 0;
};

/// Deterministic offline backend. Every output is derived by keyed hashing of
/// (seed, input), so identical inputs give identical outputs.
class MockBackend : public Backend {
 public:
  explicit MockBackend(std::uint64_t seed, std::vector<std::string> vocabulary = {},
                       std::size_t embedding_dim = 16);

  std::string identity() const override;
  std::vector<std::string> complete(const std::string& prompt, const GenerationParams& params,
                                    std::size_t request_index) override;
  std::vector<std::vector<double>> score(ScoreKind kind, std::span<const std::string> texts) override;

  /// The per-text values, exposed so tests can reason about mock outputs.
  double perplexity_of(const std::string& text) const;
  double toxicity_of(const std::string& text) const;
  EmotionVector emotions_of(const std::string& text) const;
  std::vector<double> embedding_of(const std::string& text) const;

 private:
  double unit(std::string_view token, std::uint64_t salt) const;
  std::string tweet(const std::string& prompt, std::uint64_t key) const;

  std::uint64_t seed_;
  std::vector<std::string> vocabulary_;
  std::size_t dim_;
};

/// Speaks the JSON-over-HTTP protocol: chat-completions for generation and
/// POST {texts} -> {vectors|scores} for the scoring endpoints.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(ProviderConfig cfg);

  std::string identity() const override;
  std::vector<std::string> complete(const std::string& prompt, const GenerationParams& params,
                                    std::size_t request_index) override;
  std::vector<std::vector<double>> score(ScoreKind kind, std::span<const std::string> texts) override;

  /// Request body builders, public for protocol tests.
  static Json chat_request(const std::string& model, const std::string& prompt, const GenerationParams& params);
  static std::vector<std::string> parse_chat_response(const std::string& body);
  static std::vector<std::vector<double>> parse_score_response(ScoreKind kind, const std::string& body);

 private:
  std::string post(const std::string& path, const Json& body) const;

  ProviderConfig cfg_;
};

/// Thread-safe key/value cache persisted as an append-only JSONL file.
class ResponseCache {
 public:
  ResponseCache() = default;  // memory only
  explicit ResponseCache(std::filesystem::path file);

  bool lookup(const std::string& key, Json& value) const;
  void store(const std::string& key, const Json& value);
  std::size_t size() const;

 private:
  std::filesystem::path file_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Json> entries_;
};

class Provider {
 public:
  Provider(ProviderConfig cfg, std::unique_ptr<Backend> backend, std::shared_ptr<ResponseCache> cache = nullptr);

  /// Builds the backend named by cfg.kind.
  static std::shared_ptr<Provider> create(const ProviderConfig& cfg, std::shared_ptr<ResponseCache> cache = nullptr);

  const ProviderConfig& config() const { return cfg_; }

  std::vector<std::string> generate(const std::string& prompt, const GenerationParams& params);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);
  std::vector<EmotionVector> emotions(const std::vector<std::string>& texts);
  std::vector<double> toxicity(const std::vector<std::string>& texts);
  std::vector<double> perplexity(const std::vector<std::string>& texts);

  /// Backend calls made so far (each retry attempt counts).
  std::size_t request_count() const { return requests_.load(); }

 private:
  std::vector<std::vector<double>> score(ScoreKind kind, const std::vector<std::string>& texts);
  template <typename Fn>
  auto with_retries(Fn&& fn) -> decltype(fn());
  std::string cache_key(std::string_view op, std::string_view input, std::string_view params) const;

  ProviderConfig cfg_;
  std::unique_ptr<Backend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace twin
