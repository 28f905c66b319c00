// SPDX-License-Identifier: Apache-2.0

#include "twin/providers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <regex>
#include <thread>

#include "httplib.h"
#include "twin/parallel.hpp"

namespace twin {

const char* score_kind_name(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::Embed:
      return "embed";
    case ScoreKind::Emotions:
      return "emotions";
    case ScoreKind::Toxicity:
      return "toxicity";
    case ScoreKind::Perplexity:
      return "perplexity";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// ProviderConfig
// ---------------------------------------------------------------------------

void ProviderConfig::validate() const {
  if (kind != "http" && kind != "mock") throw UserError("provider kind must be 'http' or 'mock', got '" + kind + "'");
  if (kind == "http" && endpoint.empty()) throw UserError("http provider requires an endpoint");
  if (!(timeout_s > 0)) throw UserError("provider timeout must be > 0");
  if (max_in_flight < 1) throw UserError("provider max_in_flight must be >= 1");
  if (batch_size < 1) throw UserError("provider batch_size must be >= 1");
  if (max_n_per_request < 1) throw UserError("provider max_n_per_request must be >= 1");
  if (retry.max_attempts < 1) throw UserError("retry max_attempts must be >= 1");
  if (retry.initial_backoff_s < 0 || retry.backoff_factor < 1) throw UserError("invalid retry backoff");
  if (mock_embedding_dim < 1) throw UserError("mock embedding dimension must be >= 1");
}

ProviderConfig ProviderConfig::from_json(const Json& j) {
  if (!j.is_object()) throw UserError("provider config must be an object");
  ProviderConfig c;
  c.kind = j.value("kind", c.kind);
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_n_per_request = j.value("max_n_per_request", c.max_n_per_request);
  c.generate_path = j.value("generate_path", c.generate_path);
  if (j.contains("retry")) {
    const auto& r = j.at("retry");
    c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
    c.retry.initial_backoff_s = r.value("initial_backoff_s", c.retry.initial_backoff_s);
    c.retry.backoff_factor = r.value("backoff_factor", c.retry.backoff_factor);
  }
  c.mock_seed = j.value("mock_seed", c.mock_seed);
  c.mock_embedding_dim = j.value("mock_embedding_dim", c.mock_embedding_dim);
  if (j.contains("mock_vocabulary")) c.mock_vocabulary = j.at("mock_vocabulary").get<std::vector<std::string>>();
  if (j.contains("auth_token")) {
    c.auth_token = j.at("auth_token").get<std::string>();
  } else {
    const std::string var = j.value("auth_token_env", std::string("TWIN_API_TOKEN"));
    if (const char* v = std::getenv(var.c_str())) c.auth_token = v;
  }
  c.validate();
  return c;
}

Json ProviderConfig::to_json() const {
  return Json{{"kind", kind},
              {"endpoint", endpoint},
              {"model", model},
              {"timeout_s", timeout_s},
              {"max_in_flight", max_in_flight},
              {"batch_size", batch_size},
              {"max_n_per_request", max_n_per_request},
              {"generate_path", generate_path},
              {"retry",
               {{"max_attempts", retry.max_attempts},
                {"initial_backoff_s", retry.initial_backoff_s},
                {"backoff_factor", retry.backoff_factor}}},
              {"mock_seed", mock_seed},
              {"mock_embedding_dim", mock_embedding_dim},
              {"mock_vocabulary_size", mock_vocabulary.size()}};
}

// ---------------------------------------------------------------------------
// MockBackend
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& default_vocabulary() {
  static const std::vector<std::string> words = {
      "today", "feel",    "body",   "food",    "eat",    "weight", "goal",  "day",    "love",
      "want",  "need",    "really", "good",    "bad",    "time",   "still", "never",  "always",
      "just",  "people",  "life",   "healthy", "diet",   "gym",    "week",  "pounds", "meal",
      "water", "morning", "night",  "happy",   "tired",  "strong", "self",  "mind",   "change",
      "hope",  "proud",   "try",    "start",   "keep",   "going",  "new",   "plan",   "hard",
      "easy",  "better",  "worse",  "little",  "much",   "so",     "and",   "the",    "my",
      "i",     "to",      "is",     "it",      "not",    "but",    "for",   "this"};
  return words;
}

std::vector<std::string> tokens_lower(const std::string& text) { return split_whitespace(to_lower_ascii(text)); }

}  // namespace

MockBackend::MockBackend(std::uint64_t seed, std::vector<std::string> vocabulary, std::size_t embedding_dim)
    : seed_(seed), vocabulary_(std::move(vocabulary)), dim_(embedding_dim) {
  if (vocabulary_.empty()) vocabulary_ = default_vocabulary();
  if (dim_ == 0) dim_ = 1;
}

std::string MockBackend::identity() const {
  // Vocabulary participates: two mocks with different vocabularies are different models.
  std::uint64_t h = seed_;
  for (const auto& w : vocabulary_) h = hash_combine(h, fnv1a64(w));
  return "mock:" + hex64(h) + ":" + std::to_string(dim_);
}

double MockBackend::unit(std::string_view token, std::uint64_t salt) const {
  const std::uint64_t h = hash_combine(hash_combine(seed_, salt), fnv1a64(token));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double MockBackend::perplexity_of(const std::string& text) const {
  const auto toks = tokens_lower(text);
  if (toks.empty()) return std::exp(7.0);
  double s = 0;
  for (const auto& t : toks) s += 1.0 + 6.0 * unit(t, 0x5050);
  return std::exp(s / static_cast<double>(toks.size()));
}

double MockBackend::toxicity_of(const std::string& text) const {
  const auto toks = tokens_lower(text);
  if (toks.empty()) return 0.0;
  double s = 0;
  for (const auto& t : toks) s += std::pow(unit(t, 0x7070), 3);
  return std::clamp(s / static_cast<double>(toks.size()), 0.0, 1.0);
}

EmotionVector MockBackend::emotions_of(const std::string& text) const {
  EmotionVector v{};
  const auto toks = tokens_lower(text);
  if (toks.empty()) return v;
  for (std::size_t e = 0; e < kEmotionCount; ++e) {
    double s = 0;
    for (const auto& t : toks) s += std::pow(unit(t, 0xE000 + e), 2);
    v[e] = std::clamp(s / static_cast<double>(toks.size()), 0.0, 1.0);
  }
  return v;
}

std::vector<double> MockBackend::embedding_of(const std::string& text) const {
  std::vector<double> v(dim_, 0.0);
  const auto toks = tokens_lower(text);
  if (toks.empty()) return v;
  for (const auto& t : toks) {
    for (std::size_t k = 0; k < dim_; ++k) v[k] += 2.0 * unit(t, 0x10000 + k) - 1.0;
  }
  const double norm = std::sqrt(static_cast<double>(toks.size()));
  for (auto& x : v) x /= norm;
  return v;
}

std::string MockBackend::tweet(const std::string& prompt, std::uint64_t key) const {
  Rng rng(key);
  const std::size_t length = 6 + rng.index(15);
  std::vector<std::string> words;
  words.reserve(length + 3);
  for (std::size_t i = 0; i < length; ++i) words.push_back(vocabulary_[rng.index(vocabulary_.size())]);

  // Topic-oriented instructions ("... about fasting?") mention the topic half of the time.
  static const std::regex about(R"(about ([^?.!\n]+)[?.!])");
  const auto last_line_start = prompt.find_last_of('\n');
  const std::string last_line = last_line_start == std::string::npos ? prompt : prompt.substr(last_line_start + 1);
  std::smatch m;
  if (std::regex_search(last_line, m, about) && rng.index(2) == 0) {
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.index(words.size() + 1)), m[1].str());
  }
  return join(words, " ");
}

std::vector<std::string> MockBackend::complete(const std::string& prompt, const GenerationParams& params,
                                               std::size_t request_index) {
  std::uint64_t base = hash_combine(seed_, fnv1a64(prompt));
  base = hash_combine(base, params.seed);
  base = hash_combine(base, static_cast<std::uint64_t>(std::llround(params.temperature * 1e6)));
  base = hash_combine(base, request_index);

  std::vector<std::string> out;
  out.reserve(params.count);

  if (prompt.find("only with the letter") != std::string::npos) {
    static const std::regex option_line(R"((^|\n)\s*\(?([a-z])\)\s)");
    std::vector<char> letters;
    for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), option_line); it != std::sregex_iterator();
         ++it) {
      letters.push_back((*it)[2].str()[0]);
    }
    for (std::size_t j = 0; j < params.count; ++j) {
      Rng rng(hash_combine(base, j));
      if (letters.empty()) {
        const auto n = rng.index(40);
        out.push_back(rng.index(4) == 0 ? "Answer: " + std::to_string(n) : std::to_string(n));
        continue;
      }
      const char letter = letters[rng.index(letters.size())];
      switch (rng.index(4)) {
        case 0:
          out.emplace_back(1, letter);
          break;
        case 1:
          out.push_back(std::string(1, static_cast<char>(letter - 'a' + 'A')) + ")");
          break;
        case 2:
          out.push_back("Answer: " + std::string(1, letter));
          break;
        default:
          out.push_back(std::string(1, letter) + ".");
          break;
      }
    }
    return out;
  }

  if (prompt.find("summarize the main ideas in 1 sentence") != std::string::npos) {
    std::map<std::string, std::size_t> freq;
    for (const auto& t : tokens_lower(prompt)) {
      if (t.size() >= 4 && std::all_of(t.begin(), t.end(), [](char c) { return c >= 'a' && c <= 'z'; })) ++freq[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> top;
    for (std::size_t i = 0; i < ranked.size() && top.size() < 3; ++i) top.push_back(ranked[i].first);
    while (top.size() < 3) top.push_back("everyday life");
    for (std::size_t j = 0; j < params.count; ++j) {
      out.push_back("Members mostly post about " + top[0] + ", " + top[1] + " and " + top[2] + ".");
    }
    return out;
  }

  for (std::size_t j = 0; j < params.count; ++j) out.push_back(tweet(prompt, hash_combine(base, j)));
  return out;
}

std::vector<std::vector<double>> MockBackend::score(ScoreKind kind, std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    switch (kind) {
      case ScoreKind::Embed:
        out.push_back(embedding_of(t));
        break;
      case ScoreKind::Emotions: {
        const auto e = emotions_of(t);
        out.emplace_back(e.begin(), e.end());
        break;
      }
      case ScoreKind::Toxicity:
        out.push_back({toxicity_of(t)});
        break;
      case ScoreKind::Perplexity:
        out.push_back({perplexity_of(t)});
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// HttpBackend
// ---------------------------------------------------------------------------

namespace {

std::string excerpt(const std::string& s) { return s.size() <= 200 ? s : s.substr(0, 200) + "..."; }

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  static const std::regex re(R"(^([a-zA-Z][a-zA-Z0-9+.-]*://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw UserError("invalid endpoint URL: " + url);
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

}  // namespace

HttpBackend::HttpBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) { split_url(cfg_.endpoint); }

std::string HttpBackend::identity() const { return cfg_.endpoint; }

Json HttpBackend::chat_request(const std::string& model, const std::string& prompt, const GenerationParams& params) {
  Json body{{"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", params.temperature},
            {"n", params.count},
            {"max_tokens", params.max_tokens},
            {"seed", params.seed}};
  if (!model.empty()) body["model"] = model;
  return body;
}

std::vector<std::string> HttpBackend::parse_chat_response(const std::string& body) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error&) {
    throw ProviderError(ProviderError::Kind::Protocol, "malformed generation response: " + excerpt(body));
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array()) {
    throw ProviderError(ProviderError::Kind::Protocol, "generation response lacks 'choices': " + excerpt(body));
  }
  std::vector<std::string> out;
  for (const auto& choice : j["choices"]) {
    if (choice.contains("message") && choice["message"].contains("content") &&
        choice["message"]["content"].is_string()) {
      out.push_back(choice["message"]["content"].get<std::string>());
    } else if (choice.contains("text") && choice["text"].is_string()) {
      out.push_back(choice["text"].get<std::string>());
    } else {
      throw ProviderError(ProviderError::Kind::Protocol, "choice without content: " + excerpt(body));
    }
  }
  return out;
}

std::vector<std::vector<double>> HttpBackend::parse_score_response(ScoreKind kind, const std::string& body) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error&) {
    throw ProviderError(ProviderError::Kind::Protocol,
                        std::string("malformed ") + score_kind_name(kind) + " response: " + excerpt(body));
  }
  const bool vectors = kind == ScoreKind::Embed || kind == ScoreKind::Emotions;
  const char* field = vectors ? "vectors" : "scores";
  if (!j.is_object() || !j.contains(field) || !j[field].is_array()) {
    throw ProviderError(ProviderError::Kind::Protocol,
                        std::string(score_kind_name(kind)) + " response lacks '" + field + "': " + excerpt(body));
  }
  std::vector<std::vector<double>> out;
  try {
    for (const auto& item : j[field]) {
      if (!vectors) {
        out.push_back({item.get<double>()});
      } else if (kind == ScoreKind::Emotions && item.is_object()) {
        // Labeled form: {"anger": 0.1, ...}.
        std::vector<double> v(kEmotionCount);
        for (std::size_t e = 0; e < kEmotionCount; ++e) v[e] = item.at(kEmotionLabels[e]).get<double>();
        out.push_back(std::move(v));
      } else {
        out.push_back(item.get<std::vector<double>>());
      }
    }
  } catch (const Json::exception&) {
    throw ProviderError(ProviderError::Kind::Protocol,
                        std::string("bad values in ") + score_kind_name(kind) + " response: " + excerpt(body));
  }
  return out;
}

std::string HttpBackend::post(const std::string& path, const Json& body) const {
  const auto url = split_url(cfg_.endpoint);
  httplib::Client cli(url.origin);
  const auto secs = static_cast<time_t>(cfg_.timeout_s);
  const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!cfg_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.auth_token);
  const std::string full_path = url.prefix + path;
  auto res = cli.Post(full_path, headers, body.dump(), "application/json");
  if (!res) {
    throw ProviderError(ProviderError::Kind::Transport,
                        "POST " + cfg_.endpoint + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError(ProviderError::Kind::Transport,
                        "POST " + cfg_.endpoint + path + " returned HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError(ProviderError::Kind::Protocol, "POST " + cfg_.endpoint + path + " returned HTTP " +
                                                           std::to_string(res->status) + ": " + excerpt(res->body));
  }
  return res->body;
}

std::vector<std::string> HttpBackend::complete(const std::string& prompt, const GenerationParams& params,
                                               std::size_t /*request_index*/) {
  auto out = parse_chat_response(post(cfg_.generate_path, chat_request(cfg_.model, prompt, params)));
  if (out.size() != params.count) {
    throw ProviderError(ProviderError::Kind::Protocol, "expected " + std::to_string(params.count) +
                                                           " completions, got " + std::to_string(out.size()));
  }
  return out;
}

std::vector<std::vector<double>> HttpBackend::score(ScoreKind kind, std::span<const std::string> texts) {
  Json body{{"texts", Json(std::vector<std::string>(texts.begin(), texts.end()))}};
  if (!cfg_.model.empty()) body["model"] = cfg_.model;
  return parse_score_response(kind, post(std::string("/") + score_kind_name(kind), body));
}

// ---------------------------------------------------------------------------
// ResponseCache
// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path file) : file_(std::move(file)) {
  if (std::filesystem::exists(file_)) {
    std::ifstream in(file_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto j = Json::parse(line);
        entries_[j.at("k").get<std::string>()] = j.at("v");
      } catch (const Json::exception&) {
        // A torn trailing line from an interrupted run; later entries still load.
      }
    }
  } else if (file_.has_parent_path()) {
    std::filesystem::create_directories(file_.parent_path());
  }
}

bool ResponseCache::lookup(const std::string& key, Json& value) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  value = it->second;
  return true;
}

void ResponseCache::store(const std::string& key, const Json& value) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!entries_.emplace(key, value).second) return;
  if (file_.empty()) return;
  std::ofstream out(file_, std::ios::binary | std::ios::app);
  out << Json{{"k", key}, {"v", value}}.dump() << '\n';
}

std::size_t ResponseCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Provider
// ---------------------------------------------------------------------------

Provider::Provider(ProviderConfig cfg, std::unique_ptr<Backend> backend, std::shared_ptr<ResponseCache> cache)
    : cfg_(std::move(cfg)), backend_(std::move(backend)), cache_(std::move(cache)) {
  cfg_.validate();
}

std::shared_ptr<Provider> Provider::create(const ProviderConfig& cfg, std::shared_ptr<ResponseCache> cache) {
  cfg.validate();
  std::unique_ptr<Backend> backend;
  if (cfg.kind == "mock") {
    backend = std::make_unique<MockBackend>(cfg.mock_seed, cfg.mock_vocabulary, cfg.mock_embedding_dim);
  } else {
    backend = std::make_unique<HttpBackend>(cfg);
  }
  return std::make_shared<Provider>(cfg, std::move(backend), std::move(cache));
}

template <typename Fn>
auto Provider::with_retries(Fn&& fn) -> decltype(fn()) {
  double backoff = cfg_.retry.initial_backoff_s;
  for (int attempt = 1;; ++attempt) {
    ++requests_;
    try {
      return fn();
    } catch (const ProviderError& e) {
      if (!e.retryable() || attempt >= cfg_.retry.max_attempts) {
        if (!e.retryable()) throw;
        throw ProviderError(e.kind(), std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
      }
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    backoff *= cfg_.retry.backoff_factor;
  }
}

std::string Provider::cache_key(std::string_view op, std::string_view input, std::string_view params) const {
  std::string head = backend_->identity();
  head += '\x1f';
  head += cfg_.model;
  head += '\x1f';
  head += op;
  head += '\x1f';
  head += params;
  const std::uint64_t input_hash = fnv1a64(input);
  const std::uint64_t a = hash_combine(fnv1a64(head), input_hash);
  const std::uint64_t b = hash_combine(fnv1a64(head, 0x84222325cbf29ce4ULL), fnv1a64(input, 0x1234567890abcdefULL));
  return hex64(a) + hex64(b);
}

std::vector<std::string> Provider::generate(const std::string& prompt, const GenerationParams& params) {
  if (prompt.empty()) throw UserError("generate: prompt must be non-empty");
  if (params.count == 0) return {};
  const std::size_t chunk = cfg_.max_n_per_request;
  const std::size_t n_chunks = (params.count + chunk - 1) / chunk;
  std::vector<std::vector<std::string>> parts(n_chunks);

  auto errors = parallel_for(n_chunks, static_cast<std::size_t>(cfg_.max_in_flight), [&](std::size_t c) {
    GenerationParams p = params;
    p.count = std::min(chunk, params.count - c * chunk);
    const std::string param_key = format_fixed(p.temperature, 6) + "|" + std::to_string(p.max_tokens) + "|" +
                                  std::to_string(p.count) + "|" + std::to_string(p.seed) + "|" + std::to_string(c);
    const std::string key = cache_key("generate", prompt, param_key);
    Json cached;
    if (cache_ && cache_->lookup(key, cached)) {
      parts[c] = cached.get<std::vector<std::string>>();
      return;
    }
    auto texts = with_retries([&] { return backend_->complete(prompt, p, c); });
    if (texts.size() != p.count) {
      throw ProviderError(ProviderError::Kind::Protocol, "backend returned " + std::to_string(texts.size()) +
                                                             " completions, expected " + std::to_string(p.count));
    }
    if (cache_) cache_->store(key, Json(texts));
    parts[c] = std::move(texts);
  });
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<std::string> out;
  out.reserve(params.count);
  for (auto& p : parts) {
    for (auto& s : p) out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::vector<double>> Provider::score(ScoreKind kind, const std::vector<std::string>& texts) {
  if (texts.empty()) throw UserError(std::string(score_kind_name(kind)) + ": texts must be non-empty");
  std::vector<std::vector<double>> results(texts.size());
  std::vector<std::string> keys(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = cache_key(score_kind_name(kind), texts[i], "");
    Json cached;
    if (cache_ && cache_->lookup(keys[i], cached)) {
      results[i] = cached.get<std::vector<double>>();
    } else {
      missing.push_back(i);
    }
  }

  const std::size_t batch = cfg_.batch_size;
  const std::size_t n_batches = (missing.size() + batch - 1) / batch;
  auto errors = parallel_for(n_batches, static_cast<std::size_t>(cfg_.max_in_flight), [&](std::size_t b) {
    const std::size_t begin = b * batch;
    const std::size_t end = std::min(missing.size(), begin + batch);
    std::vector<std::string> chunk;
    chunk.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) chunk.push_back(texts[missing[k]]);
    auto scored = with_retries([&] { return backend_->score(kind, chunk); });
    if (scored.size() != chunk.size()) {
      throw ProviderError(ProviderError::Kind::Protocol, "backend returned " + std::to_string(scored.size()) +
                                                             " results for " + std::to_string(chunk.size()) + " texts");
    }
    for (std::size_t k = begin; k < end; ++k) results[missing[k]] = std::move(scored[k - begin]);
  });

  std::vector<std::size_t> unscored;
  std::string first_message;
  std::size_t failed_batches = 0;
  bool any_transport = false;
  for (std::size_t b = 0; b < n_batches; ++b) {
    if (!errors[b]) continue;
    ++failed_batches;
    try {
      std::rethrow_exception(errors[b]);
    } catch (const ProviderError& e) {
      any_transport = any_transport || e.kind() == ProviderError::Kind::Transport;
      if (first_message.empty()) first_message = "batch " + std::to_string(b) + ": " + e.what();
    } catch (const std::exception& e) {
      if (first_message.empty()) first_message = "batch " + std::to_string(b) + ": " + e.what();
    }
    const std::size_t begin = b * batch;
    const std::size_t end = std::min(missing.size(), begin + batch);
    for (std::size_t k = begin; k < end; ++k) unscored.push_back(missing[k]);
  }
  if (failed_batches > 0) {
    throw ProviderError(any_transport ? ProviderError::Kind::Transport : ProviderError::Kind::Protocol,
                        std::string(score_kind_name(kind)) + ": " + std::to_string(failed_batches) +
                            " batch(es) failed, " + std::to_string(unscored.size()) + " texts unscored; " +
                            first_message,
                        std::move(unscored));
  }
  if (cache_) {
    for (std::size_t i : missing) cache_->store(keys[i], Json(results[i]));
  }
  return results;
}

std::vector<std::vector<double>> Provider::embed(const std::vector<std::string>& texts) {
  auto out = score(ScoreKind::Embed, texts);
  const std::size_t dim = out.front().size();
  for (const auto& v : out) {
    if (v.empty() || v.size() != dim) throw ProviderError(ProviderError::Kind::Protocol, "inconsistent embedding dimension");
  }
  return out;
}

std::vector<EmotionVector> Provider::emotions(const std::vector<std::string>& texts) {
  auto raw = score(ScoreKind::Emotions, texts);
  std::vector<EmotionVector> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].size() != kEmotionCount) {
      throw ProviderError(ProviderError::Kind::Protocol,
                          "emotion vector has " + std::to_string(raw[i].size()) + " components, expected 11");
    }
    for (std::size_t e = 0; e < kEmotionCount; ++e) {
      const double x = raw[i][e];
      if (!(x >= 0.0 && x <= 1.0)) {
        throw ProviderError(ProviderError::Kind::Protocol, "emotion confidence outside [0,1]");
      }
      out[i][e] = x;
    }
  }
  return out;
}

std::vector<double> Provider::toxicity(const std::vector<std::string>& texts) {
  auto raw = score(ScoreKind::Toxicity, texts);
  std::vector<double> out;
  out.reserve(raw.size());
  for (const auto& v : raw) {
    if (v.size() != 1 || !(v[0] >= 0.0 && v[0] <= 1.0)) {
      throw ProviderError(ProviderError::Kind::Protocol, "toxicity score outside [0,1]");
    }
    out.push_back(v[0]);
  }
  return out;
}

std::vector<double> Provider::perplexity(const std::vector<std::string>& texts) {
  auto raw = score(ScoreKind::Perplexity, texts);
  std::vector<double> out;
  out.reserve(raw.size());
  for (const auto& v : raw) {
    if (v.size() != 1 || !(v[0] >= 0.0)) throw ProviderError(ProviderError::Kind::Protocol, "negative perplexity");
    out.push_back(v[0]);
  }
  return out;
}

}  // namespace twin
