// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "oracles.hpp"
#include "twin/providers.hpp"

using namespace twin;

namespace {

/// In-process model service speaking the provider protocol.
class FakeService {
 public:
  FakeService() {
    server_.Post(R"(/v1/generate)", [this](const httplib::Request& req, httplib::Response& res) {
      ++generate_calls;
      const auto body = Json::parse(req.body);
      {
        std::lock_guard<std::mutex> lock(mu_);
        last_generate = body;
        last_auth = req.get_header_value("Authorization");
      }
      Json choices = Json::array();
      const std::string prompt = body["messages"][0]["content"];
      for (std::size_t i = 0; i < body["n"].get<std::size_t>(); ++i) {
        choices.push_back(Json{{"index", i}, {"message", {{"role", "assistant"}, {"content", prompt + "#" + std::to_string(i)}}}});
      }
      res.set_content(Json{{"choices", choices}}.dump(), "application/json");
    });
    server_.Post(R"(/v1/embed)", [this](const httplib::Request& req, httplib::Response& res) {
      ++embed_calls;
      const auto body = Json::parse(req.body);
      std::this_thread::sleep_for(std::chrono::microseconds(std::hash<std::string>{}(req.body) % 3000));
      Json vectors = Json::array();
      for (const auto& t : body["texts"]) {
        const std::string s = t;
        vectors.push_back({static_cast<double>(s.size()), std::atof(s.c_str() + 1)});
      }
      res.set_content(Json{{"vectors", vectors}}.dump(), "application/json");
    });
    server_.Post(R"(/v1/perplexity)", [this](const httplib::Request& req, httplib::Response& res) {
      if (perplexity_calls++ < fail_first) {
        res.status = 500;
        return;
      }
      const auto body = Json::parse(req.body);
      Json scores = Json::array();
      for (const auto& t : body["texts"]) scores.push_back(10.0 + t.get<std::string>().size());
      res.set_content(Json{{"scores", scores}}.dump(), "application/json");
    });
    server_.Post(R"(/v1/toxicity)", [this](const httplib::Request& req, httplib::Response& res) {
      ++toxicity_calls;
      const auto body = Json::parse(req.body);
      for (const auto& t : body["texts"]) {
        if (t == "poison") {
          res.status = 400;
          res.set_content("bad input", "text/plain");
          return;
        }
      }
      Json scores = Json::array();
      for (std::size_t i = 0; i < body["texts"].size(); ++i) scores.push_back(0.25);
      res.set_content(Json{{"scores", scores}}.dump(), "application/json");
    });
    server_.Post(R"(/v1/emotions)", [](const httplib::Request& req, httplib::Response& res) {
      const auto body = Json::parse(req.body);
      Json vectors = Json::array();
      for (std::size_t i = 0; i < body["texts"].size(); ++i) {
        Json labeled = Json::object();
        for (std::size_t e = 0; e < kEmotionCount; ++e) labeled[kEmotionLabels[e]] = e == 4 ? 0.9 : 0.05;
        vectors.push_back(labeled);
      }
      res.set_content(Json{{"vectors", vectors}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  ProviderConfig config() const {
    ProviderConfig c;
    c.kind = "http";
    c.endpoint = endpoint();
    c.model = "test-model";
    c.auth_token = "secret";
    c.timeout_s = 5;
    c.retry.initial_backoff_s = 0.01;
    return c;
  }

  std::atomic<int> generate_calls{0}, embed_calls{0}, perplexity_calls{0}, toxicity_calls{0};
  int fail_first = 0;
  Json last_generate;
  std::string last_auth;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
};

}  // namespace

TEST_CASE("generation speaks the chat-completions wire format") {
  FakeService svc;
  auto p = Provider::create(svc.config());
  GenerationParams params{0.7, 32, 3, 99};
  const auto out = p->generate("What would you tweet?", params);
  REQUIRE(out.size() == 3);
  CHECK(out[2] == "What would you tweet?#2");
  const Json& body = svc.last_generate;
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "What would you tweet?");
  CHECK(body["temperature"].get<double>() == doctest::Approx(0.7));
  CHECK(body["n"] == 3);
  CHECK(body["max_tokens"] == 32);
  CHECK(body["seed"] == 99);
  CHECK(body["model"] == "test-model");
  CHECK(svc.last_auth == "Bearer secret");
}

TEST_CASE("large generation requests are split by max_n_per_request") {
  FakeService svc;
  auto cfg = svc.config();
  cfg.max_n_per_request = 8;
  auto p = Provider::create(cfg);
  const auto out = p->generate("x", GenerationParams{1.0, 8, 20, 1});
  CHECK(out.size() == 20);
  CHECK(svc.generate_calls == 3);
  CHECK(p->generate("x", GenerationParams{1.0, 8, 0, 1}).empty());
  CHECK_THROWS_AS(p->generate("", GenerationParams{}), UserError);
}

TEST_CASE("a server error is retried and then succeeds") {
  FakeService svc;
  svc.fail_first = 1;
  auto p = Provider::create(svc.config());
  const auto out = p->perplexity({"abc", "de"});
  CHECK(out == std::vector<double>{13.0, 12.0});
  CHECK(p->request_count() == 2);
  CHECK(svc.perplexity_calls == 2);
}

TEST_CASE("persistent server errors exhaust the retry budget") {
  FakeService svc;
  svc.fail_first = 100;
  auto cfg = svc.config();
  cfg.retry.max_attempts = 3;
  auto p = Provider::create(cfg);
  try {
    p->perplexity({"a"});
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(e.kind() == ProviderError::Kind::Transport);
    CHECK(std::string(e.what()).find("500") != std::string::npos);
  }
  CHECK(svc.perplexity_calls == 3);
}

TEST_CASE("client errors are not retried and report unscored indices") {
  FakeService svc;
  auto cfg = svc.config();
  cfg.batch_size = 2;
  auto p = Provider::create(cfg);
  try {
    p->toxicity({"a", "b", "c", "poison", "e"});
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(e.kind() == ProviderError::Kind::Protocol);
    CHECK(e.unscored() == std::vector<std::size_t>{2, 3});
    CHECK(std::string(e.what()).find("batch 1") != std::string::npos);
  }
  CHECK(svc.toxicity_calls == 3);
}

TEST_CASE("an unreachable endpoint is a transport error") {
  ProviderConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1";
  cfg.timeout_s = 1;
  cfg.retry.max_attempts = 2;
  cfg.retry.initial_backoff_s = 0.01;
  auto p = Provider::create(cfg);
  try {
    p->embed({"x"});
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(e.retryable());
    CHECK(std::string(e.what()).find("after 2 attempts") != std::string::npos);
  }
  CHECK(p->request_count() == 2);
}

TEST_CASE("cached responses make a rerun free") {
  FakeService svc;
  const auto dir = oracle::temp_dir("twin-cache");
  std::vector<std::string> texts;
  for (int i = 0; i < 100; ++i) texts.push_back("t" + std::to_string(i));
  std::vector<std::vector<double>> first;
  {
    auto p = Provider::create(svc.config(), std::make_shared<ResponseCache>(dir / "cache.jsonl"));
    first = p->embed(texts);
    CHECK(p->generate("hello", GenerationParams{1.0, 8, 3, 5}).size() == 3);
    CHECK(p->request_count() > 0);
  }
  auto p = Provider::create(svc.config(), std::make_shared<ResponseCache>(dir / "cache.jsonl"));
  CHECK(p->embed(texts) == first);
  CHECK(p->generate("hello", GenerationParams{1.0, 8, 3, 5}).size() == 3);
  CHECK(p->request_count() == 0);
  // A different seed is a different request.
  p->generate("hello", GenerationParams{1.0, 8, 3, 6});
  CHECK(p->request_count() == 1);
}

TEST_CASE("results keep input order under concurrency") {
  FakeService svc;
  auto cfg = svc.config();
  cfg.batch_size = 64;
  cfg.max_in_flight = 8;
  auto p = Provider::create(cfg);
  std::vector<std::string> texts;
  for (int i = 0; i < 1000; ++i) texts.push_back("t" + std::to_string(i));
  const auto out = p->embed(texts);
  REQUIRE(out.size() == 1000);
  for (int i = 0; i < 1000; ++i) CHECK(out[i][1] == doctest::Approx(static_cast<double>(i)));
  CHECK(svc.embed_calls == 16);
}

TEST_CASE("labeled emotion vectors follow the fixed label order") {
  FakeService svc;
  auto p = Provider::create(svc.config());
  const auto e = p->emotions({"so happy"});
  REQUIRE(e.size() == 1);
  CHECK(e[0][4] == doctest::Approx(0.9));
  CHECK(std::string(kEmotionLabels[4]) == "joy");
  CHECK_THROWS_AS(p->emotions({}), UserError);
}

TEST_CASE("protocol parsers") {
  CHECK(HttpBackend::parse_chat_response(R"({"choices":[{"text":"a"},{"message":{"content":"b"}}]})") ==
        std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(HttpBackend::parse_chat_response("{}"), ProviderError);
  CHECK_THROWS_AS(HttpBackend::parse_chat_response("not json"), ProviderError);
  CHECK(HttpBackend::parse_score_response(ScoreKind::Toxicity, R"({"scores":[0.5]})")[0][0] == 0.5);
  CHECK_THROWS_AS(HttpBackend::parse_score_response(ScoreKind::Embed, R"({"scores":[0.5]})"), ProviderError);
  const auto req = HttpBackend::chat_request("", "p", GenerationParams{1.0, 10, 2, 3});
  CHECK_FALSE(req.contains("model"));
}

TEST_CASE("mock backend is deterministic and in range") {
  ProviderConfig cfg;
  cfg.kind = "mock";
  cfg.mock_seed = 4;
  auto a = Provider::create(cfg), b = Provider::create(cfg);
  const std::vector<std::string> texts{"one two", "three four five", "x"};
  CHECK(a->perplexity(texts) == b->perplexity(texts));
  for (double t : a->toxicity(texts)) CHECK((t >= 0 && t <= 1));
  for (double x : a->perplexity(texts)) CHECK(x > 0);
  for (const auto& e : a->emotions(texts))
    for (double x : e) CHECK((x >= 0 && x <= 1));
  CHECK(a->embed(texts)[0].size() == 16);
  const GenerationParams params{1.0, 16, 5, 1};
  CHECK(a->generate("What would you tweet about fasting?", params) ==
        b->generate("What would you tweet about fasting?", params));
  cfg.mock_seed = 5;
  CHECK(Provider::create(cfg)->perplexity(texts) != a->perplexity(texts));
}

TEST_CASE("provider config parsing and validation") {
  ::setenv("TWIN_TEST_TOKEN", "from-env", 1);
  const auto c = ProviderConfig::from_json(
      Json::parse(R"({"endpoint":"http://h:1","auth_token_env":"TWIN_TEST_TOKEN","max_in_flight":2})"));
  CHECK(c.auth_token == "from-env");
  CHECK(c.max_in_flight == 2);
  CHECK_FALSE(c.to_json().dump().find("from-env") != std::string::npos);
  ProviderConfig bad;
  bad.timeout_s = 0;
  CHECK_THROWS_AS(bad.validate(), UserError);
  bad = ProviderConfig{};
  bad.max_in_flight = 0;
  CHECK_THROWS_AS(bad.validate(), UserError);
  bad = ProviderConfig{};
  bad.kind = "ftp";
  CHECK_THROWS_AS(bad.validate(), UserError);
}
