// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "oracles.hpp"
#include "twin/corpus.hpp"
#include "twin/providers.hpp"

using namespace twin;

namespace {

Document doc(std::string id, std::string text, std::string community = "c") {
  Document d;
  d.id = std::move(id);
  d.text = std::move(text);
  d.community = std::move(community);
  return d;
}

class FailingBackend : public Backend {
 public:
  std::string identity() const override { return "failing"; }
  std::vector<std::string> complete(const std::string&, const GenerationParams&, std::size_t) override {
    throw ProviderError(ProviderError::Kind::Transport, "down");
  }
  std::vector<std::vector<double>> score(ScoreKind, std::span<const std::string>) override {
    throw ProviderError(ProviderError::Kind::Transport, "connection refused");
  }
};

}  // namespace

TEST_CASE("clean_text removes platform artifacts") {
  CHECK(clean_text("Day 3 @coach #fasting https://t.co/abc \xF0\x9F\x92\xAA done") == "Day 3 done");
  CHECK(clean_text("see www.example.com/x now") == "see now");
  CHECK(clean_text("email me at a@b.com") == "email me at a@b.com");
  CHECK(clean_text("#1 fan") == "fan");
  CHECK(clean_text("  spaced \n\t out  ") == "spaced out");
  CHECK(clean_text("MiXeD", CleanOptions{true, {}}) == "mixed");
  CHECK(clean_text("RT: hello", CleanOptions{false, {"^RT:"}}) == "hello");
  CHECK(clean_text("").empty());
}

TEST_CASE("clean_text keeps non-emoji unicode") {
  CHECK(clean_text("caf\xC3\xA9 \xE2\x9D\xA4 ok") == "caf\xC3\xA9 ok");
}

TEST_CASE("clean_text is idempotent on random artifact mixes") {
  const std::vector<std::string> pieces{"word", "@user",  "#tag",        "https://x.co/a", "www.y.org",
                                        "\xF0\x9F\x98\x80", "a@b",    "##", "@",  "#",  " ",  "\n",
                                        "caf\xC3\xA9",       "x#y", "(@z)", "http://", "end."};
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const int n = static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      s += pieces[rng() % pieces.size()];
      if (rng() % 2) s += ' ';
    }
    const std::string once = clean_text(s);
    REQUIRE_MESSAGE(clean_text(once) == once, "input: " << s);
  }
}

TEST_CASE("filter_originals drops reposts and replies in order") {
  auto a = doc("1", "a"), b = doc("2", "b"), c = doc("3", "c");
  b.is_repost = true;
  c.is_reply = true;
  const auto out = filter_originals({a, b, c, doc("4", "d")});
  REQUIRE(out.size() == 2);
  CHECK(out[0].id == "1");
  CHECK(out[1].id == "4");
}

TEST_CASE("curate keeps the lowest perplexity documents") {
  ProviderConfig cfg;
  cfg.kind = "mock";
  auto backend = std::make_unique<MockBackend>(11);
  const MockBackend& mock = *backend;
  Provider scorer(cfg, std::move(backend));
  Corpus corpus{"c", {}};
  for (int i = 0; i < 30; ++i) corpus.documents.push_back(doc("d" + std::to_string(i), "post number " + std::to_string(i * 7)));
  const Corpus kept = curate(corpus, scorer, 10);
  REQUIRE(kept.size() == 10);
  double worst_kept = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    REQUIRE(kept.documents[i].perplexity.has_value());
    if (i > 0) CHECK(*kept.documents[i - 1].perplexity <= *kept.documents[i].perplexity);
    worst_kept = std::max(worst_kept, *kept.documents[i].perplexity);
  }
  std::size_t below = 0;
  for (const auto& d : corpus.documents) below += mock.perplexity_of(d.text) <= worst_kept;
  CHECK(below == 10);
  CHECK(curate(corpus, scorer, 100).size() == 30);
  CHECK_THROWS_AS(curate(corpus, scorer, 0), UserError);
}

TEST_CASE("curate names the community when the scorer fails") {
  ProviderConfig cfg;
  cfg.kind = "mock";
  cfg.retry.max_attempts = 1;
  Provider scorer(cfg, std::make_unique<FailingBackend>());
  Corpus corpus{"Keto & Diet", {doc("1", "x", "Keto & Diet")}};
  try {
    curate(corpus, scorer);
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("curation of 'Keto & Diet' aborted") != std::string::npos);
  }
}

TEST_CASE("dedup_exact keeps first occurrences") {
  Corpus c{"c", {doc("1", "same"), doc("2", "other"), doc("3", "same")}};
  const auto d = dedup_exact(c);
  REQUIRE(d.size() == 2);
  CHECK(d.documents[0].id == "1");
  CHECK(d.documents[1].id == "2");
}

TEST_CASE("documents round trip through JSONL") {
  const auto dir = oracle::temp_dir("twin-corpus");
  auto a = doc("1", "hello \"world\"\nline");
  a.author = "u1";
  a.perplexity = 12.5;
  a.provenance = Provenance::Finetuned;
  a.topic = "fasting";
  a.is_reply = true;
  write_documents(dir / "d.jsonl", {a, doc("2", "x")});
  const auto back = read_documents(dir / "d.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].text == a.text);
  CHECK(back[0].author == "u1");
  CHECK(*back[0].perplexity == 12.5);
  CHECK(back[0].provenance == Provenance::Finetuned);
  CHECK(back[0].topic == "fasting");
  CHECK(back[0].is_reply);
  CHECK_FALSE(back[1].perplexity.has_value());
}

TEST_CASE("malformed corpus records cite the line") {
  const auto dir = oracle::temp_dir("twin-corpus-bad");
  write_file_atomic(dir / "d.jsonl", "{\"id\":\"1\",\"community\":\"c\",\"text\":\"a\"}\n{\"id\":\"2\",\"community\":\"c\"}\n");
  try {
    read_documents(dir / "d.jsonl");
    FAIL("expected an error");
  } catch (const UserError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("corpus validation") {
  Corpus c{"c", {doc("1", "a"), doc("1", "b")}};
  CHECK_THROWS_AS(c.validate(), UserError);
  c.documents[1].id = "2";
  c.validate();
  c.documents[1].community = "other";
  CHECK_THROWS_AS(c.validate(), UserError);
}

TEST_CASE("group_by_community preserves order within groups") {
  const auto g = group_by_community({doc("1", "a", "x"), doc("2", "b", "y"), doc("3", "c", "x")});
  REQUIRE(g.size() == 2);
  CHECK(g.at("x").documents[1].id == "3");
  CHECK(g.at("y").size() == 1);
}
