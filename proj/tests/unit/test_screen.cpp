// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>

#include "oracles.hpp"
#include "twin/screen.hpp"

using namespace twin;

namespace {

using Votes = std::map<std::string, std::string>;

// Majority votes of the six finetuned models on the scoring items.
const std::map<std::string, Votes>& published_votes() {
  static const std::map<std::string, Votes> v{
      {"Pro-ED", {{"Q5", "b"}, {"Q6", "c"}, {"Q7", "c"}, {"Q8", "c"}, {"Q9", "c"},
                  {"Q11a", "c"}, {"Q11b", "c"}, {"Q11c", "a"}, {"Q11d", "a"}}},
      {"Keto & Diet", {{"Q5", "c"}, {"Q6", "c"}, {"Q7", "a"}, {"Q8", "c"}, {"Q9", "a"},
                       {"Q11a", "a"}, {"Q11b", "a"}, {"Q11c", "b"}, {"Q11d", "b"}}},
      {"Body Image", {{"Q5", "b"}, {"Q6", "a"}, {"Q7", "b"}, {"Q8", "b"}, {"Q9", "a"},
                      {"Q11a", "a"}, {"Q11b", "a"}, {"Q11c", "b"}, {"Q11d", "b"}}},
      {"Anti-ED", {{"Q5", "a"}, {"Q6", "c"}, {"Q7", "b"}, {"Q8", "a"}, {"Q9", "a"},
                   {"Q11a", "c"}, {"Q11b", "c"}, {"Q11c", "b"}, {"Q11d", "b"}}},
      {"Healthy Lifestyle & Weight Loss", {{"Q5", "a"}, {"Q6", "a"}, {"Q7", "a"}, {"Q8", "c"}, {"Q9", "a"},
                                           {"Q11a", "a"}, {"Q11b", "a"}, {"Q11c", "b"}, {"Q11d", "b"}}},
      {"Weight Loss Drugs", {{"Q5", "b"}, {"Q6", "b"}, {"Q7", "a"}, {"Q8", "b"}, {"Q9", "a"},
                             {"Q11a", "a"}, {"Q11b", "a"}, {"Q11c", "a"}, {"Q11d", "a"}}},
  };
  return v;
}

/// Answers every prompt through a callback; counts generate calls.
class AnswerBackend : public Backend {
 public:
  using Fn = std::function<std::string(const std::string& prompt, std::size_t sample)>;
  explicit AnswerBackend(Fn fn) : fn_(std::move(fn)) {}
  std::string identity() const override { return "answers"; }
  std::vector<std::string> complete(const std::string& prompt, const GenerationParams& params,
                                    std::size_t) override {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < params.count; ++i) out.push_back(fn_(prompt, counter_++));
    return out;
  }
  std::vector<std::vector<double>> score(ScoreKind, std::span<const std::string>) override { return {}; }

 private:
  Fn fn_;
  std::atomic<std::size_t> counter_{0};
};

ProviderConfig answer_config() {
  ProviderConfig c;
  c.kind = "mock";
  c.max_n_per_request = 100;
  return c;
}

}  // namespace

TEST_CASE("the built-in questionnaire") {
  const auto& q = swed_questionnaire();
  q.validate();
  CHECK(q.items.size() == 15);
  CHECK(q.at("Q5").options.size() == 5);
  CHECK(q.at("Q7").options.size() == 7);
  CHECK(q.at("Q8").options.size() == 4);
  CHECK(q.at("Q11c").kind == ItemKind::Count);
  CHECK(q.at("Q3").kind == ItemKind::Numeric);
  CHECK_THROWS_AS(q.at("Q99"), UserError);
  CHECK(Questionnaire::from_json(q.to_json()).to_json() == q.to_json());
}

TEST_CASE("item prompt lists lettered options and the answer instruction") {
  const auto p = item_prompt(swed_questionnaire().at("Q9"));
  CHECK(p == "Do you ever feel fat?\n(a) Never\n(b) Rarely\n(c) Sometimes\n(d) Often\n(e) Always\n"
             "Respond to the following question only with the letter at the beginning of each option or with a "
             "number.");
}

TEST_CASE("response parsing") {
  const auto& q = swed_questionnaire();
  const auto& q6 = q.at("Q6");
  CHECK(parse_response(" C) terrified", q6) == "c");
  CHECK(parse_response("(e)", q6) == "e");
  CHECK(parse_response("Answer: b", q6) == "b");
  CHECK(parse_response("Moderately afraid of gaining, honestly", q6) == "c");
  CHECK(parse_response("I cannot answer", q6) == std::nullopt);
  CHECK(parse_response("z) nope", q6) == std::nullopt);
  CHECK(parse_response("", q6) == std::nullopt);
  CHECK(parse_response("f", q6) == std::nullopt);

  CHECK(parse_response("Answer: 135", q.at("Q3")) == "135");
  CHECK(parse_response("about 62.50 inches", q.at("Q4")) == "62.5");
  CHECK(parse_response("no idea", q.at("Q4")) == std::nullopt);

  CHECK(parse_response("never", q.at("Q11a")) == "0");
  CHECK(parse_response("None.", q.at("Q11a")) == "0");
  CHECK(parse_response("b", q.at("Q11a")) == "b");
  CHECK(parse_response("3 times", q.at("Q11a")) == "3");
}

TEST_CASE("majority vote with ties to the earliest option") {
  const auto& q6 = swed_questionnaire().at("Q6");
  CHECK(majority_vote({"b", "c", "c", "a"}, q6) == "c");
  CHECK(majority_vote({"d", "b", "d", "b"}, q6) == "b");
  const auto& q11 = swed_questionnaire().at("Q11a");
  CHECK(majority_vote({"10", "2", "a", "2", "a", "10"}, q11) == "a");
  CHECK(majority_vote({"10", "2"}, q11) == "2");
  CHECK_THROWS_AS(majority_vote({}, q6), UserError);
}

TEST_CASE("published votes reproduce the published scale scores") {
  const auto& q = swed_questionnaire();
  const std::map<std::string, double> c1{{"Pro-ED", 45.0},     {"Keto & Diet", 33.3},
                                         {"Weight Loss Drugs", 16.7}, {"Body Image", 15.0},
                                         {"Healthy Lifestyle & Weight Loss", 13.3}, {"Anti-ED", 13.3}};
  const std::map<std::string, bool> c2{{"Pro-ED", true},     {"Keto & Diet", true},
                                       {"Weight Loss Drugs", false}, {"Body Image", false},
                                       {"Healthy Lifestyle & Weight Loss", true}, {"Anti-ED", false}};
  for (const auto& [community, votes] : published_votes()) {
    CAPTURE(community);
    const auto r = criteria(community, votes, q);
    CHECK(std::round(r.c1 * 10) / 10 == doctest::Approx(c1.at(community)));
    CHECK(r.c2 == c2.at(community));
  }
  // C3 follows the Q6 rule; the published row for Anti-ED reports F although its Q6 majority is "c".
  CHECK(criteria("Pro-ED", published_votes().at("Pro-ED"), q).c3);
  CHECK(criteria("Keto & Diet", published_votes().at("Keto & Diet"), q).c3);
  CHECK_FALSE(criteria("Body Image", published_votes().at("Body Image"), q).c3);
  CHECK(criteria("Anti-ED", published_votes().at("Anti-ED"), q).c3);
}

TEST_CASE("scale score is the mean of normalized option positions") {
  const auto& q = swed_questionnaire();
  Votes low{{"Q5", "a"}, {"Q6", "a"}, {"Q7", "a"}, {"Q8", "a"}, {"Q9", "a"}};
  Votes high{{"Q5", "e"}, {"Q6", "e"}, {"Q7", "g"}, {"Q8", "d"}, {"Q9", "e"}};
  CHECK(wcs_score(low, q) == 0.0);
  CHECK(wcs_score(high, q) == doctest::Approx(100.0));
  low.erase("Q9");
  CHECK_THROWS_AS(wcs_score(low, q), UserError);
  high["Q8"] = "e";
  CHECK_THROWS_AS(wcs_score(high, q), UserError);
}

TEST_CASE("scale score is monotone in every scale item") {
  const auto& q = swed_questionnaire();
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Votes v;
    for (const auto& id : q.scoring.wcs_items) {
      v[id] = std::string(1, static_cast<char>('a' + rng.index(q.at(id).options.size())));
    }
    const double base = wcs_score(v, q);
    CHECK(base >= 0.0);
    CHECK(base <= 100.0);
    const auto& id = q.scoring.wcs_items[rng.index(q.scoring.wcs_items.size())];
    const std::size_t k = q.at(id).options.size();
    const std::size_t i = q.at(id).option_index(v[id]);
    if (i + 1 < k) {
      Votes up = v;
      up[id] = std::string(1, static_cast<char>('a' + i + 1));
      CHECK(wcs_score(up, q) > base);
    }
  }
}

TEST_CASE("criteria thresholds") {
  const auto& q = swed_questionnaire();
  Votes v = published_votes().at("Weight Loss Drugs");
  CHECK_FALSE(criteria("x", v, q).c4);
  v["Q11a"] = "2";
  v["Q11b"] = "b";
  CHECK_FALSE(criteria("x", v, q).c4);
  v["Q11c"] = "c";
  CHECK(criteria("x", v, q).c4);
  v["Q11c"] = "0";
  CHECK_FALSE(criteria("x", v, q).c4);
  CHECK_FALSE(is_affirmative("0", q.scoring));
  CHECK(is_affirmative("1", q.scoring));

  Votes missing = v;
  missing.erase("Q6");
  missing.erase("Q11d");
  try {
    criteria("x", missing, q);
    FAIL("expected an error");
  } catch (const UserError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("Q6") != std::string::npos);
    CHECK(msg.find("Q11d") != std::string::npos);
  }
}

TEST_CASE("administering collects votes and retries unparsable answers") {
  const auto& q = swed_questionnaire();
  Provider p(answer_config(), std::make_unique<AnswerBackend>([](const std::string& prompt, std::size_t n) {
    if (prompt.find("(a)") == std::string::npos) return std::string(n % 3 == 0 ? "I'd rather not say" : "120");
    if (n % 5 == 0) return std::string("hmm, hard to say");
    return std::string(n % 2 ? "b) something" : "c");
  }));
  AdministerOptions o;
  o.samples = 10;
  const auto r = administer(p, q, o);
  REQUIRE(r.items.size() == q.items.size());
  for (const auto& item : r.items) {
    CAPTURE(item.item);
    CHECK(item.raw.size() == 10);
    CHECK(item.votes.size() + item.unparsable == 10);
    CHECK_FALSE(item.majority.empty());
  }
  CHECK(r.find("Q3")->majority == "120");
  CHECK(r.majorities().size() == q.items.size());
}

TEST_CASE("administering fails loudly") {
  const auto& q = swed_questionnaire();
  Provider never(answer_config(), std::make_unique<AnswerBackend>([](const std::string&, std::size_t) {
    return std::string("I cannot answer");
  }));
  AdministerOptions o;
  o.samples = 0;
  CHECK_THROWS_AS(administer(never, q, o), UserError);
  o.samples = 3;
  try {
    administer(never, q, o);
    FAIL("expected an error");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("no parsable responses for item") != std::string::npos);
  }
}

TEST_CASE("mock models answer every item parsably") {
  ProviderConfig cfg;
  cfg.kind = "mock";
  cfg.mock_seed = 9;
  auto p = Provider::create(cfg);
  AdministerOptions o;
  o.samples = 20;
  o.seed = 4;
  const auto a = administer(*p, swed_questionnaire(), o);
  const auto b = administer(*Provider::create(cfg), swed_questionnaire(), o);
  CHECK(a.majorities() == b.majorities());
  for (const auto& item : a.items) CHECK(item.unparsable == 0);
  const auto r = criteria("m", a.majorities(), swed_questionnaire());
  CHECK(r.c1 >= 0.0);
}

TEST_CASE("report orders by scale score and flags discrepancies") {
  const auto& q = swed_questionnaire();
  std::vector<ScreeningResult> results;
  for (const auto& [community, votes] : published_votes()) results.push_back(criteria(community, votes, q));
  const auto refs = parse_reference_rows(Json::parse(R"({
    "Pro-ED": {"c1": 45.0, "c2": true, "c3": true, "c4": true},
    "Keto & Diet": {"c1": 33.3, "c2": true, "c3": true, "c4": true},
    "Weight Loss Drugs": {"c1": 16.7, "c2": false, "c3": false, "c4": true},
    "Body Image": {"c1": 15.0, "c2": false, "c3": false, "c4": false},
    "Healthy Lifestyle & Weight Loss": {"c1": 13.3, "c2": true, "c3": false, "c4": false},
    "Anti-ED": {"c1": 13.3, "c2": false, "c3": false, "c4": false}})"));

  auto shuffled = results;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto report = screening_report(results, refs);
  const auto again = screening_report(shuffled, refs);
  CHECK(report.to_json() == again.to_json());

  std::vector<std::string> order;
  for (const auto& row : report.rows) order.push_back(row.result.community);
  CHECK(order == std::vector<std::string>{"Pro-ED", "Keto & Diet", "Weight Loss Drugs", "Body Image", "Anti-ED",
                                          "Healthy Lifestyle & Weight Loss"});
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    CHECK(report.rows[i - 1].result.c1 >= report.rows[i].result.c1 - 1e-9);
  }
  for (const auto& row : report.rows) {
    CAPTURE(row.result.community);
    CHECK(row.c1_matches);
    CHECK(row.c2_matches);
    CHECK(row.c3_matches == (row.result.community != "Anti-ED"));
  }

  const auto dir = oracle::temp_dir("twin-screen");
  report.write_csv(dir / "screening.csv");
  report.write_vote_log(dir / "votes.csv");
  const auto csv = read_csv(dir / "screening.csv");
  REQUIRE(csv.size() == 7);
  CHECK(csv[0][0] == "community");
  CHECK(csv[1][0] == "Pro-ED");
  const auto log = read_csv(dir / "votes.csv");
  CHECK(log[0].size() == 7);
  CHECK(log[1][0] == "Q5");
}
