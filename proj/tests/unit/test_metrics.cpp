// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "oracles.hpp"
#include "twin/eval.hpp"

using namespace twin;

namespace {

EmotionProfile one_hot(std::size_t i) {
  EmotionProfile p;
  p.mass[i] = 1.0;
  return p;
}

EmotionProfile random_profile(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<EmotionVector> v(1);
  for (auto& x : v[0]) x = u(rng) < 0.2 ? 0.0 : u(rng);
  v[0][rng() % kEmotionCount] += 0.1;
  return emotion_profile(v);
}

}  // namespace

TEST_CASE("emotional alignment bounds") {
  std::mt19937_64 rng(1);
  const auto p = random_profile(rng);
  CHECK(emotional_alignment(p, p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(emotional_alignment(one_hot(0), one_hot(3)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("emotional alignment is symmetric on random pairs") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_profile(rng), q = random_profile(rng);
    const double a = emotional_alignment(p, q), b = emotional_alignment(q, p);
    REQUIRE(std::abs(a - b) <= 1e-12);
    REQUIRE(a >= 0.0);
    REQUIRE(a <= 1.0);
  }
}

TEST_CASE("JS divergence matches the textbook formula") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_profile(rng), q = random_profile(rng);
    double want = 0;
    for (std::size_t e = 0; e < kEmotionCount; ++e) {
      const double m = (p.mass[e] + q.mass[e]) / 2;
      if (p.mass[e] > 0) want += 0.5 * p.mass[e] * std::log2(p.mass[e] / m);
      if (q.mass[e] > 0) want += 0.5 * q.mass[e] * std::log2(q.mass[e] / m);
    }
    CHECK(js_divergence(p, q) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("emotion profile normalizes summed confidences") {
  EmotionVector a{}, b{};
  a[0] = 0.5;
  b[0] = 0.5;
  b[1] = 1.0;
  const auto p = emotion_profile({a, b});
  CHECK(p.mass[0] == doctest::Approx(0.5));
  CHECK(p.mass[1] == doctest::Approx(0.5));
  CHECK_THROWS_WITH_AS(emotion_profile({EmotionVector{}}), doctest::Contains("degenerate emotion mass"), UserError);
}

TEST_CASE("toxicity histogram threshold and bins") {
  const auto h = toxicity_histogram({0.0, 0.049999, 0.05, 0.5, 1.0}, 0.05, 10);
  CHECK(h.count == 3);
  CHECK(h.counts.front() == 1);
  CHECK(h.counts.back() == 1);
  CHECK(h.edges.size() == 11);
  CHECK(h.edges.front() == doctest::Approx(0.05));
  CHECK(h.edges.back() == 1.0);
  double mass = 0;
  for (double m : h.mass) mass += m;
  CHECK(mass == doctest::Approx(1.0));
  const auto empty = toxicity_histogram({0.01}, 0.05, 4);
  CHECK(empty.count == 0);
  CHECK(empty.mass == std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(toxicity_histogram({}, 0.05, 0), UserError);
}

TEST_CASE("macro F1 hand example") {
  // gold a,a,b,c  predicted a,b,b,a: F1(a)=1/2, F1(b)=2/3, F1(c)=0
  const std::vector<std::string> gold{"a", "a", "b", "c"}, pred{"a", "b", "b", "a"};
  CHECK(macro_f1(pred, gold) == doctest::Approx((0.5 + 2.0 / 3.0 + 0.0) / 3.0));
  CHECK(micro_f1(pred, gold) == doctest::Approx(0.5));
}

TEST_CASE("macro F1 one-third example") {
  const std::vector<std::string> gold{"a", "b", "c"}, pred{"a", "c", "b"};
  CHECK(macro_f1(pred, gold) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("macro F1 errors") {
  CHECK_THROWS_AS(macro_f1({"a"}, {"a", "b"}), UserError);
  CHECK_THROWS_AS(macro_f1({}, {}), UserError);
  CHECK_THROWS_AS(macro_f1({"z"}, {"a"}, {"a", "b"}), UserError);
  CHECK(macro_f1({"a"}, {"a"}, {"a", "b"}) == 1.0);
}

TEST_CASE("Cohen's kappa") {
  CHECK(cohens_kappa({"1", "0", "1"}, {"1", "0", "1"}) == doctest::Approx(1.0));
  CHECK(cohens_kappa({"1", "1", "0", "0"}, {"1", "0", "1", "0"}) == doctest::Approx(0.0));
  // p_o = 0.6, p_e = 0.6*0.6 + 0.4*0.4 = 0.52
  CHECK(cohens_kappa({"y", "y", "y", "n", "n"}, {"y", "y", "n", "n", "y"}) == doctest::Approx((0.6 - 0.52) / 0.48));
  CHECK_THROWS_AS(cohens_kappa({"x", "x"}, {"x", "x"}), UserError);
  CHECK_THROWS_AS(cohens_kappa({"x"}, {}), UserError);
  CHECK_THROWS_AS(cohens_kappa({}, {}), UserError);
}

TEST_CASE("Cohen's kappa is symmetric in the annotators") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> a, b;
    for (int k = 0; k < 20; ++k) {
      a.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
      b.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
    }
    CHECK(cohens_kappa(a, b) == doctest::Approx(cohens_kappa(b, a)).epsilon(1e-12));
  }
}
