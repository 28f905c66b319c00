// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "twin/parallel.hpp"
#include "twin/util.hpp"

using namespace twin;

TEST_CASE("sha256 matches the standard test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("derived streams are reproducible and distinct") {
  Rng a = Rng::derive(42, "x"), b = Rng::derive(42, "x"), c = Rng::derive(42, "y");
  const auto va = a.next(), vb = b.next(), vc = c.next();
  CHECK(va == vb);
  CHECK(va != vc);
}

TEST_CASE("index stays in range and covers every value") {
  Rng rng(1);
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.index(7);
    REQUIRE(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("sample_indices draws distinct indices and clamps k") {
  Rng rng(3);
  const auto s = rng.sample_indices(10, 4);
  CHECK(s.size() == 4);
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 4);
  CHECK(rng.sample_indices(3, 10).size() == 3);
}

TEST_CASE("text helpers") {
  CHECK(to_lower_ascii("AbC é") == "abc é");
  CHECK(trim("  x y \n") == "x y");
  CHECK(split_whitespace(" a\tb  c\n") == std::vector<std::string>{"a", "b", "c"});
  CHECK(join({"a", "b"}, ", ") == "a, b");
}

TEST_CASE("csv round trip with quotes, commas and newlines") {
  const auto dir = oracle::temp_dir("twin-csv");
  const std::vector<std::vector<std::string>> rows{{"a,b", "say \"hi\""}, {"line\nbreak", ""}};
  write_csv(dir / "t.csv", {"x", "y"}, rows);
  const auto back = read_csv(dir / "t.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[0] == std::vector<std::string>{"x", "y"});
  CHECK(back[1] == rows[0]);
  CHECK(back[2] == rows[1]);
}

TEST_CASE("read_jsonl reports the malformed line") {
  const auto dir = oracle::temp_dir("twin-jsonl");
  write_file_atomic(dir / "x.jsonl", "{\"a\":1}\n\n{oops\n");
  std::size_t seen = 0;
  try {
    read_jsonl(dir / "x.jsonl", [&](std::size_t, const Json&) { ++seen; });
    FAIL("expected an error");
  } catch (const UserError& e) {
    CHECK(std::string(e.what()).find("x.jsonl:3") != std::string::npos);
  }
  CHECK(seen == 1);
}

TEST_CASE("parallel_for visits each index once and collects failures by index") {
  std::vector<int> hits(100, 0);
  const auto errors = parallel_for(100, 8, [&](std::size_t i) {
    ++hits[i];
    if (i == 17) throw std::runtime_error("boom");
  });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  for (std::size_t i = 0; i < errors.size(); ++i) CHECK((errors[i] != nullptr) == (i == 17));
}
