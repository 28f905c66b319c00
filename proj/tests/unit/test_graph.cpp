// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "oracles.hpp"
#include "twin/graph.hpp"

using namespace twin;

namespace {

InteractionGraph two_triangles() {
  InteractionGraph g;
  for (auto [u, v] : std::vector<std::pair<const char*, const char*>>{
           {"a", "b"}, {"b", "c"}, {"a", "c"}, {"d", "e"}, {"e", "f"}, {"d", "f"}, {"c", "d"}}) {
    g.add_edge(u, v);
  }
  return g;
}

oracle::Matrix dense(const InteractionGraph& g) {
  auto m = oracle::zeros(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (const auto& e : g.neighbors(i)) m[i][e.neighbor] = e.weight;
  return m;
}

InteractionGraph random_connected(std::mt19937_64& rng, std::size_t n, double p) {
  InteractionGraph g;
  for (std::size_t i = 0; i < n; ++i) g.add_node("n" + std::to_string(i));
  for (std::size_t i = 1; i < n; ++i) g.add_edge("n" + std::to_string(rng() % i), "n" + std::to_string(i));
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (u(rng) < p) g.add_edge("n" + std::to_string(i), "n" + std::to_string(j), 1.0 + std::floor(u(rng) * 3));
  return g;
}

}  // namespace

TEST_CASE("graph construction accumulates weights and ignores self-loops") {
  const auto g = build_graph({{"a", "b"}, {"b", "a"}, {"a", "a"}, {"b", "c"}});
  CHECK(g.node_count() == 3);
  CHECK(g.edge_count() == 2);
  CHECK(g.weight("a", "b") == 2.0);
  CHECK(g.total_weight() == 3.0);
  const auto unweighted = build_graph({{"a", "b"}, {"b", "a"}}, false);
  CHECK(unweighted.weight("a", "b") == 1.0);
}

TEST_CASE("modularity of two bridged triangles") {
  const auto g = two_triangles();
  const std::vector<std::size_t> split{0, 0, 0, 1, 1, 1};
  CHECK(modularity(g, split) == doctest::Approx(2.0 * (3.0 / 7.0 - 0.25)).epsilon(1e-12));
  CHECK(modularity(g, split) == doctest::Approx(oracle::modularity(dense(g), split)).epsilon(1e-12));
  CHECK(modularity(g, std::vector<std::size_t>(6, 0)) == doctest::Approx(0.0));
}

TEST_CASE("modularity on an edgeless graph is undefined") {
  InteractionGraph g;
  g.add_node("a");
  g.add_node("b");
  CHECK_THROWS_WITH_AS(modularity(g, std::vector<std::size_t>{0, 1}), doctest::Contains("modularity undefined"),
                       UserError);
}

TEST_CASE("louvain recovers the two triangles") {
  const auto g = two_triangles();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LouvainOptions o;
    o.seed = seed;
    const auto p = louvain(g, o);
    CHECK(p.cluster_count() == 2);
    CHECK(p.assignment.at("a") == p.assignment.at("c"));
    CHECK(p.assignment.at("d") == p.assignment.at("f"));
    CHECK(p.assignment.at("a") != p.assignment.at("d"));
    CHECK(modularity(g, p) == doctest::Approx(0.357142857).epsilon(1e-6));
  }
}

TEST_CASE("louvain matches the exhaustive optimum on small graphs") {
  std::mt19937_64 rng(2024);
  std::size_t exact = 0, total = 0;
  for (std::size_t n = 2; n <= 8; ++n) {
    for (int rep = 0; rep < 6; ++rep) {
      const auto g = random_connected(rng, n, 0.35);
      const double best = oracle::max_modularity(dense(g));
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        LouvainOptions o;
        o.seed = seed;
        LouvainTrace trace;
        const auto p = louvain(g, o, &trace);
        const double q = modularity(g, p);
        ++total;
        CHECK(q <= best + 1e-9);
        if (std::abs(q - best) <= 1e-9) {
          ++exact;
        } else {
          CHECK(q >= std::max(0.0, modularity(g, [&] {
                  std::vector<std::size_t> s(g.node_count());
                  std::iota(s.begin(), s.end(), 0);
                  return s;
                }())) - 1e-12);
        }
        for (std::size_t i = 1; i < trace.phase_modularity.size(); ++i) {
          CHECK(trace.phase_modularity[i] >= trace.phase_modularity[i - 1] - 1e-12);
        }
      }
    }
  }
  MESSAGE("exact optimum in " << exact << " of " << total << " runs");
  CHECK(exact * 10 >= total * 8);
}

TEST_CASE("louvain is deterministic per seed and numbers clusters by size") {
  std::mt19937_64 rng(9);
  const auto g = random_connected(rng, 60, 0.08);
  LouvainOptions o;
  o.seed = 17;
  const auto a = louvain(g, o), b = louvain(g, o);
  CHECK(a.assignment == b.assignment);
  const auto sizes = top_clusters(a, a.cluster_count());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    CHECK(sizes[i].cluster == i);
    if (i > 0) CHECK(sizes[i - 1].count >= sizes[i].count);
  }
}

TEST_CASE("higher resolution never yields fewer clusters on a ring of cliques") {
  InteractionGraph g;
  for (int c = 0; c < 8; ++c) {
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) g.add_edge(std::to_string(c * 4 + i), std::to_string(c * 4 + j));
    g.add_edge(std::to_string(c * 4), std::to_string(((c + 1) % 8) * 4 + 1));
  }
  LouvainOptions low, high;
  low.resolution = 0.2;
  high.resolution = 1.0;
  CHECK(louvain(g, low).cluster_count() <= louvain(g, high).cluster_count());
  CHECK(louvain(g, high).cluster_count() == 8);
}

TEST_CASE("partition and community map files") {
  const auto dir = oracle::temp_dir("twin-graph");
  const auto g = two_triangles();
  const auto p = louvain(g);
  write_partition(dir / "p.jsonl", p);
  CHECK(read_partition(dir / "p.jsonl").assignment == p.assignment);

  const auto map = parse_community_map(Json::parse(R"({"Pro-ED": [0, 7], "Keto": [1]})"));
  CHECK(map.at(7) == "Pro-ED");
  CHECK(map.at(1) == "Keto");
  CHECK_THROWS_AS(parse_community_map(Json::parse(R"({"A": [0], "B": [0]})")), UserError);
}

TEST_CASE("interactions file requires source and target") {
  const auto dir = oracle::temp_dir("twin-graph-bad");
  write_file_atomic(dir / "i.jsonl", "{\"source\":\"a\",\"target\":\"b\"}\n{\"source\":\"a\"}\n");
  CHECK_THROWS_AS(read_interactions(dir / "i.jsonl"), UserError);
}
