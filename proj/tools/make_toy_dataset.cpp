// SPDX-License-Identifier: Apache-2.0
//
// Writes the bundled toy dataset: posts, an interaction graph with six dense
// author groups, the cluster-to-community map, mock harm labels and an
// offline config.
//
//   make_toy_dataset <output-dir> [--seed N]

#include <CLI11.hpp>
#include <iostream>
#include <map>

#include "twin/graph.hpp"
#include "twin/util.hpp"

namespace {

struct ToyCommunity {
  std::string name;
  std::size_t authors;
  std::vector<std::string> words;
};

std::vector<ToyCommunity> toy_communities() {
  return {
      {"Pro-ED", 40, {"thinspo", "goal", "weight", "lighter", "smaller", "control", "restriction", "hungry",
                      "discipline", "scale", "numbers", "collarbones", "empty", "strict", "focus", "progress",
                      "bonespo", "meanspo", "fasting", "starving"}},
      {"Keto & Diet", 36, {"keto", "carbs", "macros", "bacon", "avocado", "ketosis", "lowcarb", "butter", "fat",
                           "protein", "recipe", "eggs", "cheese", "electrolytes", "meal", "prep", "cauliflower",
                           "steak", "caloric", "counting"}},
      {"Body Image", 32, {"selflove", "mirror", "confidence", "curves", "beautiful", "acceptance", "skin",
                          "stretchmarks", "worthy", "body", "positivity", "shape", "reflection", "photos", "glow",
                          "dysmorphia", "comparison", "appearance", "love", "embrace"}},
      {"Anti-ED", 28, {"recovery", "support", "therapy", "healing", "nourish", "awareness", "diet", "culture",
                       "harmful", "fatphobia", "advocacy", "treatment", "relapse", "gentle", "strength", "hope",
                       "anorexia", "bulimia", "orthorexia", "resources"}},
      {"Healthy Lifestyle & Weight Loss", 24,
       {"workout", "steps", "hydration", "veggies", "balanced", "routine", "gym", "cardio", "sleep", "mindful",
        "portions", "walking", "fitspo", "energy", "habits", "consistency", "stretching", "wellness", "working",
        "out"}},
      {"Weight Loss Drugs", 20, {"ozempic", "wegovy", "semaglutide", "dose", "injection", "prescription",
                                 "appetite", "nausea", "insurance", "pharmacy", "glp1", "shortage", "doctor",
                                 "side", "effects", "refill", "mounjaro", "results", "week", "pounds"}},
  };
}

const std::vector<std::string>& shared_words() {
  static const std::vector<std::string> w{"today", "really", "feel", "just", "so",   "my",    "the",
                                          "and",   "is",     "a",    "for",  "with", "again", "this",
                                          "week",  "finally", "why", "need", "more", "tomorrow"};
  return w;
}

std::string make_post(twin::Rng& rng, const ToyCommunity& c) {
  std::vector<std::string> tokens;
  const std::size_t len = 8 + rng.index(9);
  for (std::size_t i = 0; i < len; ++i) {
    tokens.push_back(rng.uniform() < 0.6 ? c.words[rng.index(c.words.size())]
                                         : shared_words()[rng.index(shared_words().size())]);
  }
  // Platform artifacts that cleaning must remove.
  if (rng.uniform() < 0.3) tokens.push_back("#" + c.words[rng.index(c.words.size())]);
  if (rng.uniform() < 0.2) tokens.insert(tokens.begin(), "@user" + std::to_string(rng.index(500)));
  if (rng.uniform() < 0.2) tokens.push_back("https://t.co/" + twin::hex64(rng.next()).substr(0, 8));
  if (rng.uniform() < 0.15) tokens.push_back("\xF0\x9F\x92\xAA");  // flexed biceps
  return twin::join(tokens, " ");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write the toy dataset"};
  std::string out_dir;
  std::uint64_t seed = 7;
  std::size_t per_community = 200;
  app.add_option("output", out_dir, "Output directory")->required();
  app.add_option("--seed", seed, "Generator and Louvain seed");
  app.add_option("--posts", per_community, "Original posts per community");
  CLI11_PARSE(app, argc, argv);

  namespace fs = std::filesystem;
  const fs::path out(out_dir);
  fs::create_directories(out);
  twin::Rng rng(seed);
  const auto communities = toy_communities();

  std::vector<std::vector<std::string>> authors(communities.size());
  std::map<std::string, std::size_t> truth;
  std::size_t next_author = 1;
  for (std::size_t c = 0; c < communities.size(); ++c) {
    for (std::size_t a = 0; a < communities[c].authors; ++a) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "u%04zu", next_author++);
      authors[c].push_back(buf);
      truth[buf] = c;
    }
  }

  // Posts: originals plus reposts and replies that ingest filters out.
  std::string posts;
  std::size_t next_post = 1;
  for (std::size_t c = 0; c < communities.size(); ++c) {
    std::size_t originals = 0;
    while (originals < per_community) {
      const std::string author = authors[c][rng.index(authors[c].size())];
      const double kind = rng.uniform();
      twin::Json rec{{"id", "p" + std::to_string(next_post++)},
                     {"author", author},
                     {"text", make_post(rng, communities[c])},
                     {"is_repost", kind < 0.08},
                     {"is_reply", kind >= 0.08 && kind < 0.15}};
      if (kind >= 0.15) ++originals;
      posts += rec.dump() + "\n";
    }
  }
  twin::write_file_atomic(out / "posts.jsonl", posts);

  // Interactions: dense inside each group, a handful of bridges between groups.
  std::string interactions;
  std::vector<twin::Interaction> edges;
  auto add = [&](const std::string& u, const std::string& v, std::size_t times) {
    for (std::size_t t = 0; t < times; ++t) {
      interactions += twin::Json{{"source", u}, {"target", v}}.dump() + "\n";
      edges.emplace_back(u, v);
    }
  };
  for (const auto& group : authors) {
    for (std::size_t i = 0; i < group.size(); ++i) {
      for (std::size_t j = i + 1; j < group.size(); ++j) {
        if (rng.uniform() < 0.4) add(group[i], group[j], 1 + rng.index(3));
      }
    }
  }
  for (std::size_t b = 0; b < 12; ++b) {
    const std::size_t c1 = rng.index(authors.size());
    const std::size_t c2 = (c1 + 1 + rng.index(authors.size() - 1)) % authors.size();
    add(authors[c1][rng.index(authors[c1].size())], authors[c2][rng.index(authors[c2].size())], 1);
  }
  twin::write_file_atomic(out / "interactions.jsonl", interactions);

  // Label the detected clusters by their majority ground-truth group, the way
  // an analyst would after reading samples from each cluster.
  twin::LouvainOptions lo;
  lo.seed = seed;
  const auto partition = twin::louvain(twin::build_graph(edges), lo);
  std::map<std::size_t, std::map<std::size_t, std::size_t>> votes;
  for (const auto& [author, cluster] : partition.assignment) ++votes[cluster][truth.at(author)];
  twin::Json map = twin::Json::object();
  for (const auto& [cluster, counts] : votes) {
    const auto best = std::max_element(counts.begin(), counts.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    map[communities[best->first].name].push_back(cluster);
  }
  twin::write_file_atomic(out / "community_map.json", map.dump(2) + "\n");

  // Two mock annotators for the harm batch (6 communities x 3 sources x 10).
  const std::vector<std::string> categories{"none", "none", "none", "restriction", "body_shaming", "misinformation"};
  std::vector<std::vector<std::string>> labels;
  for (std::size_t i = 1; i <= communities.size() * 3 * 10; ++i) {
    char item[32];
    std::snprintf(item, sizeof(item), "H%04zu", i);
    const std::string a = categories[rng.index(categories.size())];
    const std::string b = rng.uniform() < 0.7 ? a : categories[rng.index(categories.size())];
    labels.push_back({item, a, b});
  }
  twin::write_csv(out / "harm_labels.csv", {"item", "annotator_a", "annotator_b"}, labels);

  const twin::Json config{
      {"work_dir", "work"},
      {"seed", seed},
      {"input", {{"posts", "posts.jsonl"}, {"interactions", "interactions.jsonl"}, {"community_map", "community_map.json"}}},
      {"generate", {{"per_topic", 20}, {"balance", 300}}},
      {"evaluate", {{"similarity_sample", 200}, {"triplets_per_community", 20}, {"harm_per_source", 10}}},
      {"screen", {{"samples", 50}}},
      {"report", {{"harm_labels", "harm_labels.csv"}}}};
  twin::write_file_atomic(out / "config.json", config.dump(2) + "\n");
  std::cout << "wrote toy dataset to " << out.string() << " (" << partition.cluster_count() << " clusters)\n";
  return 0;
}
