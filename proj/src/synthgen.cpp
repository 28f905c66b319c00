// SPDX-License-Identifier: Apache-2.0

#include "twin/synthgen.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

#include "twin/demos.hpp"
#include "twin/eval.hpp"

namespace twin {

const std::array<std::string_view, 27>& topic_list() {
  static const std::array<std::string_view, 27> topics = {
      "thinspo",         "fitspo",         "bonespo",    "deathspo",      "caloric restriction",
      "meanspo",         "ozempic",        "wegovy",     "fatspo",        "fatphobia",
      "thighgap",        "caloric counting", "purging",  "food rules",    "extreme diet",
      "food fear",       "hiding food",    "fasting",    "starving",      "steroid",
      "excessive exercising", "body dysmorphia", "working out", "anorexia", "bulimia",
      "orthorexia",      "binge eating"};
  return topics;
}

std::vector<std::string> default_topics() {
  const auto& t = topic_list();
  return {t.begin(), t.end()};
}

std::vector<std::string> topic_keywords(std::string_view topic) {
  std::vector<std::string> out{to_lower_ascii(trim(topic))};
  const auto words = split_whitespace(out.front());
  if (words.size() > 1) out.push_back(join(words, ""));
  return out;
}

namespace {

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

bool contains_phrase(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return false;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
    const bool left = pos == 0 || !is_word_byte(haystack[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right = end == haystack.size() || !is_word_byte(haystack[end]);
    if (left && right) return true;
  }
  return false;
}

}  // namespace

bool mentions_topic(std::string_view text, std::string_view topic) {
  // Whitespace runs are normalized so multi-word topics match across line breaks.
  const std::string hay = join(split_whitespace(to_lower_ascii(text)), " ");
  for (const auto& kw : topic_keywords(topic)) {
    if (contains_phrase(hay, kw)) return true;
  }
  return false;
}

std::string topic_instruction(std::string_view instruction, std::string_view topic) {
  std::string base(trim(instruction));
  std::string punct;
  if (!base.empty() && (base.back() == '?' || base.back() == '.' || base.back() == '!')) {
    punct = base.back();
    base.pop_back();
  }
  const std::string lower = to_lower_ascii(base);
  const bool ends_with_about = lower.size() >= 6 && lower.compare(lower.size() - 6, 6, " about") == 0;
  return base + (ends_with_about ? " " : " about ") + std::string(topic) + punct;
}

std::string truncate_tokens(std::string_view text, std::size_t max_tokens) {
  auto tokens = split_whitespace(text);
  if (tokens.size() > max_tokens) tokens.resize(max_tokens);
  return join(tokens, " ");
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace {

/// Per-topic shards plus a manifest listing finished topics. A manifest whose
/// fingerprint differs from the current run is ignored.
class TopicCheckpoint {
 public:
  TopicCheckpoint(std::filesystem::path dir, std::string fingerprint)
      : dir_(std::move(dir)), fingerprint_(std::move(fingerprint)) {
    if (dir_.empty()) return;
    const auto manifest = dir_ / "manifest.json";
    if (!std::filesystem::exists(manifest)) return;
    try {
      const Json j = Json::parse(read_file(manifest));
      if (j.value("fingerprint", "") != fingerprint_) return;
      for (const auto& t : j.at("completed")) done_.insert(t.get<std::size_t>());
    } catch (const Json::exception&) {
      done_.clear();
    }
  }

  bool has(std::size_t topic) const { return done_.count(topic) > 0; }

  std::vector<Document> load(std::size_t topic) const { return read_documents(shard(topic)); }

  void commit(std::size_t topic, const std::vector<Document>& docs) {
    if (dir_.empty()) return;
    write_documents(shard(topic), docs);
    done_.insert(topic);
    Json j{{"fingerprint", fingerprint_}, {"completed", std::vector<std::size_t>(done_.begin(), done_.end())}};
    write_file_atomic(dir_ / "manifest.json", j.dump(2));
  }

 private:
  std::filesystem::path shard(std::size_t topic) const { return dir_ / ("topic-" + std::to_string(topic) + ".jsonl"); }

  std::filesystem::path dir_;
  std::string fingerprint_;
  std::set<std::size_t> done_;
};

std::string run_fingerprint(std::string_view kind, const Provider& p, const std::string& community,
                            const std::vector<std::string>& topics, std::size_t per_topic, std::uint64_t seed,
                            const GenerationParams& params, std::string_view extra = "") {
  Json j{{"kind", kind},
         {"provider", p.config().to_json()},
         {"community", community},
         {"topics", topics},
         {"per_topic", per_topic},
         {"seed", seed},
         {"temperature", params.temperature},
         {"max_tokens", params.max_tokens},
         {"extra", extra}};
  return sha256_hex(j.dump());
}

}  // namespace

Corpus generate_finetuned_corpus(Provider& aligned, const std::string& community,
                                 const std::vector<std::string>& topics, const FinetunedGenerationOptions& options) {
  const auto& pool = instruction_pool();
  TopicCheckpoint checkpoint(options.checkpoint_dir,
                             run_fingerprint("finetuned", aligned, community, topics, options.per_topic, options.seed,
                                             options.params));
  Corpus out{community, {}};
  for (std::size_t t = 0; t < topics.size(); ++t) {
    if (checkpoint.has(t)) {
      auto docs = checkpoint.load(t);
      out.documents.insert(out.documents.end(), docs.begin(), docs.end());
      continue;
    }
    Rng rng = Rng::derive(options.seed, "finetuned:" + community + ":" + topics[t]);
    std::vector<std::size_t> choice(options.per_topic);
    std::vector<std::size_t> per_instruction(pool.size(), 0);
    for (auto& c : choice) {
      c = rng.index(pool.size());
      ++per_instruction[c];
    }
    std::vector<std::vector<std::string>> outputs(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (per_instruction[i] == 0) continue;
      GenerationParams p = options.params;
      p.count = per_instruction[i];
      p.seed = hash_combine(options.seed, i);
      outputs[i] = aligned.generate(topic_instruction(pool[i], topics[t]), p);
    }
    std::vector<std::size_t> cursor(pool.size(), 0);
    std::vector<Document> docs;
    docs.reserve(options.per_topic);
    for (std::size_t j = 0; j < choice.size(); ++j) {
      Document d;
      d.id = community + ":ft:" + std::to_string(t) + ":" + std::to_string(j);
      d.community = community;
      d.text = std::string(trim(outputs[choice[j]][cursor[choice[j]]++]));
      d.provenance = Provenance::Finetuned;
      d.topic = topics[t];
      docs.push_back(std::move(d));
    }
    checkpoint.commit(t, docs);
    out.documents.insert(out.documents.end(), docs.begin(), docs.end());
  }
  return out;
}

std::vector<std::string> select_exemplars(const Corpus& original, std::string_view topic, std::size_t count,
                                          std::size_t max_tokens, std::uint64_t seed,
                                          std::vector<std::string>* warnings) {
  if (original.size() < count && warnings) {
    warnings->push_back("community '" + original.community + "' has " + std::to_string(original.size()) +
                        " documents, fewer than " + std::to_string(count) + " exemplars; using all");
  }
  Rng rng = Rng::derive(seed, "exemplars:" + original.community + ":" + std::string(topic));
  std::vector<std::size_t> matched, rest;
  for (std::size_t i = 0; i < original.size(); ++i) {
    (mentions_topic(original.documents[i].text, topic) ? matched : rest).push_back(i);
  }
  std::vector<std::size_t> chosen;
  if (matched.size() >= count) {
    for (std::size_t k : rng.sample_indices(matched.size(), count)) chosen.push_back(matched[k]);
  } else {
    chosen = matched;
    for (std::size_t k : rng.sample_indices(rest.size(), count - matched.size())) chosen.push_back(rest[k]);
  }
  std::vector<std::string> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(truncate_tokens(original.documents[i].text, max_tokens));
  return out;
}

std::string context_prompt(std::string_view topic, const std::vector<std::string>& exemplars) {
  const std::string t(topic);
  std::string prompt =
      "You're part of an online community now. To help you describe this online community, here are the tweets "
      "made by members in this community about the topic of " +
      t + ".\n\n";
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    prompt += "Tweet " + std::to_string(i + 1) + ": " + exemplars[i] + "\n";
  }
  prompt += "\nWhat would you tweet about " + t +
            "? Learn the ideas and mindset of the community from these tweets and speak like a member from this "
            "community. Only generate one tweet.";
  return prompt;
}

Corpus generate_context_corpus(Provider& base, const Corpus& original, const std::vector<std::string>& topics,
                               const ContextGenerationOptions& options, std::vector<std::string>* warnings) {
  const std::string corpus_digest = [&] {
    std::uint64_t h = 0;
    for (const auto& d : original.documents) h = hash_combine(h, fnv1a64(d.text));
    return hex64(h) + ":" + std::to_string(options.exemplars) + ":" + std::to_string(options.exemplar_tokens);
  }();
  TopicCheckpoint checkpoint(options.checkpoint_dir,
                             run_fingerprint("context", base, original.community, topics, options.per_topic,
                                             options.seed, options.params, corpus_digest));
  if (original.size() < options.exemplars && warnings) {
    warnings->push_back("community '" + original.community + "' has only " + std::to_string(original.size()) +
                        " documents for " + std::to_string(options.exemplars) + " exemplars; using all");
  }
  Corpus out{original.community, {}};
  for (std::size_t t = 0; t < topics.size(); ++t) {
    if (checkpoint.has(t)) {
      auto docs = checkpoint.load(t);
      out.documents.insert(out.documents.end(), docs.begin(), docs.end());
      continue;
    }
    const auto exemplars =
        select_exemplars(original, topics[t], options.exemplars, options.exemplar_tokens, options.seed);
    GenerationParams p = options.params;
    p.count = options.per_topic;
    p.seed = hash_combine(options.seed, t);
    const auto texts = options.per_topic ? base.generate(context_prompt(topics[t], exemplars), p)
                                         : std::vector<std::string>{};
    std::vector<Document> docs;
    docs.reserve(texts.size());
    for (std::size_t j = 0; j < texts.size(); ++j) {
      Document d;
      d.id = original.community + ":ctx:" + std::to_string(t) + ":" + std::to_string(j);
      d.community = original.community;
      d.text = std::string(trim(texts[j]));
      d.provenance = Provenance::Context;
      d.topic = topics[t];
      docs.push_back(std::move(d));
    }
    checkpoint.commit(t, docs);
    out.documents.insert(out.documents.end(), docs.begin(), docs.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

Json FilterStats::to_json() const {
  return Json{{"input", input},
              {"after_dedup", after_dedup},
              {"after_perplexity", after_perplexity},
              {"after_similarity", after_similarity},
              {"output", output},
              {"warnings", warnings}};
}

Corpus filter_synthetic(const Corpus& synthetic, const Corpus& original, Provider& scorer,
                        const FilterOptions& options, FilterStats* stats) {
  FilterStats local;
  FilterStats& s = stats ? *stats : local;
  s = FilterStats{};
  s.input = synthetic.size();

  Corpus current = dedup_exact(synthetic);
  // Empty generations carry no content; they are dropped with the duplicates.
  std::erase_if(current.documents, [](const Document& d) { return trim(d.text).empty(); });
  s.after_dedup = current.size();

  if (!current.empty()) {
    const auto ppl = scorer.perplexity(current.texts());
    s.perplexities = ppl;
    std::vector<Document> kept;
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (ppl[i] > options.max_perplexity) continue;
      Document d = current.documents[i];
      d.perplexity = ppl[i];
      kept.push_back(std::move(d));
    }
    current.documents = std::move(kept);
  }
  s.after_perplexity = current.size();

  if (!current.empty() && !original.empty()) {
    const RougeIndex index(original.texts());
    std::vector<Document> kept;
    for (auto& d : current.documents) {
      const double best = index.best_match(d.text).score;
      s.max_rouge_vs_original.push_back(best);
      if (best > options.max_rouge) continue;
      kept.push_back(std::move(d));
    }
    current.documents = std::move(kept);
  }
  s.after_similarity = current.size();

  if (current.size() < options.balance) {
    s.warnings.push_back("'" + synthetic.community + "': " + std::to_string(current.size()) +
                         " documents survive filtering, fewer than the balance target " +
                         std::to_string(options.balance));
  } else {
    Rng rng = Rng::derive(options.seed, "balance:" + synthetic.community + ":" + to_string(
                                                                                    synthetic.documents.empty()
                                                                                        ? Provenance::Finetuned
                                                                                        : synthetic.documents.front().provenance));
    auto picked = rng.sample_indices(current.size(), options.balance);
    std::sort(picked.begin(), picked.end());
    std::vector<Document> sampled;
    sampled.reserve(picked.size());
    for (std::size_t i : picked) sampled.push_back(std::move(current.documents[i]));
    current.documents = std::move(sampled);
  }
  s.output = current.size();
  return current;
}

std::vector<TopicCount> count_topic_mentions(const Corpus& corpus, const std::vector<std::string>& topics) {
  std::vector<TopicCount> out;
  out.reserve(topics.size());
  for (const auto& t : topics) {
    const auto n = static_cast<std::size_t>(std::count_if(corpus.documents.begin(), corpus.documents.end(),
                                                          [&](const Document& d) { return mentions_topic(d.text, t); }));
    out.push_back({t, n});
  }
  return out;
}

std::string profile_prompt(const std::vector<std::string>& posts) {
  std::string prompt = "Given this list of posts, summarize the main ideas in 1 sentence\n\n";
  for (const auto& p : posts) prompt += "- " + p + "\n";
  return prompt;
}

std::string profile_community(Provider& provider, const Corpus& corpus, std::size_t sample, std::uint64_t seed,
                              GenerationParams params) {
  if (corpus.empty()) throw UserError("profile_community: corpus '" + corpus.community + "' is empty");
  Rng rng = Rng::derive(seed, "profile:" + corpus.community);
  auto picked = rng.sample_indices(corpus.size(), sample);
  std::sort(picked.begin(), picked.end());
  std::vector<std::string> posts;
  posts.reserve(picked.size());
  for (std::size_t i : picked) posts.push_back(corpus.documents[i].text);
  params.count = 1;
  const auto out = provider.generate(profile_prompt(posts), params);
  return std::string(trim(out.at(0)));
}

}  // namespace twin
