// SPDX-License-Identifier: Apache-2.0
//
// Synthetic corpus generation from an aligned model and from an in-context
// baseline, plus the post-generation filters.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "twin/corpus.hpp"
#include "twin/providers.hpp"

namespace twin {

/// The 27 discussion topics used to diversify generation.
const std::array<std::string_view, 27>& topic_list();
std::vector<std::string> default_topics();

/// Keyword forms matched for a topic: the topic itself and, for multi-word
/// topics, the joined form ("thigh gap" -> "thighgap").
std::vector<std::string> topic_keywords(std::string_view topic);

/// Case-insensitive phrase match on word boundaries for any keyword form.
bool mentions_topic(std::string_view text, std::string_view topic);

/// Specializes a pool instruction with a topic:
/// "What would you tweet?" -> "What would you tweet about fasting?".
std::string topic_instruction(std::string_view instruction, std::string_view topic);

/// First `max_tokens` whitespace tokens joined by single spaces.
std::string truncate_tokens(std::string_view text, std::size_t max_tokens);

struct FinetunedGenerationOptions {
  std::size_t per_topic = 1000;
  std::uint64_t seed = 0;
  GenerationParams params{1.0, 64, 1, 0};
  /// Completed topics are persisted here and skipped on the next run.
  std::filesystem::path checkpoint_dir;
};

/// per_topic completions per topic from the aligned model, each prompted by a
/// seeded pool instruction specialized with the topic.
Corpus generate_finetuned_corpus(Provider& aligned, const std::string& community,
                                 const std::vector<std::string>& topics, const FinetunedGenerationOptions& options);

struct ContextGenerationOptions {
  std::size_t per_topic = 1000;
  std::size_t exemplars = 250;
  std::size_t exemplar_tokens = 20;
  std::uint64_t seed = 0;
  GenerationParams params{1.0, 64, 1, 0};
  std::filesystem::path checkpoint_dir;
};

/// Exemplars for one topic: every keyword-matching document, then a seeded
/// random fill from the rest, each truncated.
std::vector<std::string> select_exemplars(const Corpus& original, std::string_view topic, std::size_t count,
                                          std::size_t max_tokens, std::uint64_t seed,
                                          std::vector<std::string>* warnings = nullptr);

std::string context_prompt(std::string_view topic, const std::vector<std::string>& exemplars);

/// In-context baseline: the base model sees retrieved community posts instead of
/// being finetuned.
Corpus generate_context_corpus(Provider& base, const Corpus& original, const std::vector<std::string>& topics,
                               const ContextGenerationOptions& options, std::vector<std::string>* warnings = nullptr);

struct FilterOptions {
  double max_perplexity = 400.0;
  double max_rouge = 0.7;
  std::size_t balance = 6000;
  std::uint64_t seed = 0;
};

struct FilterStats {
  std::size_t input = 0;
  std::size_t after_dedup = 0;
  std::size_t after_perplexity = 0;
  std::size_t after_similarity = 0;
  std::size_t output = 0;
  /// Perplexity of each deduplicated document, and max ROUGE-L against the
  /// originals of each document that passed the perplexity filter.
  std::vector<double> perplexities;
  std::vector<double> max_rouge_vs_original;
  std::vector<std::string> warnings;

  Json to_json() const;
};

/// Exact dedup, then perplexity <= max, then max ROUGE-L vs originals <= max,
/// then a seeded uniform sample of at most `balance` documents.
Corpus filter_synthetic(const Corpus& synthetic, const Corpus& original, Provider& scorer,
                        const FilterOptions& options = {}, FilterStats* stats = nullptr);

struct TopicCount {
  std::string topic;
  std::size_t count;
};

std::vector<TopicCount> count_topic_mentions(const Corpus& corpus, const std::vector<std::string>& topics);

/// Samples `sample` posts and asks the model for a one-sentence summary.
std::string profile_community(Provider& provider, const Corpus& corpus, std::size_t sample = 200,
                              std::uint64_t seed = 0, GenerationParams params = {0.0, 128, 1, 0});

std::string profile_prompt(const std::vector<std::string>& posts);

}  // namespace twin
