// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "twin/eval.hpp"

namespace twin {

namespace {

bool is_ascii_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

}  // namespace

std::vector<std::string> NaiveBayesClassifier::tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : split_whitespace(to_lower_ascii(text))) {
    std::size_t b = 0, e = t.size();
    while (b < e && is_ascii_punct(t[b])) ++b;
    while (e > b && is_ascii_punct(t[e - 1])) --e;
    if (e > b) out.push_back(t.substr(b, e - b));
  }
  return out;
}

void NaiveBayesClassifier::train(const std::vector<LabeledText>& examples) {
  if (examples.empty()) throw UserError("classifier needs training examples");
  std::set<std::string> label_set;
  for (const auto& ex : examples) label_set.insert(ex.label);
  labels_.assign(label_set.begin(), label_set.end());
  std::map<std::string, std::size_t> label_index;
  for (std::size_t i = 0; i < labels_.size(); ++i) label_index[labels_[i]] = i;

  const std::size_t k = labels_.size();
  std::vector<double> docs(k, 0.0), tokens(k, 0.0);
  std::unordered_map<std::string, std::vector<double>> counts;
  for (const auto& ex : examples) {
    const std::size_t c = label_index[ex.label];
    docs[c] += 1;
    for (const auto& t : tokenize(ex.text)) {
      auto& v = counts[t];
      if (v.empty()) v.assign(k, 0.0);
      v[c] += 1;
      tokens[c] += 1;
    }
  }
  const double vocab = static_cast<double>(counts.size());
  log_prior_.resize(k);
  for (std::size_t c = 0; c < k; ++c) log_prior_[c] = std::log(docs[c] / static_cast<double>(examples.size()));
  log_likelihood_.clear();
  log_likelihood_.reserve(counts.size());
  for (auto& [tok, v] : counts) {
    std::vector<double> ll(k);
    for (std::size_t c = 0; c < k; ++c) ll[c] = std::log((v[c] + 1.0) / (tokens[c] + vocab));
    log_likelihood_.emplace(tok, std::move(ll));
  }
}

std::string NaiveBayesClassifier::predict(std::string_view text) const {
  if (labels_.empty()) throw UserError("classifier is not trained");
  std::vector<double> score = log_prior_;
  for (const auto& t : tokenize(text)) {
    auto it = log_likelihood_.find(t);
    if (it == log_likelihood_.end()) continue;
    for (std::size_t c = 0; c < score.size(); ++c) score[c] += it->second[c];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < score.size(); ++c) {
    if (score[c] > score[best]) best = c;
  }
  return labels_[best];
}

OriginClassifier train_origin_classifier(const std::vector<Corpus>& corpora, std::size_t per_community,
                                         double holdout, std::uint64_t seed) {
  if (corpora.size() < 2) throw UserError("origin classification needs at least 2 communities");
  if (!(holdout >= 0 && holdout < 1)) throw UserError("holdout fraction must be in [0, 1)");
  OriginClassifier out;
  for (const auto& corpus : corpora) {
    if (corpus.size() < 2) {
      throw UserError("community '" + corpus.community + "' has fewer than 2 documents for origin classification");
    }
    Rng rng = Rng::derive(seed, "origin-split:" + corpus.community);
    const auto picked = rng.sample_indices(corpus.size(), per_community);
    const std::size_t k = picked.size();
    std::size_t h = static_cast<std::size_t>(std::llround(static_cast<double>(k) * holdout));
    if (holdout > 0) h = std::max<std::size_t>(h, 1);
    h = std::min(h, k - 1);
    for (std::size_t i = 0; i < k; ++i) {
      LabeledText ex{corpus.documents[picked[i]].text, corpus.community};
      (i < h ? out.holdout_set : out.train_set).push_back(std::move(ex));
    }
  }
  out.model.train(out.train_set);
  if (!out.holdout_set.empty()) {
    std::size_t hits = 0;
    for (const auto& ex : out.holdout_set) hits += out.model.predict(ex.text) == ex.label;
    out.holdout_accuracy = static_cast<double>(hits) / static_cast<double>(out.holdout_set.size());
  }
  return out;
}

std::vector<std::string> classify_origin(const OriginClassifier& classifier, const std::vector<std::string>& texts) {
  std::vector<std::string> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(classifier.model.predict(t));
  return out;
}

std::string origin_instruction(const std::vector<std::string>& community_names) {
  std::string list;
  for (std::size_t i = 0; i < community_names.size(); ++i) {
    if (i > 0) list += community_names.size() > 2 ? ", " : " ";
    if (i + 1 == community_names.size() && i > 0) list += "and ";
    list += community_names[i];
  }
  return "From these communities: " + list + ", which community does this Tweet belong to?";
}

std::vector<Demonstration> origin_classification_demos(const std::vector<LabeledText>& examples,
                                                       const std::vector<std::string>& community_names) {
  const std::string instruction = origin_instruction(community_names);
  std::vector<Demonstration> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({instruction, ex.text, ex.label});
  return out;
}

}  // namespace twin
