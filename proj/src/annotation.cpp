// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <map>

#include "twin/eval.hpp"

namespace twin {

namespace {

std::string item_id(char prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%04zu", prefix, n);
  return buf;
}

const Corpus* find_community(const std::vector<Corpus>& corpora, const std::string& community) {
  for (const auto& c : corpora) {
    if (c.community == community) return &c;
  }
  return nullptr;
}

std::vector<std::string> sorted_communities(const std::vector<Corpus>& corpora) {
  std::vector<std::string> names;
  for (const auto& c : corpora) names.push_back(c.community);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

}  // namespace

void AnnotationSheet::write(const std::filesystem::path& sheet, const std::filesystem::path& key) const {
  write_csv(sheet, header, rows);
  write_csv(key, key_header, key_rows);
}

AnnotationSheet sample_triplets(const std::vector<Corpus>& context, const std::vector<Corpus>& finetuned,
                                std::size_t per_community, std::uint64_t seed) {
  AnnotationSheet sheet;
  sheet.header = {"item", "community", "topic", "tweet_a", "tweet_b", "more_aligned"};
  sheet.key_header = {"item", "tweet_a_source", "tweet_a_id", "tweet_b_source", "tweet_b_id"};
  std::size_t next_item = 1;

  for (const auto& community : sorted_communities(context)) {
    const Corpus* ctx = find_community(context, community);
    const Corpus* ft = find_community(finetuned, community);
    if (!ft) {
      sheet.warnings.push_back("no finetuned corpus for '" + community + "'; no triplets");
      continue;
    }
    Rng rng = Rng::derive(seed, "triplets:" + community);
    std::map<std::string, std::vector<std::size_t>> ctx_by_topic, ft_by_topic;
    std::size_t untagged = 0;
    for (std::size_t i = 0; i < ctx->size(); ++i) {
      const auto& t = ctx->documents[i].topic;
      t.empty() ? void(++untagged) : ctx_by_topic[t].push_back(i);
    }
    for (std::size_t i = 0; i < ft->size(); ++i) {
      const auto& t = ft->documents[i].topic;
      t.empty() ? void(++untagged) : ft_by_topic[t].push_back(i);
    }
    if (untagged > 0) {
      sheet.warnings.push_back(std::to_string(untagged) + " documents without a topic skipped in '" + community + "'");
    }

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (auto& [topic, ctx_idx] : ctx_by_topic) {
      auto it = ft_by_topic.find(topic);
      if (it == ft_by_topic.end()) continue;
      auto& ft_idx = it->second;
      rng.shuffle(ctx_idx);
      rng.shuffle(ft_idx);
      for (std::size_t k = 0; k < std::min(ctx_idx.size(), ft_idx.size()); ++k) pairs.emplace_back(ctx_idx[k], ft_idx[k]);
    }
    rng.shuffle(pairs);
    if (pairs.size() < per_community) {
      sheet.warnings.push_back("only " + std::to_string(pairs.size()) + " topic-matched pairs for '" + community + "'");
    }
    pairs.resize(std::min(pairs.size(), per_community));

    for (const auto& [ci, fi] : pairs) {
      const Document& c = ctx->documents[ci];
      const Document& f = ft->documents[fi];
      const bool ft_first = rng.index(2) == 0;
      const Document& a = ft_first ? f : c;
      const Document& b = ft_first ? c : f;
      const std::string id = item_id('T', next_item++);
      sheet.rows.push_back({id, community, c.topic, a.text, b.text, ""});
      sheet.key_rows.push_back({id, to_string(a.provenance), a.id, to_string(b.provenance), b.id});
    }
  }
  return sheet;
}

std::vector<Triplet> unblind_triplets(const AnnotationSheet& sheet) {
  std::map<std::string, const std::vector<std::string>*> key;
  for (const auto& row : sheet.key_rows) key[row.at(0)] = &row;
  std::vector<Triplet> out;
  for (const auto& row : sheet.rows) {
    auto it = key.find(row.at(0));
    if (it == key.end()) throw UserError("annotation key lacks item " + row.at(0));
    const auto& k = *it->second;
    Triplet t{row.at(1), row.at(2), "", ""};
    (k.at(1) == "context" ? t.context_text : t.finetuned_text) = row.at(3);
    (k.at(3) == "context" ? t.context_text : t.finetuned_text) = row.at(4);
    out.push_back(std::move(t));
  }
  return out;
}

AnnotationSheet sample_harm_batch(const std::vector<Corpus>& original, const std::vector<Corpus>& context,
                                  const std::vector<Corpus>& finetuned, std::size_t per_source, std::uint64_t seed) {
  AnnotationSheet sheet;
  sheet.header = {"item", "community", "text", "harmful", "category"};
  sheet.key_header = {"item", "source", "doc_id"};
  std::size_t next_item = 1;

  for (const auto& community : sorted_communities(original)) {
    Rng rng = Rng::derive(seed, "harm:" + community);
    std::vector<const Document*> picked;
    for (const auto* set : {&original, &context, &finetuned}) {
      const Corpus* c = find_community(*set, community);
      const std::size_t available = c ? c->size() : 0;
      if (available < per_source) {
        sheet.warnings.push_back("only " + std::to_string(available) + " documents available from a source of '" +
                                 community + "'");
      }
      if (!c) continue;
      for (std::size_t i : rng.sample_indices(c->size(), per_source)) picked.push_back(&c->documents[i]);
    }
    rng.shuffle(picked);
    for (const Document* d : picked) {
      const std::string id = item_id('H', next_item++);
      sheet.rows.push_back({id, community, d->text, "", ""});
      sheet.key_rows.push_back({id, to_string(d->provenance), d->id});
    }
  }
  return sheet;
}

std::map<std::tuple<std::string, std::string, std::string>, std::size_t> harm_category_counts(
    const AnnotationSheet& batch, const std::vector<std::string>& annotator_a,
    const std::vector<std::string>& annotator_b, const std::string& none_label) {
  if (annotator_a.size() != batch.rows.size() || annotator_b.size() != batch.rows.size()) {
    throw UserError("harm labels must cover every sheet row");
  }
  std::map<std::string, std::string> source;
  for (const auto& row : batch.key_rows) source[row.at(0)] = row.at(1);
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> counts;
  for (std::size_t i = 0; i < batch.rows.size(); ++i) {
    const auto& label = annotator_a[i];
    if (label != annotator_b[i] || label.empty() || label == none_label) continue;
    auto it = source.find(batch.rows[i].at(0));
    if (it == source.end()) throw UserError("annotation key lacks item " + batch.rows[i].at(0));
    ++counts[{batch.rows[i].at(1), it->second, label}];
  }
  return counts;
}

}  // namespace twin
