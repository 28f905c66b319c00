// SPDX-License-Identifier: Apache-2.0
//
// Per-community post collections: ingestion, cleaning and curation.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "twin/util.hpp"

namespace twin {

class Provider;

enum class Provenance { Original, Finetuned, Context };

std::string to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct Document {
  std::string id;
  std::string community;
  std::string text;
  std::string author;  // empty when unknown
  bool is_repost = false;
  bool is_reply = false;
  std::optional<double> perplexity;
  Provenance provenance = Provenance::Original;
  std::string topic;  // synthetic documents only

  Json to_json() const;
  /// Requires id, community and text; other fields default.
  static Document from_json(const Json& j);
};

/// Documents of one community; ids are unique.
struct Corpus {
  std::string community;
  std::vector<Document> documents;

  std::size_t size() const { return documents.size(); }
  bool empty() const { return documents.empty(); }
  std::vector<std::string> texts() const;

  /// Throws UserError when a document belongs to another community, an id
  /// repeats, or a perplexity is negative.
  void validate() const;
};

struct CleanOptions {
  bool lowercase = false;
  /// Additional ECMAScript patterns whose matches are removed (platform artifacts).
  std::vector<std::string> extra_patterns;
};

/// Removes URLs, @-mentions, whole #-hashtag tokens and emoji codepoints, then
/// collapses whitespace. Idempotent.
std::string clean_text(std::string_view raw, const CleanOptions& options = {});

bool is_emoji_codepoint(char32_t cp);

/// Keeps documents that are neither reposts nor replies, in order.
std::vector<Document> filter_originals(const std::vector<Document>& docs);

/// Scores every document with `scorer` and keeps the `cap` lowest-perplexity
/// ones (ties by id), in that order.
Corpus curate(const Corpus& corpus, Provider& scorer, std::size_t cap = 10000);

/// First occurrence of each exact text wins.
Corpus dedup_exact(const Corpus& corpus);

std::vector<Document> read_documents(const std::filesystem::path& path);
void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs);
Corpus read_corpus(const std::filesystem::path& path, const std::string& community);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// Groups documents by community, preserving per-community order.
std::map<std::string, Corpus> group_by_community(const std::vector<Document>& docs);

}  // namespace twin
