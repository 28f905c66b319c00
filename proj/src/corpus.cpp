// SPDX-License-Identifier: Apache-2.0

#include "twin/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_set>

#include "twin/providers.hpp"

namespace twin {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Original:
      return "original";
    case Provenance::Finetuned:
      return "finetuned";
    case Provenance::Context:
      return "context";
  }
  return "original";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "original") return Provenance::Original;
  if (s == "finetuned") return Provenance::Finetuned;
  if (s == "context") return Provenance::Context;
  throw UserError("unknown provenance '" + std::string(s) + "'");
}

Json Document::to_json() const {
  Json j{{"id", id},
         {"community", community},
         {"text", text},
         {"is_repost", is_repost},
         {"is_reply", is_reply},
         {"provenance", to_string(provenance)}};
  if (!author.empty()) j["author"] = author;
  if (perplexity) j["perplexity"] = *perplexity;
  if (!topic.empty()) j["topic"] = topic;
  return j;
}

Document Document::from_json(const Json& j) {
  if (!j.is_object()) throw UserError("document record must be an object");
  for (const char* field : {"id", "community", "text"}) {
    if (!j.contains(field)) throw UserError(std::string("document record missing '") + field + "'");
  }
  Document d;
  // Numeric ids are common in exports; normalize to strings.
  d.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  d.community = j["community"].is_string() ? j["community"].get<std::string>() : j["community"].dump();
  d.text = j["text"].get<std::string>();
  if (j.contains("author") && !j["author"].is_null()) {
    d.author = j["author"].is_string() ? j["author"].get<std::string>() : j["author"].dump();
  }
  d.is_repost = j.value("is_repost", false);
  d.is_reply = j.value("is_reply", false);
  if (j.contains("perplexity") && !j["perplexity"].is_null()) {
    d.perplexity = j["perplexity"].get<double>();
    if (*d.perplexity < 0) throw UserError("document " + d.id + " has negative perplexity");
  }
  if (j.contains("provenance")) d.provenance = provenance_from_string(j["provenance"].get<std::string>());
  d.topic = j.value("topic", std::string());
  return d;
}

std::vector<std::string> Corpus::texts() const {
  std::vector<std::string> out;
  out.reserve(documents.size());
  for (const auto& d : documents) out.push_back(d.text);
  return out;
}

void Corpus::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& d : documents) {
    if (d.community != community) {
      throw UserError("document " + d.id + " belongs to '" + d.community + "', not '" + community + "'");
    }
    if (!ids.insert(d.id).second) throw UserError("duplicate document id " + d.id + " in " + community);
    if (d.perplexity && *d.perplexity < 0) throw UserError("document " + d.id + " has negative perplexity");
  }
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

bool is_emoji_codepoint(char32_t cp) {
  return (cp >= 0x1F000 && cp <= 0x1FAFF) ||  // pictographs, emoticons, transport, flags, skin tones
         (cp >= 0x2600 && cp <= 0x27BF) ||    // misc symbols, dingbats
         cp == 0x231A || cp == 0x231B || (cp >= 0x23E9 && cp <= 0x23F3) || (cp >= 0x23F8 && cp <= 0x23FA) ||
         (cp >= 0x2B05 && cp <= 0x2B07) || cp == 0x2B1B || cp == 0x2B1C || cp == 0x2B50 || cp == 0x2B55 ||
         cp == 0x3030 || cp == 0x303D || cp == 0x3297 || cp == 0x3299 ||
         cp == 0x200D ||                       // zero-width joiner
         cp == 0x20E3 ||                       // combining keycap
         cp == 0xFE0E || cp == 0xFE0F ||       // variation selectors
         (cp >= 0xE0020 && cp <= 0xE007F);     // tag sequences
}

namespace {

// Decodes one UTF-8 sequence at s[i]; malformed bytes decode as themselves
// with length 1 so no input is ever lost.
char32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  auto bits = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    len = 2;
    return (static_cast<char32_t>(b0 & 0x1F) << 6) | bits(1);
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    len = 3;
    return (static_cast<char32_t>(b0 & 0x0F) << 12) | (bits(1) << 6) | bits(2);
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    len = 4;
    return (static_cast<char32_t>(b0 & 0x07) << 18) | (bits(1) << 12) | (bits(2) << 6) | bits(3);
  }
  len = 1;
  return b0;
}

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Word characters for mention/hashtag bodies: ASCII alnum, underscore and any
// non-ASCII byte (letters of other scripts).
bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

std::string strip_emoji(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    std::size_t len = 1;
    const char32_t cp = decode_utf8(s, i, len);
    if (is_emoji_codepoint(cp)) {
      out += ' ';
    } else {
      out.append(s.substr(i, len));
    }
    i += len;
  }
  return out;
}

bool starts_with_ci(std::string_view s, std::size_t i, std::string_view prefix) {
  if (i + prefix.size() > s.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    char c = s[i + k];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c != prefix[k]) return false;
  }
  return true;
}

std::string strip_urls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (starts_with_ci(s, i, "http://") || starts_with_ci(s, i, "https://") || starts_with_ci(s, i, "www.")) {
      while (i < s.size() && !is_ascii_space(s[i])) ++i;
      out += ' ';
      continue;
    }
    out += s[i++];
  }
  return out;
}

std::string strip_mentions_and_hashtags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const char c = s[i];
    const bool marker = c == '@' || c == '#';
    // Decided on the output so far, so a removal can expose the next marker.
    const bool boundary = out.empty() || !is_word_byte(out.back());
    if (marker && boundary && i + 1 < s.size() && is_word_byte(s[i + 1])) {
      std::size_t j = i + 1;
      while (j < s.size() && is_word_byte(s[j])) ++j;
      out += ' ';
      i = j;
      continue;
    }
    out += c;
    ++i;
  }
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

}  // namespace

std::string clean_text(std::string_view raw, const CleanOptions& options) {
  std::string s = strip_emoji(raw);
  for (const auto& pattern : options.extra_patterns) {
    s = std::regex_replace(s, std::regex(pattern), " ");
  }
  s = strip_urls(s);
  s = strip_mentions_and_hashtags(s);
  s = collapse_whitespace(s);
  if (options.lowercase) s = to_lower_ascii(s);
  return s;
}

std::vector<Document> filter_originals(const std::vector<Document>& docs) {
  std::vector<Document> out;
  std::copy_if(docs.begin(), docs.end(), std::back_inserter(out),
               [](const Document& d) { return !d.is_repost && !d.is_reply; });
  return out;
}

Corpus curate(const Corpus& corpus, Provider& scorer, std::size_t cap) {
  if (cap == 0) throw UserError("curate: cap must be positive");
  Corpus out{corpus.community, {}};
  if (corpus.empty()) return out;
  std::vector<double> scores;
  try {
    scores = scorer.perplexity(corpus.texts());
  } catch (const ProviderError& e) {
    throw ProviderError(e.kind(), "curation of '" + corpus.community + "' aborted: " + e.what(), e.unscored());
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return corpus.documents[a].id < corpus.documents[b].id;
  });
  order.resize(std::min(cap, order.size()));
  out.documents.reserve(order.size());
  for (std::size_t i : order) {
    Document d = corpus.documents[i];
    d.perplexity = scores[i];
    out.documents.push_back(std::move(d));
  }
  return out;
}

Corpus dedup_exact(const Corpus& corpus) {
  Corpus out{corpus.community, {}};
  std::unordered_set<std::string> seen;
  for (const auto& d : corpus.documents) {
    if (seen.insert(d.text).second) out.documents.push_back(d);
  }
  return out;
}

std::vector<Document> read_documents(const std::filesystem::path& path) {
  std::vector<Document> docs;
  read_jsonl(path, [&](std::size_t line, const Json& j) {
    try {
      docs.push_back(Document::from_json(j));
    } catch (const std::exception& e) {
      throw UserError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return docs;
}

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += d.to_json().dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

Corpus read_corpus(const std::filesystem::path& path, const std::string& community) {
  Corpus c{community, read_documents(path)};
  c.validate();
  return c;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  write_documents(path, corpus.documents);
}

std::map<std::string, Corpus> group_by_community(const std::vector<Document>& docs) {
  std::map<std::string, Corpus> out;
  for (const auto& d : docs) {
    auto& c = out[d.community];
    c.community = d.community;
    c.documents.push_back(d);
  }
  return out;
}

}  // namespace twin
