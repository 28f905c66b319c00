// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>

#include "twin/eval.hpp"

namespace twin {

std::vector<std::string> rouge_tokens(std::string_view text) { return split_whitespace(to_lower_ascii(text)); }

namespace {

template <typename T>
std::size_t lcs(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.empty() || b.empty()) return 0;
  const auto& longer = a.size() >= b.size() ? a : b;
  const auto& shorter = a.size() >= b.size() ? b : a;
  std::vector<std::size_t> prev(shorter.size() + 1, 0), cur(shorter.size() + 1, 0);
  for (const auto& x : longer) {
    for (std::size_t j = 1; j <= shorter.size(); ++j) {
      cur[j] = x == shorter[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[shorter.size()];
}

double f_measure(std::size_t l, std::size_t len_a, std::size_t len_b) {
  if (l == 0 || len_a == 0 || len_b == 0) return 0.0;
  const double p = static_cast<double>(l) / static_cast<double>(len_a);
  const double r = static_cast<double>(l) / static_cast<double>(len_b);
  return 2 * p * r / (p + r);
}

}  // namespace

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) { return lcs(a, b); }

double rouge_l_tokens(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return f_measure(lcs(a, b), a.size(), b.size());
}

double rouge_l(std::string_view a, std::string_view b) { return rouge_l_tokens(rouge_tokens(a), rouge_tokens(b)); }

RougeIndex::RougeIndex(const std::vector<std::string>& references) {
  refs_.reserve(references.size());
  for (std::size_t r = 0; r < references.size(); ++r) {
    refs_.push_back(rouge_tokens(references[r]));
    std::unordered_map<int, std::size_t> counts;
    for (const auto& t : refs_.back()) {
      auto [it, inserted] = vocab_.emplace(t, static_cast<int>(vocab_.size()));
      if (inserted) postings_.emplace_back();
      ++counts[it->second];
    }
    for (const auto& [tok, n] : counts) postings_[static_cast<std::size_t>(tok)].emplace_back(r, n);
  }
}

std::vector<int> RougeIndex::intern(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = vocab_.find(t);
    out.push_back(it == vocab_.end() ? -1 : it->second);
  }
  return out;
}

RougeIndex::Match RougeIndex::best_match(std::string_view text, std::optional<std::size_t> exclude) const {
  const auto tokens = rouge_tokens(text);
  Match best;
  if (tokens.empty()) return best;
  const auto ids = intern(tokens);

  std::unordered_map<int, std::size_t> query_counts;
  for (int id : ids) {
    if (id >= 0) ++query_counts[id];
  }
  // Multiset overlap bounds the LCS from above.
  std::unordered_map<std::size_t, std::size_t> overlap;
  for (const auto& [tok, qn] : query_counts) {
    for (const auto& [ref, rn] : postings_[static_cast<std::size_t>(tok)]) overlap[ref] += std::min(qn, rn);
  }
  struct Candidate {
    std::size_t ref;
    double bound;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(overlap.size());
  for (const auto& [ref, o] : overlap) {
    if (exclude && *exclude == ref) continue;
    candidates.push_back({ref, f_measure(o, tokens.size(), refs_[ref].size())});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.ref < b.ref;
  });
  for (const auto& c : candidates) {
    if (best.reference && c.bound <= best.score) break;
    const double s = rouge_l_tokens(tokens, refs_[c.ref]);
    if (!best.reference || s > best.score) {
      best.score = s;
      best.reference = c.ref;
    }
  }
  return best;
}

}  // namespace twin
