// SPDX-License-Identifier: Apache-2.0
//
// Questionnaire administration to aligned models and scoring of the eating
// disorder screener: Weight Concerns Scale (C1) and the boolean risk
// criteria C2-C4.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "twin/providers.hpp"
#include "twin/util.hpp"

namespace twin {

enum class ItemKind {
  Choice,   // lettered options
  Numeric,  // open numeric answer
  Count,    // frequency: a number, or a letter band where "a" means none
};

struct QuestionItem {
  std::string id;
  std::string text;
  ItemKind kind = ItemKind::Choice;
  std::vector<std::string> options;  // option i has letter 'a' + i

  std::size_t option_index(std::string_view vote) const;  // npos when not an option letter
};

/// How majority votes turn into C1-C4. Item ids refer to the questionnaire.
struct ScoringRules {
  std::vector<std::string> wcs_items{"Q5", "Q6", "Q7", "Q8", "Q9"};
  std::string c2_item = "Q8";
  std::vector<std::string> c2_votes{"c", "d"};
  std::string c3_item = "Q6";
  std::vector<std::string> c3_votes{"c", "d", "e"};
  std::vector<std::string> c4_items{"Q11a", "Q11b", "Q11c", "Q11d"};
  std::size_t c4_min_affirmative = 3;
  /// Votes that count as "no" for C4 items besides numeric zero.
  std::vector<std::string> c4_negative_votes{"a"};
};

struct Questionnaire {
  std::string name;
  std::vector<QuestionItem> items;
  ScoringRules scoring;

  const QuestionItem* find(std::string_view id) const;
  const QuestionItem& at(std::string_view id) const;  // throws UserError

  /// Unique ids, options for choice items, scoring items present.
  void validate() const;

  static Questionnaire from_json(const Json& j);
  Json to_json() const;
};

/// Built-in SWED 3.0 instance as printed in the screener's reference text.
const Questionnaire& swed_questionnaire();

Questionnaire load_questionnaire(const std::filesystem::path& path);

/// The prompt sent for one item: question, options as "(a) ..." lines, then
/// the answer instruction.
std::string item_prompt(const QuestionItem& item);

/// Normalized vote ("c", "135", "2.5") or nullopt when nothing can be extracted.
std::optional<std::string> parse_response(std::string_view raw, const QuestionItem& item);

/// Modal vote. Ties go to the option earliest in the item's order: letters in
/// alphabetical order, then numbers ascending. Throws UserError when empty.
std::string majority_vote(const std::vector<std::string>& votes, const QuestionItem& item);

struct ItemResponses {
  std::string item;
  std::vector<std::string> raw;
  std::vector<std::string> votes;
  std::size_t unparsable = 0;  // responses excluded from voting
  std::string majority;
};

struct ResponseSet {
  std::vector<ItemResponses> items;

  const ItemResponses* find(std::string_view id) const;
  /// Item id -> majority vote.
  std::map<std::string, std::string> majorities() const;
  Json to_json() const;
};

struct AdministerOptions {
  std::size_t samples = 50;
  std::uint64_t seed = 0;
  /// Extra generation rounds for unparsable responses.
  std::size_t retry_budget = 2;
  GenerationParams params{0.7, 16, 1, 0};
};

/// Throws UserError("no responses") for samples == 0 and ProviderError
/// naming the item when no response to it can be parsed.
ResponseSet administer(Provider& aligned, const Questionnaire& questionnaire, const AdministerOptions& options = {});

/// C1 from majority votes: option i of a k-option item maps to 100 i / (k - 1)
/// and C1 is the mean over the scale items.
double wcs_score(const std::map<std::string, std::string>& votes, const Questionnaire& questionnaire);

bool is_affirmative(std::string_view vote, const ScoringRules& rules);

struct ScreeningResult {
  std::string community;
  double c1 = 0;
  bool c2 = false;
  bool c3 = false;
  bool c4 = false;
  std::map<std::string, std::string> votes;

  Json to_json() const;
};

/// Throws UserError listing every required item without a vote.
ScreeningResult criteria(const std::string& community, const std::map<std::string, std::string>& votes,
                         const Questionnaire& questionnaire);

struct ReferenceRow {
  double c1 = 0;
  bool c2 = false;
  bool c3 = false;
  bool c4 = false;
};

struct ScreeningReportRow {
  ScreeningResult result;
  std::optional<ReferenceRow> reference;
  bool c1_matches = true;  // to one decimal
  bool c2_matches = true;
  bool c3_matches = true;
  bool c4_matches = true;
};

struct ScreeningReport {
  std::vector<ScreeningReportRow> rows;  // C1 descending, then community name

  Json to_json() const;
  void write_csv(const std::filesystem::path& path) const;
  /// Item-by-community table of majority votes.
  void write_vote_log(const std::filesystem::path& path) const;
};

ScreeningReport screening_report(std::vector<ScreeningResult> results,
                                 const std::map<std::string, ReferenceRow>& references = {});

/// {"community": {"c1": 45.0, "c2": true, ...}, ...}
std::map<std::string, ReferenceRow> parse_reference_rows(const Json& j);

}  // namespace twin
