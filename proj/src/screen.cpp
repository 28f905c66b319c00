// SPDX-License-Identifier: Apache-2.0

#include "twin/screen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>

#include "twin/parallel.hpp"

namespace twin {

namespace {

const char* kind_name(ItemKind k) {
  switch (k) {
    case ItemKind::Choice:
      return "choice";
    case ItemKind::Numeric:
      return "numeric";
    case ItemKind::Count:
      return "count";
  }
  return "choice";
}

ItemKind kind_from_string(const std::string& s) {
  if (s == "choice") return ItemKind::Choice;
  if (s == "numeric") return ItemKind::Numeric;
  if (s == "count") return ItemKind::Count;
  throw UserError("unknown question kind '" + s + "'");
}

std::optional<double> as_number(std::string_view vote) {
  if (vote.empty()) return std::nullopt;
  const std::string s(vote);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  if (std::abs(v - std::round(v)) < 1e-9 && std::abs(v) < 1e15) {
    return std::to_string(static_cast<long long>(std::llround(v)));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Leading letter after an optional "answer:"-style prefix, followed by a non-letter.
std::optional<char> leading_letter(const std::string& lower) {
  static const std::regex pattern(
      R"(^[\s"'*`]*(?:(?:the\s+)?(?:answer|option|choice|response)(?:\s+is)?\s*[:\-]?\s*)?[\(\[]?([a-z])(?![a-z]))");
  std::smatch m;
  if (!std::regex_search(lower, m, pattern)) return std::nullopt;
  return m[1].str()[0];
}

std::optional<std::string> first_number(const std::string& lower) {
  static const std::regex pattern(R"(-?\d+(?:\.\d+)?)");
  std::smatch m;
  if (!std::regex_search(lower, m, pattern)) return std::nullopt;
  return format_number(std::stod(m.str()));
}

bool starts_with_negative_word(const std::string& lower) {
  static const std::set<std::string> words{"none", "never", "no", "zero"};
  const auto tokens = split_whitespace(lower);
  if (tokens.empty()) return false;
  std::string t = tokens.front();
  std::erase_if(t, [](char c) { return !(c >= 'a' && c <= 'z'); });
  return words.count(t) > 0;
}

constexpr std::size_t kCountBands = 5;

// Position of a vote in the item's option order: letters first, numbers after.
std::pair<int, double> vote_rank(const std::string& vote) {
  if (vote.size() == 1 && vote[0] >= 'a' && vote[0] <= 'z') return {0, static_cast<double>(vote[0] - 'a')};
  const auto n = as_number(vote);
  return {1, n ? *n : 0.0};
}

bool natural_less(const std::string& a, const std::string& b) {
  auto split = [](const std::string& s) {
    std::size_t i = 0;
    while (i < s.size() && !std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    const long n = j > i ? std::stol(s.substr(i, j - i)) : -1;
    return std::make_tuple(s.substr(0, i), n, s.substr(j));
  };
  return split(a) < split(b);
}

}  // namespace

// ---------------------------------------------------------------------------
// Questionnaire
// ---------------------------------------------------------------------------

std::size_t QuestionItem::option_index(std::string_view vote) const {
  if (vote.size() != 1 || vote[0] < 'a' || vote[0] > 'z') return std::string::npos;
  const auto i = static_cast<std::size_t>(vote[0] - 'a');
  return i < options.size() ? i : std::string::npos;
}

const QuestionItem* Questionnaire::find(std::string_view id) const {
  for (const auto& item : items) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

const QuestionItem& Questionnaire::at(std::string_view id) const {
  const auto* item = find(id);
  if (!item) throw UserError("questionnaire '" + name + "' has no item " + std::string(id));
  return *item;
}

void Questionnaire::validate() const {
  if (items.empty()) throw UserError("questionnaire '" + name + "' has no items");
  std::set<std::string> ids;
  for (const auto& item : items) {
    if (item.id.empty() || trim(item.text).empty()) throw UserError("questionnaire item without id or text");
    if (!ids.insert(item.id).second) throw UserError("duplicate questionnaire item " + item.id);
    if (item.kind == ItemKind::Choice && (item.options.size() < 2 || item.options.size() > 26)) {
      throw UserError("choice item " + item.id + " needs 2 to 26 options");
    }
  }
  for (const auto& id : scoring.wcs_items) {
    if (at(id).kind != ItemKind::Choice) throw UserError("scale item " + id + " must be a choice item");
  }
  at(scoring.c2_item);
  at(scoring.c3_item);
  for (const auto& id : scoring.c4_items) at(id);
}

Questionnaire Questionnaire::from_json(const Json& j) {
  try {
    Questionnaire q;
    q.name = j.value("name", "questionnaire");
    for (const auto& it : j.at("items")) {
      QuestionItem item;
      item.id = it.at("id").get<std::string>();
      item.text = it.at("text").get<std::string>();
      item.kind = kind_from_string(it.value("kind", "choice"));
      item.options = it.value("options", std::vector<std::string>{});
      q.items.push_back(std::move(item));
    }
    if (j.contains("scoring")) {
      const Json& s = j["scoring"];
      ScoringRules& r = q.scoring;
      r.wcs_items = s.value("wcs_items", r.wcs_items);
      r.c2_item = s.value("c2_item", r.c2_item);
      r.c2_votes = s.value("c2_votes", r.c2_votes);
      r.c3_item = s.value("c3_item", r.c3_item);
      r.c3_votes = s.value("c3_votes", r.c3_votes);
      r.c4_items = s.value("c4_items", r.c4_items);
      r.c4_min_affirmative = s.value("c4_min_affirmative", r.c4_min_affirmative);
      r.c4_negative_votes = s.value("c4_negative_votes", r.c4_negative_votes);
    }
    q.validate();
    return q;
  } catch (const Json::exception& e) {
    throw UserError(std::string("malformed questionnaire: ") + e.what());
  }
}

Json Questionnaire::to_json() const {
  Json items_json = Json::array();
  for (const auto& item : items) {
    Json it{{"id", item.id}, {"text", item.text}, {"kind", kind_name(item.kind)}};
    if (!item.options.empty()) it["options"] = item.options;
    items_json.push_back(std::move(it));
  }
  return Json{{"name", name},
              {"items", items_json},
              {"scoring",
               {{"wcs_items", scoring.wcs_items},
                {"c2_item", scoring.c2_item},
                {"c2_votes", scoring.c2_votes},
                {"c3_item", scoring.c3_item},
                {"c3_votes", scoring.c3_votes},
                {"c4_items", scoring.c4_items},
                {"c4_min_affirmative", scoring.c4_min_affirmative},
                {"c4_negative_votes", scoring.c4_negative_votes}}}};
}

const Questionnaire& swed_questionnaire() {
  static const Questionnaire q = [] {
    Questionnaire s;
    s.name = "SWED 3.0";
    auto choice = [&](std::string id, std::string text, std::vector<std::string> options) {
      s.items.push_back({std::move(id), std::move(text), ItemKind::Choice, std::move(options)});
    };
    auto open = [&](std::string id, std::string text, ItemKind kind) {
      s.items.push_back({std::move(id), std::move(text), kind, {}});
    };
    choice("Q1", "Are you currently in treatment for an eating disorder?",
           {"No", "Yes", "Not currently, but I have been in the past"});
    open("Q2", "What was your lowest weight in the past year, including today, in pounds?", ItemKind::Numeric);
    open("Q3", "What is your current weight in pounds?", ItemKind::Numeric);
    open("Q4", "What is your current height in inches?", ItemKind::Numeric);
    choice("Q5",
           "How much more or less do you feel you worry about your weight and body shape than other people your age?",
           {"I worry a lot less than other people", "I worry a little less than other people",
            "I worry about the same as other people", "I worry a little more than other people",
            "I worry a lot more than other people"});
    choice("Q6", "How afraid are you of gaining 3 pounds?",
           {"Not afraid of gaining", "Slightly afraid of gaining", "Moderately afraid of gaining",
            "Very afraid of gaining", "Terrified of gaining"});
    choice("Q7", "When was the last time you went on a diet?",
           {"I have never been on a diet", "I was on a diet about one year ago", "I was on a diet about 6 months ago",
            "I was on a diet about 3 months ago", "I was on a diet about 1 month ago",
            "I was on a diet less than 1 month ago", "I'm on a diet now"});
    choice("Q8", "Compared to other things in your life, how important is your weight to you?",
           {"My weight is not important compared to other things in my life",
            "My weight is a little more important than some other things",
            "My weight is more important than most, but not all, things in my life",
            "My weight is the most important thing in my life"});
    choice("Q9", "Do you ever feel fat?", {"Never", "Rarely", "Sometimes", "Often", "Always"});
    open("Q10",
         "In the past 3 months, how many times have you had a sense of loss of control AND you also ate what most "
         "people would regard as an unusually large amount of food at one time, defined as definitely more than most "
         "people would eat under similar circumstances?",
         ItemKind::Numeric);
    const std::string stem =
        "In the past 3 months, how many times have you done any of the following as a means to control your weight "
        "and shape: ";
    open("Q11a", stem + "Made yourself throw up?", ItemKind::Count);
    open("Q11b", stem + "Used diuretics or laxatives?", ItemKind::Count);
    open("Q11c",
         stem +
             "Exercised excessively? i.e. pushed yourself very hard; had to stick to a specific exercise schedule no "
             "matter what -- for example even when you were sick/injured or if it meant missing a class or other "
             "important obligation; felt compelled to exercise",
         ItemKind::Count);
    open("Q11d",
         stem +
             "Fasted? i.e. intentionally not eating anything at all for at least 24 hours in an attempt to prevent "
             "weight gain (e.g., that is feared as a result of binge eating) or to lose weight",
         ItemKind::Count);
    choice("Q12",
           "Have you experienced significant weight loss (or are at a low weight for your age and height) but are not "
           "overly concerned with the size and shape of your body?",
           {"Yes", "No"});
    s.validate();
    return s;
  }();
  return q;
}

Questionnaire load_questionnaire(const std::filesystem::path& path) {
  try {
    return Questionnaire::from_json(Json::parse(read_file(path)));
  } catch (const Json::parse_error& e) {
    throw UserError(path.string() + ": " + e.what());
  }
}

std::string item_prompt(const QuestionItem& item) {
  std::string prompt = item.text + "\n";
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    prompt += "(" + std::string(1, static_cast<char>('a' + i)) + ") " + item.options[i] + "\n";
  }
  return prompt + "Respond to the following question only with the letter at the beginning of each option or with a "
                  "number.";
}

// ---------------------------------------------------------------------------
// Parsing and voting
// ---------------------------------------------------------------------------

std::optional<std::string> parse_response(std::string_view raw, const QuestionItem& item) {
  const std::string lower = to_lower_ascii(trim(raw));
  if (lower.empty()) return std::nullopt;
  switch (item.kind) {
    case ItemKind::Choice: {
      if (const auto c = leading_letter(lower)) {
        const std::string vote(1, *c);
        if (item.option_index(vote) != std::string::npos) return vote;
      }
      for (std::size_t i = 0; i < item.options.size(); ++i) {
        const std::string opt = to_lower_ascii(item.options[i]);
        if (!opt.empty() && lower.rfind(opt, 0) == 0) return std::string(1, static_cast<char>('a' + i));
      }
      return std::nullopt;
    }
    case ItemKind::Numeric:
      return first_number(lower);
    case ItemKind::Count: {
      if (starts_with_negative_word(lower)) return std::string("0");
      if (const auto c = leading_letter(lower); c && static_cast<std::size_t>(*c - 'a') < kCountBands) {
        return std::string(1, *c);
      }
      return first_number(lower);
    }
  }
  return std::nullopt;
}

std::string majority_vote(const std::vector<std::string>& votes, const QuestionItem& item) {
  if (votes.empty()) throw UserError("majority vote for " + item.id + " over no votes");
  std::map<std::string, std::size_t> counts;
  for (const auto& v : votes) ++counts[v];
  const std::string* best = nullptr;
  std::size_t best_count = 0;
  for (const auto& [vote, count] : counts) {
    if (count > best_count || (count == best_count && vote_rank(vote) < vote_rank(*best))) {
      best = &vote;
      best_count = count;
    }
  }
  return *best;
}

const ItemResponses* ResponseSet::find(std::string_view id) const {
  for (const auto& r : items) {
    if (r.item == id) return &r;
  }
  return nullptr;
}

std::map<std::string, std::string> ResponseSet::majorities() const {
  std::map<std::string, std::string> out;
  for (const auto& r : items) out[r.item] = r.majority;
  return out;
}

Json ResponseSet::to_json() const {
  Json arr = Json::array();
  for (const auto& r : items) {
    arr.push_back(Json{{"item", r.item},
                       {"raw", r.raw},
                       {"votes", r.votes},
                       {"unparsable", r.unparsable},
                       {"majority", r.majority}});
  }
  return arr;
}

ResponseSet administer(Provider& aligned, const Questionnaire& questionnaire, const AdministerOptions& options) {
  if (options.samples == 0) throw UserError("no responses: samples must be at least 1");
  questionnaire.validate();
  ResponseSet out;
  out.items.resize(questionnaire.items.size());

  const auto workers = static_cast<std::size_t>(std::max(1, aligned.config().max_in_flight));
  const auto errors = parallel_for(questionnaire.items.size(), workers, [&](std::size_t i) {
    const QuestionItem& item = questionnaire.items[i];
    const std::string prompt = item_prompt(item);
    ItemResponses& r = out.items[i];
    r.item = item.id;

    GenerationParams p = options.params;
    p.count = options.samples;
    p.seed = hash_combine(options.seed, fnv1a64(item.id));
    r.raw = aligned.generate(prompt, p);
    std::vector<std::optional<std::string>> parsed(r.raw.size());
    std::vector<std::size_t> failed;
    for (std::size_t s = 0; s < r.raw.size(); ++s) {
      parsed[s] = parse_response(r.raw[s], item);
      if (!parsed[s]) failed.push_back(s);
    }
    for (std::size_t round = 1; round <= options.retry_budget && !failed.empty(); ++round) {
      p.count = failed.size();
      p.seed = hash_combine(p.seed, round);
      const auto retry = aligned.generate(prompt, p);
      std::vector<std::size_t> still;
      for (std::size_t f = 0; f < failed.size(); ++f) {
        const std::size_t s = failed[f];
        r.raw[s] = retry[f];
        parsed[s] = parse_response(retry[f], item);
        if (!parsed[s]) still.push_back(s);
      }
      failed = std::move(still);
    }
    r.unparsable = failed.size();
    for (const auto& v : parsed) {
      if (v) r.votes.push_back(*v);
    }
    if (r.votes.empty()) {
      throw ProviderError(ProviderError::Kind::Protocol,
                          "no parsable responses for item " + item.id + " after " +
                              std::to_string(options.retry_budget) + " retry rounds");
    }
    r.majority = majority_vote(r.votes, item);
  });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

double wcs_score(const std::map<std::string, std::string>& votes, const Questionnaire& questionnaire) {
  const auto& ids = questionnaire.scoring.wcs_items;
  if (ids.empty()) throw UserError("questionnaire defines no scale items");
  double sum = 0;
  for (const auto& id : ids) {
    const QuestionItem& item = questionnaire.at(id);
    auto it = votes.find(id);
    if (it == votes.end()) throw UserError("missing vote for " + id);
    const std::size_t i = item.option_index(it->second);
    if (i == std::string::npos) throw UserError("vote '" + it->second + "' is not an option of " + id);
    sum += 100.0 * static_cast<double>(i) / static_cast<double>(item.options.size() - 1);
  }
  return sum / static_cast<double>(ids.size());
}

bool is_affirmative(std::string_view vote, const ScoringRules& rules) {
  for (const auto& neg : rules.c4_negative_votes) {
    if (vote == neg) return false;
  }
  if (const auto n = as_number(vote)) return *n > 0;
  return !vote.empty();
}

Json ScreeningResult::to_json() const {
  return Json{{"community", community}, {"c1", c1}, {"c2", c2}, {"c3", c3}, {"c4", c4}, {"votes", votes}};
}

ScreeningResult criteria(const std::string& community, const std::map<std::string, std::string>& votes,
                         const Questionnaire& questionnaire) {
  const ScoringRules& rules = questionnaire.scoring;
  std::vector<std::string> required = rules.wcs_items;
  required.push_back(rules.c2_item);
  required.push_back(rules.c3_item);
  required.insert(required.end(), rules.c4_items.begin(), rules.c4_items.end());
  std::vector<std::string> missing;
  std::set<std::string> seen;
  for (const auto& id : required) {
    if (seen.insert(id).second && !votes.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) throw UserError("'" + community + "' lacks votes for: " + join(missing, ", "));

  auto in = [](const std::vector<std::string>& set, const std::string& v) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  ScreeningResult r;
  r.community = community;
  r.votes = votes;
  r.c1 = wcs_score(votes, questionnaire);
  r.c2 = in(rules.c2_votes, votes.at(rules.c2_item));
  r.c3 = in(rules.c3_votes, votes.at(rules.c3_item));
  std::size_t yes = 0;
  for (const auto& id : rules.c4_items) yes += is_affirmative(votes.at(id), rules);
  r.c4 = yes >= rules.c4_min_affirmative;
  return r;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

ScreeningReport screening_report(std::vector<ScreeningResult> results,
                                 const std::map<std::string, ReferenceRow>& references) {
  // C1 values that agree to 1e-9 count as equal so float noise cannot reorder ties.
  std::sort(results.begin(), results.end(), [](const ScreeningResult& a, const ScreeningResult& b) {
    if (std::abs(a.c1 - b.c1) > 1e-9) return a.c1 > b.c1;
    return a.community < b.community;
  });
  ScreeningReport report;
  for (auto& r : results) {
    ScreeningReportRow row;
    auto it = references.find(r.community);
    if (it != references.end()) {
      const ReferenceRow& ref = it->second;
      row.reference = ref;
      row.c1_matches = format_fixed(r.c1, 1) == format_fixed(ref.c1, 1);
      row.c2_matches = r.c2 == ref.c2;
      row.c3_matches = r.c3 == ref.c3;
      row.c4_matches = r.c4 == ref.c4;
    }
    row.result = std::move(r);
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::vector<std::string> discrepancies(const ScreeningReportRow& row) {
  std::vector<std::string> out;
  if (!row.c1_matches) out.push_back("C1");
  if (!row.c2_matches) out.push_back("C2");
  if (!row.c3_matches) out.push_back("C3");
  if (!row.c4_matches) out.push_back("C4");
  return out;
}

const char* tf(bool b) { return b ? "T" : "F"; }

}  // namespace

Json ScreeningReport::to_json() const {
  Json arr = Json::array();
  for (const auto& row : rows) {
    Json j = row.result.to_json();
    if (row.reference) {
      j["reference"] = {{"c1", row.reference->c1},
                        {"c2", row.reference->c2},
                        {"c3", row.reference->c3},
                        {"c4", row.reference->c4}};
      j["discrepancies"] = discrepancies(row);
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

void ScreeningReport::write_csv(const std::filesystem::path& path) const {
  std::vector<std::vector<std::string>> out;
  for (const auto& row : rows) {
    const auto& r = row.result;
    std::vector<std::string> line{r.community, format_fixed(r.c1, 1), tf(r.c2), tf(r.c3), tf(r.c4)};
    if (row.reference) {
      const auto& ref = *row.reference;
      line.insert(line.end(), {format_fixed(ref.c1, 1), tf(ref.c2), tf(ref.c3), tf(ref.c4), join(discrepancies(row), ";")});
    } else {
      line.insert(line.end(), {"", "", "", "", ""});
    }
    out.push_back(std::move(line));
  }
  twin::write_csv(path,
                  {"community", "c1", "c2", "c3", "c4", "reference_c1", "reference_c2", "reference_c3", "reference_c4",
                   "discrepancies"},
                  out);
}

void ScreeningReport::write_vote_log(const std::filesystem::path& path) const {
  std::vector<std::string> items;
  for (const auto& row : rows) {
    for (const auto& [id, vote] : row.result.votes) {
      if (std::find(items.begin(), items.end(), id) == items.end()) items.push_back(id);
    }
  }
  std::sort(items.begin(), items.end(), natural_less);
  std::vector<std::string> header{"item"};
  for (const auto& row : rows) header.push_back(row.result.community);
  std::vector<std::vector<std::string>> out;
  for (const auto& id : items) {
    std::vector<std::string> line{id};
    for (const auto& row : rows) {
      auto it = row.result.votes.find(id);
      line.push_back(it == row.result.votes.end() ? "" : it->second);
    }
    out.push_back(std::move(line));
  }
  twin::write_csv(path, header, out);
}

std::map<std::string, ReferenceRow> parse_reference_rows(const Json& j) {
  std::map<std::string, ReferenceRow> out;
  try {
    for (const auto& [community, v] : j.items()) {
      out[community] = ReferenceRow{v.at("c1").get<double>(), v.at("c2").get<bool>(), v.at("c3").get<bool>(),
                                    v.at("c4").get<bool>()};
    }
  } catch (const Json::exception& e) {
    throw UserError(std::string("malformed screening reference: ") + e.what());
  }
  return out;
}

}  // namespace twin
