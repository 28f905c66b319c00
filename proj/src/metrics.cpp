// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "twin/eval.hpp"

namespace twin {

// ---------------------------------------------------------------------------
// Emotions
// ---------------------------------------------------------------------------

Json EmotionProfile::to_json() const {
  Json j = Json::object();
  for (std::size_t e = 0; e < kEmotionCount; ++e) j[kEmotionLabels[e]] = mass[e];
  return j;
}

EmotionProfile emotion_profile(const std::vector<EmotionVector>& vectors) {
  if (vectors.empty()) throw UserError("emotion profile of an empty corpus");
  EmotionProfile p;
  for (const auto& v : vectors) {
    for (std::size_t e = 0; e < kEmotionCount; ++e) p.mass[e] += v[e];
  }
  double total = 0;
  for (double x : p.mass) total += x;
  if (!(total > 0)) throw UserError("degenerate emotion mass");
  for (double& x : p.mass) x /= total;
  return p;
}

EmotionProfile emotion_profile(const Corpus& corpus, Provider& provider) {
  if (corpus.empty()) throw UserError("emotion profile of an empty corpus");
  return emotion_profile(provider.emotions(corpus.texts()));
}

namespace {

// p * log2(p / m) with the 0 log 0 = 0 convention.
double kl_term(double p, double m) { return p > 0 ? p * std::log2(p / m) : 0.0; }

}  // namespace

double js_divergence(const EmotionProfile& p, const EmotionProfile& q) {
  double d = 0;
  for (std::size_t e = 0; e < kEmotionCount; ++e) {
    const double m = 0.5 * (p.mass[e] + q.mass[e]);
    if (m <= 0) continue;
    // Summed in a fixed order of the two symmetric terms so swapping p and q
    // gives bit-identical results.
    const double tp = kl_term(p.mass[e], m);
    const double tq = kl_term(q.mass[e], m);
    d += 0.5 * (std::min(tp, tq) + std::max(tp, tq));
  }
  return std::clamp(d, 0.0, 1.0);
}

double emotional_alignment(const EmotionProfile& p, const EmotionProfile& q) {
  return 1.0 - std::sqrt(js_divergence(p, q));
}

// ---------------------------------------------------------------------------
// Toxicity
// ---------------------------------------------------------------------------

Json ToxicityHistogram::to_json() const {
  return Json{{"threshold", threshold}, {"edges", edges}, {"counts", counts}, {"mass", mass}, {"count", count}};
}

ToxicityHistogram toxicity_histogram(const std::vector<double>& scores, double threshold, std::size_t bins) {
  if (bins == 0) throw UserError("toxicity histogram needs at least one bin");
  if (!(threshold >= 0 && threshold < 1)) throw UserError("toxicity threshold must be in [0, 1)");
  ToxicityHistogram h;
  h.threshold = threshold;
  h.counts.assign(bins, 0);
  h.mass.assign(bins, 0.0);
  const double width = (1.0 - threshold) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(threshold + width * static_cast<double>(b));
  h.edges.back() = 1.0;
  for (double s : scores) {
    if (!(s >= threshold)) continue;
    auto b = static_cast<std::size_t>((s - threshold) / width);
    b = std::min(b, bins - 1);
    ++h.counts[b];
    ++h.count;
  }
  if (h.count > 0) {
    for (std::size_t b = 0; b < bins; ++b) h.mass[b] = static_cast<double>(h.counts[b]) / static_cast<double>(h.count);
  }
  return h;
}

ToxicityHistogram toxicity_distribution(const Corpus& corpus, Provider& provider, double threshold, std::size_t bins) {
  if (corpus.empty()) throw UserError("toxicity distribution of an empty corpus");
  return toxicity_histogram(provider.toxicity(corpus.texts()), threshold, bins);
}

// ---------------------------------------------------------------------------
// F1 and agreement
// ---------------------------------------------------------------------------

double macro_f1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold,
                const std::vector<std::string>& known) {
  if (predicted.size() != gold.size()) throw UserError("macro_f1: predicted and gold differ in length");
  if (gold.empty()) throw UserError("macro_f1: empty input");
  if (!known.empty()) {
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto* list : {&predicted, &gold}) {
      for (const auto& l : *list) {
        if (!allowed.count(l)) throw UserError("macro_f1: label '" + l + "' outside the known set");
      }
    }
  }
  std::map<std::string, std::array<std::size_t, 3>> stats;  // tp, fp, fn
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] == gold[i]) {
      ++stats[gold[i]][0];
    } else {
      ++stats[predicted[i]][1];
      ++stats[gold[i]][2];
    }
  }
  double sum = 0;
  for (const auto& [label, s] : stats) {
    const double denom = static_cast<double>(2 * s[0] + s[1] + s[2]);
    sum += denom > 0 ? 2.0 * static_cast<double>(s[0]) / denom : 0.0;
  }
  return sum / static_cast<double>(stats.size());
}

double micro_f1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
  if (predicted.size() != gold.size()) throw UserError("micro_f1: predicted and gold differ in length");
  if (gold.empty()) throw UserError("micro_f1: empty input");
  // Single-label multi-class: micro-F1 equals accuracy.
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double cohens_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) throw UserError("cohens_kappa: label lists differ in length");
  if (a.empty()) throw UserError("cohens_kappa: empty label lists");
  const double n = static_cast<double>(a.size());
  std::map<std::string, double> marg_a, marg_b;
  double agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    marg_a[a[i]] += 1;
    marg_b[b[i]] += 1;
    agree += a[i] == b[i];
  }
  const double p_o = agree / n;
  double p_e = 0;
  for (const auto& [label, count] : marg_a) {
    auto it = marg_b.find(label);
    if (it != marg_b.end()) p_e += (count / n) * (it->second / n);
  }
  if (std::abs(1.0 - p_e) < 1e-12) throw UserError("cohens_kappa undefined: chance agreement is 1");
  return (p_o - p_e) / (1.0 - p_e);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

Json AlignmentReport::to_json() const {
  Json rows = Json::array();
  for (const auto& c : communities) {
    rows.push_back(Json{{"community", c.community},
                        {"fid_context", c.fid_context},
                        {"fid_finetuned", c.fid_finetuned},
                        {"emotion_alignment_context", c.emotion_alignment_context},
                        {"emotion_alignment_finetuned", c.emotion_alignment_finetuned},
                        {"toxicity_original", c.toxicity_original.to_json()},
                        {"toxicity_context", c.toxicity_context.to_json()},
                        {"toxicity_finetuned", c.toxicity_finetuned.to_json()}});
  }
  return Json{{"communities", rows},
              {"origin_classification",
               {{"holdout_accuracy", holdout_accuracy},
                {"macro_f1_finetuned", macro_f1_finetuned},
                {"macro_f1_context", macro_f1_context},
                {"micro_f1_finetuned", micro_f1_finetuned},
                {"micro_f1_context", micro_f1_context}}}};
}

}  // namespace twin
