// SPDX-License-Identifier: Apache-2.0
//
// Alignment metrics between an original community corpus and synthetic
// corpora: lexical overlap, embedding-distribution distance, emotion and
// toxicity distributions, origin classification, human-evaluation sampling
// and inter-annotator agreement.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "twin/corpus.hpp"
#include "twin/demos.hpp"
#include "twin/providers.hpp"

namespace twin {

// ---------------------------------------------------------------------------
// ROUGE-L
// ---------------------------------------------------------------------------

/// Lowercased whitespace tokens.
std::vector<std::string> rouge_tokens(std::string_view text);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// LCS F-measure over lowercased whitespace tokens; 0 when either side is empty.
double rouge_l(std::string_view a, std::string_view b);
double rouge_l_tokens(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Exact maximum ROUGE-L of a text against a fixed reference collection.
/// An inverted token index limits LCS evaluation to references sharing a
/// token, visited in order of an overlap-based upper bound.
class RougeIndex {
 public:
  explicit RougeIndex(const std::vector<std::string>& references);

  struct Match {
    double score = 0.0;
    std::optional<std::size_t> reference;  // none when nothing overlaps
  };

  /// `exclude` skips one reference (used for within-corpus nearest neighbours).
  Match best_match(std::string_view text, std::optional<std::size_t> exclude = std::nullopt) const;
  std::size_t size() const { return refs_.size(); }

 private:
  std::vector<int> intern(const std::vector<std::string>& tokens) const;

  std::unordered_map<std::string, int> vocab_;
  std::vector<std::vector<std::string>> refs_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> postings_;  // token -> (ref, count)
};

// ---------------------------------------------------------------------------
// Frechet distance between embedding sets
// ---------------------------------------------------------------------------

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased (n - 1)
};

GaussianMoments gaussian_moments(const std::vector<std::vector<double>>& vectors);

/// Squared Frechet distance between the Gaussian summaries of two sets:
/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double frechet_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

// ---------------------------------------------------------------------------
// Emotions and toxicity
// ---------------------------------------------------------------------------

/// Normalized emotion mass over the 11 labels (sums to 1).
struct EmotionProfile {
  std::array<double, kEmotionCount> mass{};
  Json to_json() const;
};

EmotionProfile emotion_profile(const std::vector<EmotionVector>& vectors);
EmotionProfile emotion_profile(const Corpus& corpus, Provider& provider);

/// Jensen-Shannon divergence with base-2 logarithms, in [0, 1].
double js_divergence(const EmotionProfile& p, const EmotionProfile& q);

/// 1 - sqrt(JSD): 1 for identical profiles, 0 for disjoint supports.
double emotional_alignment(const EmotionProfile& p, const EmotionProfile& q);

struct ToxicityHistogram {
  double threshold = 0.05;
  std::vector<double> edges;  // bins + 1 edges spanning [threshold, 1]
  std::vector<std::size_t> counts;
  std::vector<double> mass;  // counts / count, all zero when count == 0
  std::size_t count = 0;

  Json to_json() const;
};

/// Equal-width bins on [threshold, 1]; scores below the threshold are dropped.
ToxicityHistogram toxicity_histogram(const std::vector<double>& scores, double threshold = 0.05,
                                     std::size_t bins = 10);
ToxicityHistogram toxicity_distribution(const Corpus& corpus, Provider& provider, double threshold = 0.05,
                                        std::size_t bins = 10);

// ---------------------------------------------------------------------------
// Origin classification
// ---------------------------------------------------------------------------

struct LabeledText {
  std::string text;
  std::string label;
};

/// Multinomial bag-of-words likelihood classifier with add-one smoothing.
class NaiveBayesClassifier {
 public:
  void train(const std::vector<LabeledText>& examples);
  std::string predict(std::string_view text) const;
  const std::vector<std::string>& labels() const { return labels_; }

  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::vector<std::string> labels_;
  std::vector<double> log_prior_;
  std::unordered_map<std::string, std::vector<double>> log_likelihood_;  // token -> per label
};

struct OriginClassifier {
  NaiveBayesClassifier model;
  std::vector<LabeledText> train_set;
  std::vector<LabeledText> holdout_set;
  double holdout_accuracy = 0.0;
};

/// Samples up to `per_community` documents from each corpus, holds out a
/// `holdout` fraction (seeded) and trains the built-in classifier.
OriginClassifier train_origin_classifier(const std::vector<Corpus>& corpora, std::size_t per_community = 3000,
                                         double holdout = 0.05, std::uint64_t seed = 0);

std::vector<std::string> classify_origin(const OriginClassifier& classifier, const std::vector<std::string>& texts);

/// Instruction text for finetuned-model origin classification listing the
/// given community display names.
std::string origin_instruction(const std::vector<std::string>& community_names);

/// Demonstrations for the external classification route: one per sampled
/// training / holdout example of `classifier`.
std::vector<Demonstration> origin_classification_demos(const std::vector<LabeledText>& examples,
                                                       const std::vector<std::string>& community_names);

/// Macro-averaged F1 over the classes appearing in gold or predicted labels.
/// When `known` is non-empty every label must belong to it.
double macro_f1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold,
                const std::vector<std::string>& known = {});
double micro_f1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold);

// ---------------------------------------------------------------------------
// Human evaluation
// ---------------------------------------------------------------------------

/// A blinded CSV sheet plus the key that undoes the blinding.
struct AnnotationSheet {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> key_header;
  std::vector<std::vector<std::string>> key_rows;
  std::vector<std::string> warnings;

  void write(const std::filesystem::path& sheet, const std::filesystem::path& key) const;
};

/// Per community, topic-matched (context, finetuned) pairs in random
/// left/right order. Corpora are matched by community name.
AnnotationSheet sample_triplets(const std::vector<Corpus>& context, const std::vector<Corpus>& finetuned,
                                std::size_t per_community = 50, std::uint64_t seed = 0);

struct Triplet {
  std::string community;
  std::string topic;
  std::string context_text;
  std::string finetuned_text;
};

/// Applies the key to the sheet.
std::vector<Triplet> unblind_triplets(const AnnotationSheet& sheet);

/// Per community, `per_source` posts from each of original, context and
/// finetuned corpora, shuffled together with the source hidden.
AnnotationSheet sample_harm_batch(const std::vector<Corpus>& original, const std::vector<Corpus>& context,
                                  const std::vector<Corpus>& finetuned, std::size_t per_source = 20,
                                  std::uint64_t seed = 0);

/// Cohen's kappa for two labelers. Throws UserError on length mismatch,
/// empty input, or chance agreement of 1.
double cohens_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// (community, source, category) -> count of items both annotators put in
/// the same category; `none_label` marks "not harmful".
std::map<std::tuple<std::string, std::string, std::string>, std::size_t> harm_category_counts(
    const AnnotationSheet& batch, const std::vector<std::string>& annotator_a,
    const std::vector<std::string>& annotator_b, const std::string& none_label = "none");

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct CommunityAlignment {
  std::string community;
  double fid_context = 0;
  double fid_finetuned = 0;
  double emotion_alignment_context = 0;
  double emotion_alignment_finetuned = 0;
  ToxicityHistogram toxicity_original;
  ToxicityHistogram toxicity_context;
  ToxicityHistogram toxicity_finetuned;
};

struct AlignmentReport {
  std::vector<CommunityAlignment> communities;
  double holdout_accuracy = 0;
  double macro_f1_finetuned = 0;
  double macro_f1_context = 0;
  double micro_f1_finetuned = 0;
  double micro_f1_context = 0;

  Json to_json() const;
};

}  // namespace twin
