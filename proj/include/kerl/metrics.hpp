#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kerl/kg_store.hpp"

namespace kerl::metrics {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Retrieval

struct RetrievalScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double ap = 0.0;
};

enum class ApNormalization {
  Truth,  // divide by |Y|: missed relevants lower AP
  Found,  // divide by |M|, the relevants present in the ranking
};

/// Set semantics over normalized titles. `truth` must be nonempty.
/// Fills precision, recall and f1; ap is left at 0.
RetrievalScore retrieval_scores(const std::vector<std::string>& truth,
                                const std::vector<std::string>& predicted);

double average_precision(const std::vector<std::string>& truth,
                         const std::vector<std::string>& ranked,
                         ApNormalization norm = ApNormalization::Truth);

double mean_ap(std::span<const double> aps);

// ---------------------------------------------------------------------------
// Text generation

using Tokens = std::vector<std::string>;

/// Case-folds, detaches ASCII punctuation into separate tokens and splits on
/// whitespace.
Tokens tokenize(std::string_view text);

double bleu(const Tokens& candidate, const Tokens& reference, int max_n);

double rouge_n(const Tokens& candidate, const std::vector<Tokens>& references, int n);

/// LCS-based F-measure, best over references.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references,
               double beta = 1.2);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  bool exhaustive = true;  // false if the search hit its node budget
};

/// Exact-match unigram alignment with the most matches and, among those, the
/// fewest chunks.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference,
                             std::size_t node_budget = 200000);

double meteor(const Tokens& candidate, const Tokens& reference);

/// TF-IDF n-gram consensus. Each item's reference set counts as one document
/// for document frequencies.
class CiderScorer {
 public:
  CiderScorer(const std::vector<std::vector<Tokens>>& references, int max_n = 4);

  /// Score of `candidate` against the references of item `item`.
  double score(const Tokens& candidate, std::size_t item) const;

  std::size_t documents() const { return references_.size(); }

 private:
  using Vector = std::map<std::vector<std::string>, double>;
  Vector weights(const Tokens& tokens, int n) const;

  std::vector<std::vector<Tokens>> references_;
  int max_n_;
  std::map<std::vector<std::string>, std::size_t> df_;
};

std::vector<double> cider(const std::vector<Tokens>& candidates,
                          const std::vector<std::vector<Tokens>>& references, int max_n = 4);

/// exp of the negative mean log-probability.
double perplexity(std::span<const double> token_logprobs);

struct TextScore {
  std::map<int, double> bleu;
  std::map<int, double> rouge_n;
  double rouge_l = 0.0;
  double meteor = 0.0;
  double cider = 0.0;
  std::optional<double> perplexity;
};

// ---------------------------------------------------------------------------
// Nutrition

struct NutrientParse {
  kg::NutrientMap values;
  std::optional<std::pair<std::size_t, std::size_t>> source_span;  // [begin, end)
  std::vector<std::string> diagnostics;
};

/// Extracts the first balanced JSON object from free text.
NutrientParse parse_nutrients(std::string_view text);

/// Linear interpolation between closest ranks; p in [0, 100].
double percentile(std::vector<double> values, double p);

struct MaeResult {
  std::map<std::string, double> mae;
  std::map<std::string, std::size_t> samples;
  std::vector<std::string> diagnostics;
};

using NutrientPair = std::pair<kg::NutrientMap, kg::NutrientMap>;  // (truth, predicted)

/// Per nutrient, mean |truth - predicted| over samples carrying it on both
/// sides. With `percentile_p`, samples whose truth exceeds that percentile of
/// the nutrient's truth values are dropped first.
MaeResult nutrient_mae(const std::vector<NutrientPair>& pairs,
                       std::optional<double> percentile_p = std::nullopt);

// ---------------------------------------------------------------------------
// Reports

struct ItemScore {
  std::string id;
  std::string tag;
  RetrievalScore score;
};

struct Aggregate {
  std::size_t items = 0;
  double map = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<ItemScore> per_item;
  Aggregate aggregates;
  std::map<std::string, Aggregate> per_tag;
  std::size_t failures = 0;
};

Aggregate aggregate(std::span<const ItemScore> items);

EvalReport build_report(std::vector<ItemScore> items, std::size_t failures);

std::string report_to_json(const EvalReport& report);

/// One row per tag plus an "all" row: tag,items,mAP,P,R,F1.
std::string report_to_csv(const EvalReport& report);

}  // namespace kerl::metrics
