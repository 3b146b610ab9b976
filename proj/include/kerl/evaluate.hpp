#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kerl/benchgen.hpp"
#include "kerl/metrics.hpp"
#include "kerl/pipeline.hpp"

namespace kerl::evaluate {

struct KgqaOptions {
  pipeline::RecommendConfig recommend;
  metrics::ApNormalization ap_norm = metrics::ApNormalization::Truth;
};

/// Runs every item through the recommender and scores it. Items whose
/// question cannot be answered at all count as failures.
metrics::EvalReport evaluate_kgqa(const std::vector<benchgen::BenchmarkItem>& items,
                                  const pipeline::Recommender& recommender,
                                  pipeline::Backend& backend, const KgqaOptions& options);

/// Model outputs for prompt datasets, one per prompt, in prompt order.
struct Predictions {
  std::vector<std::string> texts;
  std::vector<std::optional<std::vector<double>>> logprobs;
};

Predictions query_backend(const std::vector<benchgen::PromptPair>& prompts,
                          pipeline::Backend& backend, int max_attempts = 3);

/// JSONL with {text, logprobs?} per line.
Predictions read_predictions(const std::string& path);

struct NutriReport {
  metrics::MaeResult mae;
  std::optional<metrics::MaeResult> mae_filtered;
  std::optional<double> percentile;
  std::size_t items = 0;
  std::size_t unparsed = 0;  // outputs without a JSON object
};

NutriReport evaluate_nutri(const std::vector<benchgen::PromptPair>& prompts,
                           const Predictions& predictions, std::optional<double> percentile);

struct RecipeReport {
  std::vector<metrics::TextScore> per_item;
  metrics::TextScore mean;
};

RecipeReport evaluate_recipe(const std::vector<benchgen::PromptPair>& prompts,
                             const Predictions& predictions);

std::string to_json(const NutriReport& r);
std::string to_json(const RecipeReport& r);

}  // namespace kerl::evaluate
