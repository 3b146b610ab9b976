#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kerl/constraints.hpp"
#include "kerl/kg_store.hpp"
#include "kerl/rng.hpp"

namespace kerl::benchgen {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CountRange {
  int lo = 1;
  int hi = 1;
};

/// The 15 dietary tags used by the KGQA benchmark.
std::vector<std::string> default_tags();

/// Nutrients eligible for sampled constraints.
std::vector<std::string> default_nutrients();

struct GenConfig {
  std::uint64_t seed = 7;
  std::vector<std::string> tags = default_tags();
  int n_questions_per_tag = 20;
  CountRange include_count{1, 5};
  CountRange exclude_count{1, 3};
  CountRange nutrient_constraint_count{1, 2};
  int k_train = 20;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  int max_resample_attempts = 50;
  std::vector<std::string> nutrients = default_nutrients();

  /// Throws GenerationError on an inconsistent configuration.
  void validate() const;
};

struct BenchmarkItem {
  std::string id;
  std::string tag;
  std::string question;
  std::string template_id;
  constraints::ConstraintQuery query;
  std::vector<std::string> answers;  // R+ titles, tag order
  std::size_t context_size = 0;      // |R(t)|

  friend bool operator==(const BenchmarkItem&, const BenchmarkItem&) = default;
};

struct Preferences {
  std::vector<std::string> includes;
  std::vector<std::string> excludes;
};

/// Disjoint include/exclude sets drawn without replacement from I(t).
Preferences sample_preferences(const kg::KnowledgeGraph& kg, const std::string& tag, Rng& rng,
                               const GenConfig& cfg);

/// Threshold drawn uniformly from [max(0, mu - 2 sigma), mu + 2 sigma]; filter
/// kind chosen uniformly; range anchored at 0 or at the tag maximum by a coin.
constraints::NutrientConstraint sample_nutrient_constraint(const std::string& nutrient,
                                                           const kg::NutrientStats& stats,
                                                           Rng& rng);

BenchmarkItem generate_kgqa_item(const kg::KnowledgeGraph& kg, const std::string& tag,
                                 const constraints::TemplateCatalog& catalog, Rng& rng,
                                 const GenConfig& cfg);

struct SummaryStat {
  std::size_t min = 0;
  std::size_t max = 0;
  double avg = 0.0;
};

struct DatasetStats {
  std::size_t questions = 0;
  std::map<std::string, std::size_t> questions_per_tag;
  std::array<std::size_t, 3> split_sizes{0, 0, 0};
  SummaryStat context_size;  // |R(t)| over items
  SummaryStat positives;     // |R+| over items
};

struct Dataset {
  std::vector<BenchmarkItem> train;
  std::vector<BenchmarkItem> val;
  std::vector<BenchmarkItem> test;
  DatasetStats stats;
};

/// Split label for each of `n` items laid out tag by tag. Every prefix of the
/// label sequence has split counts within 1 of the configured fractions.
std::vector<int> assign_splits(std::size_t n, const std::array<double, 3>& fractions);

Dataset generate_dataset(const kg::KnowledgeGraph& kg,
                         const constraints::TemplateCatalog& catalog, const GenConfig& cfg);

DatasetStats compute_stats(const Dataset& ds);

// ---------------------------------------------------------------------------
// Fine-tuning context

struct TrainingExample {
  std::string question;
  std::vector<std::string> context_lines;
  std::vector<std::string> answer_titles;  // in context order
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Draws at most K/2 positives and at most K/2 negatives, shuffled together.
TrainingExample sample_training_context(const BenchmarkItem& item, const kg::KnowledgeGraph& kg,
                                        const GenConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Prompt datasets

enum class PromptTask { RecipeGen, NutriGen };

std::string_view to_string(PromptTask t);

struct PromptPair {
  PromptTask task = PromptTask::NutriGen;
  std::string prompt;
  std::string target;
  std::vector<std::string> inputs_used;  // subset of {title, ingredients, instructions}
};

/// Prompt templates use <name>, <ingredients> and <instructions>.
std::vector<std::string> load_prompt_templates(const std::string& path);

/// Canonical nutrient JSON: lexicographic keys, shortest round-trip numbers.
std::string nutrients_to_json(const kg::NutrientMap& nutrition);

/// One pair per selected template (`per_recipe` distinct templates drawn at
/// random). Templates needing an input the recipe lacks are skipped and
/// reported through `diagnostics`.
std::vector<PromptPair> generate_nutri_prompts(const kg::Recipe& recipe,
                                               const std::vector<std::string>& templates,
                                               Rng& rng, std::size_t per_recipe = 1,
                                               std::vector<std::string>* diagnostics = nullptr);

std::vector<PromptPair> generate_recipe_prompts(const kg::Recipe& recipe,
                                                const std::vector<std::string>& templates,
                                                Rng& rng, std::size_t per_recipe = 1,
                                                std::vector<std::string>* diagnostics = nullptr);

}  // namespace kerl::benchgen
