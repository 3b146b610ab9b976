#pragma once

#include <set>
#include <string>

#include "kerl/constraints.hpp"
#include "kerl/kg_store.hpp"
#include "kerl/rng.hpp"
#include "kerl/squeal.hpp"

namespace fixtures {

std::string data_path(const std::string& name);
std::string fixture_path(const std::string& name);

/// Loaded once per process.
const kerl::kg::KnowledgeGraph& sample_graph();
const kerl::kg::KnowledgeGraph& preference_graph();
const kerl::constraints::TemplateCatalog& kgqa_catalog();

/// Low-protein query whose answers in the preference corpus are the three
/// praline/banana recipes.
kerl::constraints::ConstraintQuery banana_bread_query();

/// Valid query over the graph's tags, ingredients and nutrients, with
/// awkward numbers (tiny, huge, many digits, integral) mixed in.
kerl::constraints::ConstraintQuery random_query(const kerl::kg::KnowledgeGraph& kg, kerl::Rng& rng,
                                                bool allow_empty_lists = false);

/// R+ ids computed through the query engine: one tagged_with_nutrient_filter
/// query per bound, intersected, then include/exclude checked per recipe.
std::set<std::string> squeal_path_truth(const kerl::kg::KnowledgeGraph& kg,
                                        const kerl::squeal::TripleStore& store,
                                        const kerl::constraints::ConstraintQuery& q);

/// A unique scratch directory under the build tree.
std::string scratch_dir(const std::string& name);

}  // namespace fixtures
