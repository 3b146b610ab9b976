#pragma once

// JSON (de)serialization shared by the CLI and the HTTP service.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kerl/benchgen.hpp"
#include "kerl/constraints.hpp"
#include "kerl/pipeline.hpp"

namespace kerl::json_io {

using nlohmann::json;

json to_json(const constraints::ConstraintQuery& q);

/// Accepts {tag, includes[], excludes[], nutrient_constraints[]} where each
/// constraint is {nutrient, kind, value, inclusive?} or {nutrient, kind:"range",
/// lo, hi}. Names are canonicalized; throws constraints::InvalidQuery.
constraints::ConstraintQuery query_from_json(const json& j);

json to_json(const benchgen::BenchmarkItem& item);
benchgen::BenchmarkItem item_from_json(const json& j);

json to_json(const benchgen::TrainingExample& ex);
json to_json(const benchgen::PromptPair& p);
benchgen::PromptPair prompt_from_json(const json& j);
json to_json(const benchgen::DatasetStats& st);
json to_json(const pipeline::RecommendationResult& r);
json to_json(const kg::Recipe& r);

/// One compact JSON document per line.
void write_jsonl(std::ostream& out, const std::vector<json>& rows);
std::vector<json> read_jsonl(std::istream& in);

std::vector<benchgen::BenchmarkItem> read_items(const std::string& path);
void write_items(const std::string& path, const std::vector<benchgen::BenchmarkItem>& items);

/// Writes train/val/test JSONL files and stats.json (last) into `dir`.
void write_dataset(const std::string& dir, const benchgen::Dataset& ds);

}  // namespace kerl::json_io
