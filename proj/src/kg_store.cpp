#include "kerl/kg_store.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "kerl/text.hpp"

namespace kerl::kg {

using nlohmann::json;

namespace {

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto head = static_cast<unsigned char>(s.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  for (unsigned char c : s) {
    if (!(std::isalnum(c) || c == '_' || c == '-' || c == ':')) return false;
  }
  return true;
}

bool is_reserved_predicate(std::string_view s) {
  return s == predicate::kName || s == predicate::kTagged ||
         s == predicate::kHasIngredient || s == predicate::kHasInstruction;
}

// Names listed in a context line must not contain its separators.
void check_list_name(std::string_view what, const std::string& name) {
  if (name.empty()) throw GraphError(std::string(what) + " name is empty");
  if (name.find_first_of(",|") != std::string::npos) {
    throw GraphError(std::string(what) + " '" + name +
                     "' contains a reserved separator (',' or '|')");
  }
}

}  // namespace

void canonicalize(Recipe& r) {
  if (!is_identifier(r.id)) {
    throw GraphError("invalid recipe id '" + r.id + "'");
  }
  r.title = text::normalize_space(r.title);
  if (r.title.empty()) throw GraphError("title is empty");
  if (r.title.find('|') != std::string::npos) {
    throw GraphError("title contains '|'");
  }

  std::vector<std::string> ingredients;
  std::set<std::string> seen;
  for (const auto& raw : r.ingredients) {
    auto name = text::canonical_name(raw);
    check_list_name("ingredient", name);
    if (seen.insert(name).second) ingredients.push_back(std::move(name));
  }
  if (ingredients.empty()) throw GraphError("ingredient list is empty");
  r.ingredients = std::move(ingredients);

  NutrientMap nutrition;
  for (const auto& [raw, value] : r.nutrition) {
    auto name = text::canonical_nutrient(raw);
    if (!is_identifier(name) || is_reserved_predicate(name)) {
      throw GraphError("invalid nutrient name '" + raw + "'");
    }
    if (!std::isfinite(value) || value < 0.0) {
      throw GraphError("nutrient '" + name + "' has invalid value " +
                       std::to_string(value));
    }
    if (!nutrition.emplace(name, value).second) {
      throw GraphError("duplicate nutrient '" + name + "'");
    }
  }
  r.nutrition = std::move(nutrition);

  std::set<std::string> tags;
  for (const auto& raw : r.tags) {
    auto tag = text::canonical_name(raw);
    check_list_name("tag", tag);
    tags.insert(std::move(tag));
  }
  if (tags.empty()) throw GraphError("tag set is empty");
  r.tags = std::move(tags);
}

KnowledgeGraph KnowledgeGraph::from_recipes(std::vector<Recipe> recipes) {
  KnowledgeGraph kg;
  kg.recipes_ = std::move(recipes);
  for (std::size_t i = 0; i < kg.recipes_.size(); ++i) {
    Recipe& r = kg.recipes_[i];
    canonicalize(r);
    if (!kg.by_id_.emplace(r.id, i).second) {
      throw GraphError("duplicate recipe id '" + r.id + "'");
    }
    for (const auto& tag : r.tags) kg.tag_index_[tag].push_back(i);
    for (const auto& ing : r.ingredients) kg.ingredient_index_[ing].insert(r.id);
    for (const auto& [name, _] : r.nutrition) kg.nutrient_names_.insert(name);
  }
  return kg;
}

const Recipe* KnowledgeGraph::find(std::string_view id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &recipes_[it->second];
}

std::vector<std::string> KnowledgeGraph::tags() const {
  std::vector<std::string> out;
  out.reserve(tag_index_.size());
  for (const auto& [tag, _] : tag_index_) out.push_back(tag);
  return out;
}

RecipeList recipes_with_tag(const KnowledgeGraph& kg, std::string_view tag) {
  RecipeList out;
  auto it = kg.tag_index().find(text::canonical_name(tag));
  if (it == kg.tag_index().end()) return out;
  out.reserve(it->second.size());
  for (auto pos : it->second) out.push_back(&kg.recipes()[pos]);
  return out;
}

std::set<std::string> ingredient_vocabulary(const KnowledgeGraph& kg,
                                            std::string_view tag) {
  std::set<std::string> out;
  for (const Recipe* r : recipes_with_tag(kg, tag)) {
    out.insert(r->ingredients.begin(), r->ingredients.end());
  }
  return out;
}

NutrientStats nutrient_stats(const KnowledgeGraph& kg, std::string_view tag,
                             std::string_view nutrient) {
  const auto key = text::canonical_nutrient(nutrient);
  // Welford's running mean / M2.
  NutrientStats stats;
  double m2 = 0.0;
  for (const Recipe* r : recipes_with_tag(kg, tag)) {
    auto it = r->nutrition.find(key);
    if (it == r->nutrition.end()) continue;
    const double x = it->second;
    ++stats.count;
    const double delta = x - stats.mean;
    stats.mean += delta / static_cast<double>(stats.count);
    m2 += delta * (x - stats.mean);
    stats.max = stats.count == 1 ? x : std::max(stats.max, x);
  }
  if (stats.count == 0) {
    throw NoDataError("no data for nutrient '" + key + "' under tag '" +
                      std::string(tag) + "'");
  }
  stats.stddev = std::sqrt(std::max(0.0, m2 / static_cast<double>(stats.count)));
  return stats;
}

// ---------------------------------------------------------------------------
// JSONL

Recipe recipe_from_json(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw GraphError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw GraphError("record is not a JSON object");

  Recipe r;
  auto string_field = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key)) {
      if (required) throw GraphError(std::string("missing field '") + key + "'");
      return {};
    }
    if (!j[key].is_string()) {
      throw GraphError(std::string("field '") + key + "' must be a string");
    }
    return j[key].get<std::string>();
  };
  auto string_list = [&](const char* key, bool required) {
    std::vector<std::string> out;
    if (!j.contains(key)) {
      if (required) throw GraphError(std::string("missing field '") + key + "'");
      return out;
    }
    if (!j[key].is_array()) {
      throw GraphError(std::string("field '") + key + "' must be an array");
    }
    for (const auto& v : j[key]) {
      if (!v.is_string()) {
        throw GraphError(std::string("field '") + key + "' must hold strings");
      }
      out.push_back(v.get<std::string>());
    }
    return out;
  };

  r.id = string_field("id", false);
  r.title = string_field("title", true);
  r.ingredients = string_list("ingredients", true);
  r.instructions = string_list("instructions", false);
  for (auto& t : string_list("tags", true)) r.tags.insert(std::move(t));
  if (j.contains("nutrition")) {
    const auto& n = j["nutrition"];
    if (!n.is_object()) throw GraphError("field 'nutrition' must be an object");
    for (const auto& [name, value] : n.items()) {
      if (value.is_null()) {
        throw GraphError("nutrient '" + name + "' has a missing value");
      }
      if (!value.is_number()) {
        throw GraphError("nutrient '" + name + "' is not numeric");
      }
      const double v = value.get<double>();
      if (v < 0.0) {
        throw GraphError("nutrient '" + name + "' is negative (" +
                         text::format_number(v) + ")");
      }
      r.nutrition[name] = v;
    }
  }
  return r;
}

std::string recipe_to_json(const Recipe& r) {
  // Built by hand so numbers keep their shortest round-trip spelling.
  std::string out = "{\"id\":" + text::quote(r.id) +
                    ",\"title\":" + text::quote(r.title) + ",\"ingredients\":[";
  for (std::size_t i = 0; i < r.ingredients.size(); ++i) {
    if (i) out += ',';
    out += text::quote(r.ingredients[i]);
  }
  out += "],\"instructions\":[";
  for (std::size_t i = 0; i < r.instructions.size(); ++i) {
    if (i) out += ',';
    out += text::quote(r.instructions[i]);
  }
  out += "],\"nutrition\":{";
  bool first = true;
  for (const auto& [name, value] : r.nutrition) {
    if (!first) out += ',';
    first = false;
    out += text::quote(name) + ":" + text::format_number(value);
  }
  out += "},\"tags\":[";
  first = true;
  for (const auto& tag : r.tags) {
    if (!first) out += ',';
    first = false;
    out += text::quote(tag);
  }
  out += "]}";
  return out;
}

namespace {

IngestResult ingest_jsonl(std::istream& in, const IngestOptions& options) {
  IngestResult result;
  std::vector<Recipe> recipes;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::normalize_space(line).empty()) continue;
    try {
      Recipe r = recipe_from_json(line);
      if (r.id.empty()) r.id = "L" + std::to_string(line_no);
      canonicalize(r);
      if (!ids.insert(r.id).second) {
        throw GraphError("duplicate recipe id '" + r.id + "'");
      }
      recipes.push_back(std::move(r));
    } catch (const GraphError& e) {
      result.rejected.push_back({line_no, e.what()});
    }
  }
  if (!result.rejected.empty() && !options.skip_invalid) {
    const auto& first = result.rejected.front();
    throw IngestError("line " + std::to_string(first.line) + ": " + first.reason,
                      std::move(result.rejected));
  }
  if (recipes.empty()) throw IngestError("empty corpus", std::move(result.rejected));
  result.graph = KnowledgeGraph::from_recipes(std::move(recipes));
  return result;
}

IngestResult ingest_triples(std::istream& in) {
  std::vector<Triple> triples = read_triples(in);
  if (triples.empty()) throw IngestError("empty corpus", {});
  IngestResult result;
  try {
    result.graph = from_triples(triples);
  } catch (const GraphError& e) {
    throw IngestError(e.what(), {{0, e.what()}});
  }
  return result;
}

}  // namespace

IngestResult ingest_corpus(std::istream& in, CorpusFormat format,
                           const IngestOptions& options) {
  switch (format) {
    case CorpusFormat::Jsonl:
      return ingest_jsonl(in, options);
    case CorpusFormat::Triples:
      return ingest_triples(in);
  }
  throw IngestError("unknown corpus format", {});
}

IngestResult ingest_file(const std::string& path, CorpusFormat format,
                         const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open corpus '" + path + "'", {});
  return ingest_corpus(in, format, options);
}

// ---------------------------------------------------------------------------
// Triples

std::string to_string(const Term& t) {
  switch (t.kind) {
    case Term::Kind::Identifier:
      return t.text;
    case Term::Kind::String:
      return text::quote(t.text);
    case Term::Kind::Number:
      return text::format_number(t.number);
  }
  return {};
}

std::vector<Triple> to_triples(const KnowledgeGraph& kg) {
  std::vector<Triple> out;
  for (const Recipe& r : kg.recipes()) {
    out.push_back({r.id, std::string(predicate::kName), Term::string(r.title)});
    for (const auto& tag : r.tags) {
      out.push_back({r.id, std::string(predicate::kTagged), Term::string(tag)});
    }
    for (const auto& ing : r.ingredients) {
      out.push_back({r.id, std::string(predicate::kHasIngredient), Term::string(ing)});
    }
    for (const auto& step : r.instructions) {
      out.push_back({r.id, std::string(predicate::kHasInstruction), Term::string(step)});
    }
    for (const auto& [name, value] : r.nutrition) {
      out.push_back({r.id, name, Term::numeric(value)});
    }
  }
  return out;
}

KnowledgeGraph from_triples(std::span<const Triple> triples) {
  std::vector<Recipe> recipes;
  std::map<std::string, std::size_t, std::less<>> pos;
  std::vector<bool> has_name;
  for (const Triple& t : triples) {
    auto [it, inserted] = pos.emplace(t.subject, recipes.size());
    if (inserted) {
      recipes.emplace_back();
      recipes.back().id = t.subject;
      has_name.push_back(false);
    }
    Recipe& r = recipes[it->second];
    const bool is_string = t.object.kind == Term::Kind::String;
    if (t.predicate == predicate::kName) {
      if (!is_string) throw GraphError("name of '" + t.subject + "' is not a string");
      if (has_name[it->second]) throw GraphError("recipe '" + t.subject + "' has two names");
      r.title = t.object.text;
      has_name[it->second] = true;
    } else if (t.predicate == predicate::kTagged) {
      if (!is_string) throw GraphError("tag of '" + t.subject + "' is not a string");
      r.tags.insert(t.object.text);
    } else if (t.predicate == predicate::kHasIngredient) {
      if (!is_string) throw GraphError("ingredient of '" + t.subject + "' is not a string");
      r.ingredients.push_back(t.object.text);
    } else if (t.predicate == predicate::kHasInstruction) {
      if (!is_string) throw GraphError("instruction of '" + t.subject + "' is not a string");
      r.instructions.push_back(t.object.text);
    } else {
      if (!t.object.is_number()) {
        throw GraphError("nutrient '" + t.predicate + "' of '" + t.subject +
                         "' is not numeric");
      }
      if (!r.nutrition.emplace(t.predicate, t.object.number).second) {
        throw GraphError("duplicate nutrient '" + t.predicate + "' on '" + t.subject + "'");
      }
    }
  }
  for (std::size_t i = 0; i < recipes.size(); ++i) {
    if (!has_name[i]) throw GraphError("recipe '" + recipes[i].id + "' has no name");
  }
  return KnowledgeGraph::from_recipes(std::move(recipes));
}

void write_triples(std::ostream& out, std::span<const Triple> triples) {
  for (const Triple& t : triples) {
    out << t.subject << '\t' << t.predicate << '\t' << to_string(t.object) << '\n';
  }
}

std::vector<Triple> read_triples(std::istream& in) {
  std::vector<Triple> out;
  std::vector<IngestDiagnostic> errors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = text::split(line, "\t");
    if (fields.size() != 3) {
      errors.push_back({line_no, "expected 3 tab-separated fields"});
      continue;
    }
    if (fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      errors.push_back({line_no, "empty triple component"});
      continue;
    }
    Term object;
    const std::string& raw = fields[2];
    if (raw.front() == '"') {
      try {
        auto j = json::parse(raw);
        if (!j.is_string()) throw std::runtime_error("not a string");
        object = Term::string(j.get<std::string>());
      } catch (const std::exception&) {
        errors.push_back({line_no, "malformed string literal"});
        continue;
      }
    } else if (auto v = text::parse_number(raw)) {
      object = Term::numeric(*v);
    } else if (is_identifier(raw)) {
      object = Term::identifier(raw);
    } else {
      errors.push_back({line_no, "malformed object term '" + raw + "'"});
      continue;
    }
    out.push_back({fields[0], fields[1], std::move(object)});
  }
  if (!errors.empty()) {
    const auto& first = errors.front();
    throw IngestError("line " + std::to_string(first.line) + ": " + first.reason,
                      std::move(errors));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Context lines

std::string serialize_recipe_context(const Recipe& r) {
  std::string out = "name: " + r.title + " | ingredients: ";
  out += text::join(r.ingredients, ", ");
  out += " | nutrition: ";
  bool first = true;
  for (const auto& [name, value] : r.nutrition) {
    if (!first) out += "; ";
    first = false;
    out += name + "=" + text::format_number(value);
  }
  out += " | tags: ";
  first = true;
  for (const auto& tag : r.tags) {
    if (!first) out += ", ";
    first = false;
    out += tag;
  }
  return out;
}

ContextFields parse_recipe_context(std::string_view line) {
  auto fields = text::split(line, " | ");
  if (fields.size() != 4) {
    throw GraphError("context line must have 4 ' | '-separated fields");
  }
  auto strip = [&](std::string& field, std::string_view prefix) {
    // An empty field serializes as "prefix:" with no trailing space.
    if (text::starts_with(field, prefix)) {
      field.erase(0, prefix.size());
      return;
    }
    auto bare = prefix.substr(0, prefix.size() - 1);
    if (field == bare) {
      field.clear();
      return;
    }
    throw GraphError("context field must start with '" + std::string(prefix) + "'");
  };
  strip(fields[0], "name: ");
  strip(fields[1], "ingredients: ");
  strip(fields[2], "nutrition: ");
  strip(fields[3], "tags: ");

  ContextFields out;
  out.title = fields[0];
  if (!fields[1].empty()) out.ingredients = text::split(fields[1], ", ");
  if (!fields[2].empty()) {
    for (const auto& item : text::split(fields[2], "; ")) {
      auto eq = item.find('=');
      if (eq == std::string::npos) throw GraphError("nutrient entry without '='");
      auto value = text::parse_number(std::string_view(item).substr(eq + 1));
      if (!value) throw GraphError("nutrient value is not numeric: " + item);
      out.nutrition[item.substr(0, eq)] = *value;
    }
  }
  if (!fields[3].empty()) {
    for (auto& tag : text::split(fields[3], ", ")) out.tags.insert(std::move(tag));
  }
  return out;
}

}  // namespace kerl::kg
