#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kerl::kg {

/// Nutrient name -> value, lexicographically ordered by canonical name.
using NutrientMap = std::map<std::string, double>;

struct Recipe {
  std::string id;
  std::string title;
  std::vector<std::string> ingredients;
  std::vector<std::string> instructions;
  NutrientMap nutrition;
  std::set<std::string> tags;

  friend bool operator==(const Recipe&, const Recipe&) = default;
};

/// Recipes are referenced by pointer into the owning graph.
using RecipeList = std::vector<const Recipe*>;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by nutrient_stats when no recipe of the tag carries the nutrient.
class NoDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NutrientStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double max = 0.0;
  std::size_t count = 0;
};

/// Validates and canonicalizes a recipe in place: whitespace-normalized
/// title, canonical ingredient and tag names, canonical nutrient keys.
/// Throws GraphError naming the violated invariant.
void canonicalize(Recipe& r);

/// Immutable, indexed recipe graph. Safe to share across threads.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Builds the graph in ingestion order. Recipes are canonicalized; throws
  /// GraphError on invariant violations or duplicate ids.
  static KnowledgeGraph from_recipes(std::vector<Recipe> recipes);

  std::span<const Recipe> recipes() const { return recipes_; }
  std::size_t size() const { return recipes_.size(); }
  bool empty() const { return recipes_.empty(); }

  const Recipe* find(std::string_view id) const;

  /// tag -> recipe positions (ingestion order).
  const std::map<std::string, std::vector<std::size_t>, std::less<>>& tag_index() const {
    return tag_index_;
  }
  /// ingredient -> recipe ids.
  const std::map<std::string, std::set<std::string>, std::less<>>& ingredient_index() const {
    return ingredient_index_;
  }
  const std::set<std::string>& nutrient_names() const { return nutrient_names_; }

  std::vector<std::string> tags() const;

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.recipes_ == b.recipes_;
  }

 private:
  std::vector<Recipe> recipes_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> tag_index_;
  std::map<std::string, std::set<std::string>, std::less<>> ingredient_index_;
  std::set<std::string> nutrient_names_;
};

RecipeList recipes_with_tag(const KnowledgeGraph& kg, std::string_view tag);

/// Union of ingredients over the tag's recipes (lexicographic).
std::set<std::string> ingredient_vocabulary(const KnowledgeGraph& kg,
                                            std::string_view tag);

NutrientStats nutrient_stats(const KnowledgeGraph& kg, std::string_view tag,
                             std::string_view nutrient);

// ---------------------------------------------------------------------------
// Ingestion

enum class CorpusFormat { Jsonl, Triples };

struct IngestDiagnostic {
  std::size_t line = 0;
  std::string reason;
};

class IngestError : public std::runtime_error {
 public:
  IngestError(std::string what, std::vector<IngestDiagnostic> diagnostics)
      : std::runtime_error(std::move(what)), diagnostics_(std::move(diagnostics)) {}
  const std::vector<IngestDiagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<IngestDiagnostic> diagnostics_;
};

struct IngestOptions {
  /// Skip invalid records (reported in IngestResult::rejected) instead of
  /// failing the whole ingest.
  bool skip_invalid = false;
};

struct IngestResult {
  KnowledgeGraph graph;
  std::vector<IngestDiagnostic> rejected;
};

IngestResult ingest_corpus(std::istream& in, CorpusFormat format,
                           const IngestOptions& options = {});
IngestResult ingest_file(const std::string& path, CorpusFormat format,
                         const IngestOptions& options = {});

/// Parses one JSONL corpus record. Throws GraphError with the reason.
Recipe recipe_from_json(std::string_view line);
std::string recipe_to_json(const Recipe& r);

// ---------------------------------------------------------------------------
// Triples

struct Term {
  enum class Kind { Identifier, String, Number };
  Kind kind = Kind::Identifier;
  std::string text;     // Identifier / String
  double number = 0.0;  // Number

  static Term identifier(std::string s) { return {Kind::Identifier, std::move(s), 0.0}; }
  static Term string(std::string s) { return {Kind::String, std::move(s), 0.0}; }
  static Term numeric(double v) { return {Kind::Number, {}, v}; }

  bool is_number() const { return kind == Kind::Number; }

  friend bool operator==(const Term& a, const Term& b) {
    if (a.kind != b.kind) return false;
    return a.kind == Kind::Number ? a.number == b.number : a.text == b.text;
  }
  friend bool operator<(const Term& a, const Term& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.kind == Kind::Number ? a.number < b.number : a.text < b.text;
  }
};

/// Human-readable form: identifiers bare, strings JSON-quoted, numbers shortest.
std::string to_string(const Term& t);

struct Triple {
  std::string subject;
  std::string predicate;
  Term object;

  friend bool operator==(const Triple&, const Triple&) = default;
};

namespace predicate {
inline constexpr std::string_view kName = "name";
inline constexpr std::string_view kTagged = "tagged";
inline constexpr std::string_view kHasIngredient = "hasIngredient";
inline constexpr std::string_view kHasInstruction = "hasInstruction";
}  // namespace predicate

/// Per recipe: name, tagged*, hasIngredient*, hasInstruction*, nutrient*.
std::vector<Triple> to_triples(const KnowledgeGraph& kg);
KnowledgeGraph from_triples(std::span<const Triple> triples);

/// One triple per line, tab-separated; string literals quoted, numbers bare.
void write_triples(std::ostream& out, std::span<const Triple> triples);
std::vector<Triple> read_triples(std::istream& in);

// ---------------------------------------------------------------------------
// Context serialization

/// `name: <title> | ingredients: <a, b> | nutrition: <k=v; ...> | tags: <t, u>`
std::string serialize_recipe_context(const Recipe& r);

struct ContextFields {
  std::string title;
  std::vector<std::string> ingredients;
  NutrientMap nutrition;
  std::set<std::string> tags;

  friend bool operator==(const ContextFields&, const ContextFields&) = default;
};

/// Inverse of serialize_recipe_context. Throws GraphError on malformed lines.
ContextFields parse_recipe_context(std::string_view line);

}  // namespace kerl::kg
