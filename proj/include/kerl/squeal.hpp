#pragma once

// A small SPARQL-like query language over the recipe triple view:
// SELECT / WHERE / basic graph patterns / FILTER with numeric comparisons
// joined by && / LIMIT. Identifiers are bare tokens; literals are
// double-quoted strings or decimal numbers.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kerl/kg_store.hpp"

namespace kerl::squeal {

struct Variable {
  std::string name;  // without the leading '?'
  friend bool operator==(const Variable&, const Variable&) = default;
};

/// A pattern position: variable or constant term.
using PatternTerm = std::variant<Variable, kg::Term>;

struct TriplePattern {
  PatternTerm subject;
  PatternTerm predicate;
  PatternTerm object;
  friend bool operator==(const TriplePattern&, const TriplePattern&) = default;
};

enum class CompareOp { Less, LessEqual, Greater, GreaterEqual };

std::string_view to_string(CompareOp op);
std::optional<CompareOp> parse_compare_op(std::string_view s);

struct Comparison {
  Variable var;
  CompareOp op;
  double value;
  friend bool operator==(const Comparison&, const Comparison&) = default;
};

/// One FILTER(...) clause: a conjunction of comparisons.
struct Filter {
  std::vector<Comparison> conjuncts;
  friend bool operator==(const Filter&, const Filter&) = default;
};

struct QueryAst {
  std::vector<std::string> select_vars;
  std::vector<TriplePattern> patterns;
  std::vector<Filter> filters;
  std::optional<std::size_t> limit;
  friend bool operator==(const QueryAst&, const QueryAst&) = default;
};

/// Renders an AST back into query text accepted by parse_query.
std::string to_text(const QueryAst& q);

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::string message, std::size_t offset,
              std::vector<std::string> expected)
      : std::runtime_error(std::move(message)),
        offset_(offset),
        expected_(std::move(expected)) {}
  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

/// Semantic error in a well-formed query (unbound variable, empty pattern).
class QueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a FILTER compares a non-numeric binding.
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

QueryAst parse_query(std::string_view text);

// ---------------------------------------------------------------------------
// Templates

enum class TemplateId { TaggedRecipes, RecipeDetail, TaggedWithNutrientFilter };

std::string_view to_string(TemplateId id);
std::optional<TemplateId> parse_template_id(std::string_view s);

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Placeholders per template:
///   tagged_recipes: tag
///   recipe_detail: id
///   tagged_with_nutrient_filter: tag, nutrient, op, v
/// Throws QueryError naming a missing or invalid placeholder.
std::string instantiate_template(TemplateId id, const Bindings& bindings);

/// Reference AST of a template with bindings substituted (built directly,
/// not through the parser).
QueryAst template_ast(TemplateId id, const Bindings& bindings);

// ---------------------------------------------------------------------------
// Execution

using Row = std::vector<kg::Term>;

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<Row> rows;
};

/// CSV with a header row; string literals unquoted unless they need quoting.
std::string to_csv(const ResultTable& table);

/// Indexed triple view of a graph, built once and shared read-only.
class TripleStore {
 public:
  explicit TripleStore(const kg::KnowledgeGraph& kg);
  explicit TripleStore(std::vector<kg::Triple> triples);

  std::span<const kg::Triple> triples() const { return triples_; }
  const std::vector<std::size_t>* by_subject(std::string_view s) const;
  const std::vector<std::size_t>* by_predicate(std::string_view p) const;

 private:
  void build_index();

  std::vector<kg::Triple> triples_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> subject_index_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> predicate_index_;
};

ResultTable execute(const TripleStore& store, const QueryAst& q);
ResultTable execute(const kg::KnowledgeGraph& kg, const QueryAst& q);

}  // namespace kerl::squeal
