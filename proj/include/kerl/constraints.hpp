#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kerl/kg_store.hpp"

namespace kerl::constraints {

enum class FilterKind { LessThan, AtLeast, Range };

std::string_view to_string(FilterKind k);
std::optional<FilterKind> parse_filter_kind(std::string_view s);

/// Upper bound. `inclusive` distinguishes "no more than" (<=) from
/// "less than" (<).
struct LessThan {
  double value = 0.0;
  bool inclusive = true;
  friend bool operator==(const LessThan&, const LessThan&) = default;
};

/// Lower bound. `inclusive` distinguishes "at least" (>=) from "more than" (>).
struct AtLeast {
  double value = 0.0;
  bool inclusive = true;
  friend bool operator==(const AtLeast&, const AtLeast&) = default;
};

/// Closed interval [lo, hi] with lo < hi.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

using NutrientFilter = std::variant<LessThan, AtLeast, Range>;

struct NutrientConstraint {
  std::string nutrient;  // canonical key, e.g. "salt_per_100g"
  NutrientFilter filter;

  FilterKind kind() const { return static_cast<FilterKind>(filter.index()); }
  bool holds(double value) const;

  friend bool operator==(const NutrientConstraint&, const NutrientConstraint&) = default;
};

struct ConstraintQuery {
  std::string tag;
  std::vector<std::string> includes;
  std::vector<std::string> excludes;
  std::vector<NutrientConstraint> nutrient_constraints;

  friend bool operator==(const ConstraintQuery&, const ConstraintQuery&) = default;
};

class InvalidQuery : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws InvalidQuery if any invariant is violated (empty tag, overlapping
/// include/exclude sets, negative or non-finite values, lo >= hi).
void validate(const NutrientConstraint& c);
void validate(const ConstraintQuery& q);

// ---------------------------------------------------------------------------
// Question templates

struct Phrase {
  std::string text;
  FilterKind kind;
  bool inclusive = true;  // ignored for Range
  friend bool operator==(const Phrase&, const Phrase&) = default;
};

/// A base question with {tag}, {ingredients}, {not_have_ingredients} and
/// {constraints} placeholders. The constraints placeholder expands to
/// `constraint_prefix + <list> + constraint_suffix`, or to nothing when the
/// query has no nutrient constraints.
struct QuestionTemplate {
  std::string id;
  std::string text;
  std::string constraint_prefix;
  std::string constraint_suffix;
  std::vector<Phrase> phrasing;  // ordered; render picks the first match

  /// Throws InvalidQuery on a malformed template.
  void validate() const;
};

/// Default surface phrases for the three filter kinds.
std::vector<Phrase> default_phrasing();

struct TemplateCatalog {
  std::vector<QuestionTemplate> templates;

  const QuestionTemplate* find(std::string_view id) const;
};

TemplateCatalog load_catalog(const std::string& path);
TemplateCatalog parse_catalog(std::string_view json_text);
std::string catalog_to_json(const TemplateCatalog& catalog);

std::string render_constraint(const NutrientConstraint& c,
                              const std::vector<Phrase>& phrasing);
std::string render_question(const ConstraintQuery& q, const QuestionTemplate& tpl);

struct ParseVocabulary {
  std::set<std::string> tags;
  /// Used to re-join ingredient names that contain ", ". May be empty.
  std::set<std::string> ingredients;
  /// When no template matches with a known tag, accept any tag text instead
  /// of failing. Lets callers answer "no recipes" for unseen tags.
  bool open_tags = false;
};

ParseVocabulary vocabulary_from(const kg::KnowledgeGraph& kg);

enum class ParseFailure { NoTemplateMatch, UnknownTag, BadNumber, BadConstraint };

class QuestionParseError : public std::runtime_error {
 public:
  QuestionParseError(ParseFailure kind, std::string message, std::size_t begin,
                     std::size_t end)
      : std::runtime_error(std::move(message)), kind_(kind), begin_(begin), end_(end) {}
  ParseFailure kind() const { return kind_; }
  /// Byte span [begin, end) of the offending text.
  std::size_t span_begin() const { return begin_; }
  std::size_t span_end() const { return end_; }

 private:
  ParseFailure kind_;
  std::size_t begin_;
  std::size_t end_;
};

struct ParsedQuestion {
  ConstraintQuery query;
  std::string template_id;
};

ParsedQuestion parse_question_with_template(std::string_view text,
                                            const ParseVocabulary& vocab,
                                            const TemplateCatalog& catalog);

ConstraintQuery parse_question(std::string_view text, const ParseVocabulary& vocab,
                               const TemplateCatalog& catalog);

// ---------------------------------------------------------------------------
// Ground truth

bool satisfies(const kg::Recipe& r, const ConstraintQuery& q);

/// Same predicate over a parsed context line (used by the oracle backend).
bool satisfies(const kg::ContextFields& r, const ConstraintQuery& q);

/// R+ in tag order.
kg::RecipeList ground_truth(const kg::KnowledgeGraph& kg, const ConstraintQuery& q);

struct Partition {
  kg::RecipeList positives;
  kg::RecipeList negatives;
};

/// R+ and R- = R(t) - R+.
Partition partition(const kg::KnowledgeGraph& kg, const ConstraintQuery& q);

}  // namespace kerl::constraints
