#include "kerl/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kerl/text.hpp"

namespace kerl::constraints {

using nlohmann::json;

std::string_view to_string(FilterKind k) {
  switch (k) {
    case FilterKind::LessThan:
      return "less_than";
    case FilterKind::AtLeast:
      return "at_least";
    case FilterKind::Range:
      return "range";
  }
  return "?";
}

std::optional<FilterKind> parse_filter_kind(std::string_view s) {
  if (s == "less_than") return FilterKind::LessThan;
  if (s == "at_least") return FilterKind::AtLeast;
  if (s == "range") return FilterKind::Range;
  return std::nullopt;
}

bool NutrientConstraint::holds(double v) const {
  return std::visit(
      [v](const auto& f) -> bool {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, LessThan>) {
          return f.inclusive ? v <= f.value : v < f.value;
        } else if constexpr (std::is_same_v<F, AtLeast>) {
          return f.inclusive ? v >= f.value : v > f.value;
        } else {
          return f.lo <= v && v <= f.hi;
        }
      },
      filter);
}

void validate(const NutrientConstraint& c) {
  if (c.nutrient.empty()) throw InvalidQuery("nutrient constraint without nutrient name");
  auto check = [&](double v) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidQuery("constraint on '" + c.nutrient + "' has invalid value");
    }
  };
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, Range>) {
          check(f.lo);
          check(f.hi);
          if (!(f.lo < f.hi)) {
            throw InvalidQuery("range on '" + c.nutrient + "' requires lo < hi");
          }
        } else {
          check(f.value);
        }
      },
      c.filter);
}

void validate(const ConstraintQuery& q) {
  if (text::normalize_space(q.tag).empty()) throw InvalidQuery("query tag is empty");
  std::set<std::string> inc(q.includes.begin(), q.includes.end());
  if (inc.size() != q.includes.size()) throw InvalidQuery("duplicate included ingredient");
  std::set<std::string> exc(q.excludes.begin(), q.excludes.end());
  if (exc.size() != q.excludes.size()) throw InvalidQuery("duplicate excluded ingredient");
  for (const auto& e : exc) {
    if (inc.count(e)) {
      throw InvalidQuery("ingredient '" + e + "' is both included and excluded");
    }
  }
  for (const auto& c : q.nutrient_constraints) validate(c);
}

// ---------------------------------------------------------------------------
// Templates

namespace {

constexpr std::string_view kTag = "{tag}";
constexpr std::string_view kIngredients = "{ingredients}";
constexpr std::string_view kNotHave = "{not_have_ingredients}";
constexpr std::string_view kConstraints = "{constraints}";

std::size_t count_occurrences(std::string_view s, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string_view::npos;
       pos = s.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

std::vector<Phrase> default_phrasing() {
  return {
      {"no more than", FilterKind::LessThan, true},
      {"less than", FilterKind::LessThan, false},
      {"not above", FilterKind::LessThan, true},
      {"at least", FilterKind::AtLeast, true},
      {"more than", FilterKind::AtLeast, false},
      {"not less than", FilterKind::AtLeast, true},
      {"greater than", FilterKind::AtLeast, false},
      {"within range", FilterKind::Range, true},
  };
}

void QuestionTemplate::validate() const {
  for (auto ph : {kTag, kIngredients, kNotHave, kConstraints}) {
    if (count_occurrences(text, ph) != 1) {
      throw InvalidQuery("template '" + id + "' must contain " + std::string(ph) +
                         " exactly once");
    }
  }
  if (constraint_prefix.empty()) {
    throw InvalidQuery("template '" + id + "' needs a nonempty constraint_prefix");
  }
  std::set<std::string> seen;
  bool has[5] = {false, false, false, false, false};
  for (const auto& p : phrasing) {
    if (p.text.empty()) throw InvalidQuery("template '" + id + "' has an empty phrase");
    if (!seen.insert(p.text).second) {
      throw InvalidQuery("template '" + id + "' maps phrase '" + p.text + "' twice");
    }
    int slot = p.kind == FilterKind::Range ? 4
                                           : static_cast<int>(p.kind) * 2 + (p.inclusive ? 1 : 0);
    has[slot] = true;
  }
  for (bool h : has) {
    if (!h) {
      throw InvalidQuery("template '" + id +
                         "' phrasing must cover every filter kind and inclusivity");
    }
  }
}

const QuestionTemplate* TemplateCatalog::find(std::string_view id) const {
  for (const auto& t : templates) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

namespace {

std::vector<Phrase> phrasing_from_json(const json& arr) {
  std::vector<Phrase> out;
  for (const auto& p : arr) {
    auto kind = parse_filter_kind(p.at("kind").get<std::string>());
    if (!kind) throw InvalidQuery("unknown filter kind in phrasing map");
    out.push_back({p.at("text").get<std::string>(), *kind, p.value("inclusive", true)});
  }
  return out;
}

json phrasing_to_json(const std::vector<Phrase>& phrasing) {
  json arr = json::array();
  for (const auto& p : phrasing) {
    arr.push_back({{"text", p.text},
                   {"kind", std::string(to_string(p.kind))},
                   {"inclusive", p.inclusive}});
  }
  return arr;
}

}  // namespace

TemplateCatalog parse_catalog(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidQuery(std::string("template catalog is not valid JSON: ") + e.what());
  }
  TemplateCatalog catalog;
  try {
    std::vector<Phrase> shared =
        j.contains("phrasing") ? phrasing_from_json(j["phrasing"]) : default_phrasing();
    for (const auto& t : j.at("templates")) {
      QuestionTemplate tpl;
      tpl.id = t.at("id").get<std::string>();
      tpl.text = t.at("text").get<std::string>();
      tpl.constraint_prefix = t.value("constraint_prefix", std::string(", and have "));
      tpl.constraint_suffix = t.value("constraint_suffix", std::string());
      tpl.phrasing = t.contains("phrasing") ? phrasing_from_json(t["phrasing"]) : shared;
      tpl.validate();
      if (catalog.find(tpl.id)) throw InvalidQuery("duplicate template id '" + tpl.id + "'");
      catalog.templates.push_back(std::move(tpl));
    }
  } catch (const json::exception& e) {
    throw InvalidQuery(std::string("malformed template catalog: ") + e.what());
  }
  if (catalog.templates.empty()) throw InvalidQuery("template catalog is empty");
  return catalog;
}

TemplateCatalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidQuery("cannot open template catalog '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_catalog(ss.str());
}

std::string catalog_to_json(const TemplateCatalog& catalog) {
  json arr = json::array();
  for (const auto& t : catalog.templates) {
    arr.push_back({{"id", t.id},
                   {"text", t.text},
                   {"constraint_prefix", t.constraint_prefix},
                   {"constraint_suffix", t.constraint_suffix},
                   {"phrasing", phrasing_to_json(t.phrasing)}});
  }
  return json{{"templates", arr}}.dump(2);
}

std::string render_constraint(const NutrientConstraint& c,
                              const std::vector<Phrase>& phrasing) {
  const FilterKind kind = c.kind();
  bool inclusive = true;
  if (const auto* lt = std::get_if<LessThan>(&c.filter)) inclusive = lt->inclusive;
  if (const auto* al = std::get_if<AtLeast>(&c.filter)) inclusive = al->inclusive;
  const Phrase* phrase = nullptr;
  for (const auto& p : phrasing) {
    if (p.kind == kind && (kind == FilterKind::Range || p.inclusive == inclusive)) {
      phrase = &p;
      break;
    }
  }
  if (!phrase) throw InvalidQuery("no phrase for filter kind " + std::string(to_string(kind)));

  std::string out = text::nutrient_surface(c.nutrient) + " " + phrase->text + " ";
  if (const auto* r = std::get_if<Range>(&c.filter)) {
    out += "(" + text::format_number(r->lo) + ", " + text::format_number(r->hi) + ")";
  } else if (const auto* lt = std::get_if<LessThan>(&c.filter)) {
    out += text::format_number(lt->value);
  } else {
    out += text::format_number(std::get<AtLeast>(c.filter).value);
  }
  return out;
}

std::string render_question(const ConstraintQuery& q, const QuestionTemplate& tpl) {
  std::string constraints;
  if (!q.nutrient_constraints.empty()) {
    std::vector<std::string> parts;
    for (const auto& c : q.nutrient_constraints) {
      parts.push_back(render_constraint(c, tpl.phrasing));
    }
    constraints = tpl.constraint_prefix + text::join(parts, ", ") + tpl.constraint_suffix;
  }
  std::string out;
  std::string_view rest = tpl.text;
  while (!rest.empty()) {
    auto open = rest.find('{');
    if (open == std::string_view::npos) {
      out.append(rest);
      break;
    }
    out.append(rest.substr(0, open));
    rest.remove_prefix(open);
    if (text::starts_with(rest, kTag)) {
      out += q.tag;
      rest.remove_prefix(kTag.size());
    } else if (text::starts_with(rest, kIngredients)) {
      out += text::join(q.includes, ", ");
      rest.remove_prefix(kIngredients.size());
    } else if (text::starts_with(rest, kNotHave)) {
      out += text::join(q.excludes, ", ");
      rest.remove_prefix(kNotHave.size());
    } else if (text::starts_with(rest, kConstraints)) {
      out += constraints;
      rest.remove_prefix(kConstraints.size());
    } else {
      out += '{';
      rest.remove_prefix(1);
    }
  }
  return out;
}

ParseVocabulary vocabulary_from(const kg::KnowledgeGraph& kg) {
  ParseVocabulary v;
  for (const auto& t : kg.tags()) v.tags.insert(t);
  for (const auto& [ing, _] : kg.ingredient_index()) v.ingredients.insert(ing);
  return v;
}

// ---------------------------------------------------------------------------
// Question parsing

namespace {

enum class SlotKind { Tag, Includes, Excludes, Constraints };

struct Piece {
  bool is_slot = false;
  SlotKind slot = SlotKind::Tag;
  std::string literal;
};

std::vector<Piece> skeleton(std::string_view text) {
  std::vector<Piece> out;
  std::string literal;
  std::string_view rest = text;
  auto flush = [&] {
    if (!literal.empty()) out.push_back({false, SlotKind::Tag, std::move(literal)});
    literal.clear();
  };
  while (!rest.empty()) {
    std::optional<SlotKind> slot;
    std::size_t len = 0;
    if (text::starts_with(rest, kTag)) {
      slot = SlotKind::Tag;
      len = kTag.size();
    } else if (text::starts_with(rest, kIngredients)) {
      slot = SlotKind::Includes;
      len = kIngredients.size();
    } else if (text::starts_with(rest, kNotHave)) {
      slot = SlotKind::Excludes;
      len = kNotHave.size();
    } else if (text::starts_with(rest, kConstraints)) {
      slot = SlotKind::Constraints;
      len = kConstraints.size();
    }
    if (slot) {
      flush();
      out.push_back({true, *slot, {}});
      rest.remove_prefix(len);
    } else {
      literal.push_back(rest.front());
      rest.remove_prefix(1);
    }
  }
  flush();
  return out;
}

struct Failure {
  ParseFailure kind;
  std::string message;
  std::size_t begin;
  std::size_t end;
};

class QuestionMatcher {
 public:
  QuestionMatcher(std::string_view text, const QuestionTemplate& tpl,
                  const ParseVocabulary& vocab, bool any_tag = false)
      : text_(text), tpl_(tpl), vocab_(vocab), pieces_(skeleton(tpl.text)), any_tag_(any_tag) {
    phrases_ = tpl.phrasing;
    std::stable_sort(phrases_.begin(), phrases_.end(), [](const Phrase& a, const Phrase& b) {
      return a.text.size() > b.text.size();
    });
  }

  std::optional<ConstraintQuery> run() {
    if (match(0, 0)) return result_;
    return std::nullopt;
  }

  const std::optional<Failure>& failure() const { return failure_; }

 private:
  void fail(ParseFailure kind, std::string message, std::size_t begin, std::size_t end) {
    if (!failure_ || begin > failure_->begin) {
      failure_ = Failure{kind, std::move(message), begin, end};
    }
  }

  bool match(std::size_t pi, std::size_t pos) {
    if (pi == pieces_.size()) return pos == text_.size();
    const Piece& piece = pieces_[pi];
    if (!piece.is_slot) {
      if (text_.compare(pos, piece.literal.size(), piece.literal) != 0) return false;
      return match(pi + 1, pos + piece.literal.size());
    }

    // Candidate end offsets for this slot's value.
    std::vector<std::size_t> ends;
    if (pi + 1 == pieces_.size()) {
      ends.push_back(text_.size());
    } else if (!pieces_[pi + 1].is_slot) {
      const auto& lit = pieces_[pi + 1].literal;
      for (auto p = text_.find(lit, pos); p != std::string_view::npos; p = text_.find(lit, p + 1)) {
        ends.push_back(p);
      }
    } else if (pieces_[pi + 1].slot == SlotKind::Constraints) {
      // The constraint clause is either absent or starts with its prefix.
      auto add_all = [&](const std::string& lit) {
        for (auto p = text_.find(lit, pos); p != std::string_view::npos;
             p = text_.find(lit, p + 1)) {
          ends.push_back(p);
        }
      };
      add_all(tpl_.constraint_prefix);
      if (pi + 2 < pieces_.size() && !pieces_[pi + 2].is_slot) {
        add_all(pieces_[pi + 2].literal);
      } else {
        ends.push_back(text_.size());
      }
      std::sort(ends.begin(), ends.end());
      ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
    } else {
      for (std::size_t p = pos; p <= text_.size(); ++p) ends.push_back(p);
    }
    if (piece.slot == SlotKind::Tag && !any_tag_) std::reverse(ends.begin(), ends.end());

    const bool next_is_constraints = piece.slot != SlotKind::Constraints &&
                                     pi + 1 < pieces_.size() && pieces_[pi + 1].is_slot &&
                                     pieces_[pi + 1].slot == SlotKind::Constraints &&
                                     !tpl_.constraint_prefix.empty();
    bool tag_failed = false;
    for (std::size_t end : ends) {
      std::string_view value = text_.substr(pos, end - pos);
      // A list may not swallow a malformed constraint clause.
      if (next_is_constraints && value.find(tpl_.constraint_prefix) != std::string_view::npos) {
        continue;
      }
      ConstraintQuery saved = result_;
      if (!assign(piece.slot, value, pos)) {
        if (piece.slot == SlotKind::Tag) tag_failed = true;
        continue;
      }
      if (match(pi + 1, end)) return true;
      result_ = std::move(saved);
    }
    if (tag_failed && !ends.empty()) {
      // Report the shortest candidate as the unknown tag.
      std::size_t end = ends.back();
      fail(ParseFailure::UnknownTag,
           "unknown tag '" + std::string(text_.substr(pos, end - pos)) + "'", pos, end);
    }
    return false;
  }

  bool assign(SlotKind slot, std::string_view value, std::size_t offset) {
    switch (slot) {
      case SlotKind::Tag: {
        auto tag = text::canonical_name(value);
        if (tag.empty() || (!any_tag_ && !vocab_.tags.count(tag))) return false;
        result_.tag = std::move(tag);
        return true;
      }
      case SlotKind::Includes:
        result_.includes = split_ingredients(value);
        return true;
      case SlotKind::Excludes:
        result_.excludes = split_ingredients(value);
        return true;
      case SlotKind::Constraints:
        return assign_constraints(value, offset);
    }
    return false;
  }

  std::vector<std::string> split_ingredients(std::string_view value) const {
    std::vector<std::string> out;
    if (text::normalize_space(value).empty()) return out;
    auto pieces = text::split(value, ", ");
    for (std::size_t i = 0; i < pieces.size();) {
      std::size_t take = 1;
      if (!vocab_.ingredients.empty() && !vocab_.ingredients.count(text::canonical_name(pieces[i]))) {
        std::string joined = pieces[i];
        for (std::size_t j = i + 1; j < pieces.size(); ++j) {
          joined += ", " + pieces[j];
          if (vocab_.ingredients.count(text::canonical_name(joined))) {
            take = j - i + 1;
            break;
          }
        }
      }
      std::vector<std::string> group(pieces.begin() + static_cast<std::ptrdiff_t>(i),
                                     pieces.begin() + static_cast<std::ptrdiff_t>(i + take));
      out.push_back(text::canonical_name(text::join(group, ", ")));
      i += take;
    }
    return out;
  }

  bool assign_constraints(std::string_view value, std::size_t offset) {
    result_.nutrient_constraints.clear();
    if (value.empty()) return true;
    if (!text::starts_with(value, tpl_.constraint_prefix) ||
        !text::ends_with(value, tpl_.constraint_suffix) ||
        value.size() < tpl_.constraint_prefix.size() + tpl_.constraint_suffix.size()) {
      return false;
    }
    const std::size_t inner_begin = offset + tpl_.constraint_prefix.size();
    std::string_view inner = value.substr(
        tpl_.constraint_prefix.size(),
        value.size() - tpl_.constraint_prefix.size() - tpl_.constraint_suffix.size());
    if (inner.empty()) return false;

    // Split on ", " outside parentheses.
    std::size_t depth = 0, start = 0;
    for (std::size_t i = 0; i <= inner.size(); ++i) {
      const bool at_end = i == inner.size();
      if (!at_end && inner[i] == '(') ++depth;
      if (!at_end && inner[i] == ')' && depth > 0) --depth;
      if (at_end || (depth == 0 && inner.compare(i, 2, ", ") == 0)) {
        auto c = parse_constraint(inner.substr(start, i - start), inner_begin + start);
        if (!c) return false;
        result_.nutrient_constraints.push_back(std::move(*c));
        if (!at_end) {
          start = i + 2;
          ++i;
        }
      }
    }
    return true;
  }

  std::optional<NutrientConstraint> parse_constraint(std::string_view piece, std::size_t offset) {
    for (const auto& phrase : phrases_) {
      const std::string needle = " " + phrase.text + " ";
      auto at = piece.rfind(needle);
      if (at == std::string_view::npos || at == 0) continue;
      std::string nutrient = text::canonical_nutrient(piece.substr(0, at));
      std::string_view raw = piece.substr(at + needle.size());
      const std::size_t value_begin = offset + at + needle.size();
      NutrientConstraint c;
      c.nutrient = nutrient;
      if (phrase.kind == FilterKind::Range) {
        if (raw.size() < 2 || raw.front() != '(' || raw.back() != ')') {
          fail(ParseFailure::BadNumber, "expected '(lo, hi)' after '" + phrase.text + "'",
               value_begin, value_begin + raw.size());
          return std::nullopt;
        }
        auto parts = text::split(raw.substr(1, raw.size() - 2), ", ");
        std::optional<double> lo, hi;
        if (parts.size() == 2) {
          lo = text::parse_number(parts[0]);
          hi = text::parse_number(parts[1]);
        }
        if (!lo || !hi) {
          fail(ParseFailure::BadNumber, "unparseable range '" + std::string(raw) + "'",
               value_begin, value_begin + raw.size());
          return std::nullopt;
        }
        c.filter = Range{*lo, *hi};
      } else {
        auto v = text::parse_number(raw);
        if (!v) {
          fail(ParseFailure::BadNumber, "unparseable number '" + std::string(raw) + "'",
               value_begin, value_begin + raw.size());
          return std::nullopt;
        }
        if (phrase.kind == FilterKind::LessThan) {
          c.filter = LessThan{*v, phrase.inclusive};
        } else {
          c.filter = AtLeast{*v, phrase.inclusive};
        }
      }
      try {
        validate(c);
      } catch (const InvalidQuery& e) {
        fail(ParseFailure::BadConstraint, e.what(), offset, offset + piece.size());
        return std::nullopt;
      }
      return c;
    }
    fail(ParseFailure::BadConstraint, "no known limit phrase in '" + std::string(piece) + "'",
         offset, offset + piece.size());
    return std::nullopt;
  }

  std::string_view text_;
  const QuestionTemplate& tpl_;
  const ParseVocabulary& vocab_;
  std::vector<Piece> pieces_;
  std::vector<Phrase> phrases_;
  bool any_tag_;
  ConstraintQuery result_;
  std::optional<Failure> failure_;
};

}  // namespace

ParsedQuestion parse_question_with_template(std::string_view text,
                                            const ParseVocabulary& vocab,
                                            const TemplateCatalog& catalog) {
  std::optional<Failure> best;
  for (const auto& tpl : catalog.templates) {
    QuestionMatcher m(text, tpl, vocab);
    if (auto q = m.run()) {
      try {
        validate(*q);
      } catch (const InvalidQuery& e) {
        throw QuestionParseError(ParseFailure::BadConstraint, e.what(), 0, text.size());
      }
      return {std::move(*q), tpl.id};
    }
    if (m.failure() && (!best || m.failure()->begin > best->begin)) best = m.failure();
  }
  if (vocab.open_tags && best && best->kind == ParseFailure::UnknownTag) {
    for (const auto& tpl : catalog.templates) {
      QuestionMatcher m(text, tpl, vocab, true);
      if (auto q = m.run()) {
        try {
          validate(*q);
        } catch (const InvalidQuery&) {
          continue;
        }
        return {std::move(*q), tpl.id};
      }
    }
  }
  if (best) throw QuestionParseError(best->kind, best->message, best->begin, best->end);
  throw QuestionParseError(ParseFailure::NoTemplateMatch,
                           "question does not match any known template", 0, text.size());
}

ConstraintQuery parse_question(std::string_view text, const ParseVocabulary& vocab,
                               const TemplateCatalog& catalog) {
  return parse_question_with_template(text, vocab, catalog).query;
}

// ---------------------------------------------------------------------------
// Ground truth

namespace {

template <typename RecipeLike>
bool satisfies_impl(const RecipeLike& r, const ConstraintQuery& q) {
  if (!r.tags.count(q.tag)) return false;
  auto has = [&](const std::string& ing) {
    return std::find(r.ingredients.begin(), r.ingredients.end(), ing) != r.ingredients.end();
  };
  for (const auto& ing : q.includes) {
    if (!has(ing)) return false;
  }
  for (const auto& ing : q.excludes) {
    if (has(ing)) return false;
  }
  for (const auto& c : q.nutrient_constraints) {
    auto it = r.nutrition.find(c.nutrient);
    if (it == r.nutrition.end() || !c.holds(it->second)) return false;
  }
  return true;
}

}  // namespace

bool satisfies(const kg::Recipe& r, const ConstraintQuery& q) { return satisfies_impl(r, q); }

bool satisfies(const kg::ContextFields& r, const ConstraintQuery& q) {
  return satisfies_impl(r, q);
}

kg::RecipeList ground_truth(const kg::KnowledgeGraph& kg, const ConstraintQuery& q) {
  return partition(kg, q).positives;
}

Partition partition(const kg::KnowledgeGraph& kg, const ConstraintQuery& q) {
  Partition out;
  for (const kg::Recipe* r : kg::recipes_with_tag(kg, q.tag)) {
    (satisfies(*r, q) ? out.positives : out.negatives).push_back(r);
  }
  return out;
}

}  // namespace kerl::constraints
