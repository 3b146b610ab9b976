#include "kerl/squeal.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

#include "kerl/text.hpp"

namespace kerl::squeal {

using kg::Term;

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::Less:
      return "<";
    case CompareOp::LessEqual:
      return "<=";
    case CompareOp::Greater:
      return ">";
    case CompareOp::GreaterEqual:
      return ">=";
  }
  return "?";
}

std::optional<CompareOp> parse_compare_op(std::string_view s) {
  if (s == "<") return CompareOp::Less;
  if (s == "<=") return CompareOp::LessEqual;
  if (s == ">") return CompareOp::Greater;
  if (s == ">=") return CompareOp::GreaterEqual;
  return std::nullopt;
}

namespace {

bool compare(double lhs, CompareOp op, double rhs) {
  switch (op) {
    case CompareOp::Less:
      return lhs < rhs;
    case CompareOp::LessEqual:
      return lhs <= rhs;
    case CompareOp::Greater:
      return lhs > rhs;
    case CompareOp::GreaterEqual:
      return lhs >= rhs;
  }
  return false;
}

CompareOp flip(CompareOp op) {
  switch (op) {
    case CompareOp::Less:
      return CompareOp::Greater;
    case CompareOp::LessEqual:
      return CompareOp::GreaterEqual;
    case CompareOp::Greater:
      return CompareOp::Less;
    case CompareOp::GreaterEqual:
      return CompareOp::LessEqual;
  }
  return op;
}

std::string term_text(const PatternTerm& t) {
  if (const auto* v = std::get_if<Variable>(&t)) return "?" + v->name;
  return kg::to_string(std::get<Term>(t));
}

// ---------------------------------------------------------------------------
// Lexer

enum class Tok {
  Keyword,
  Var,
  Ident,
  String,
  Number,
  LBrace,
  RBrace,
  LParen,
  RParen,
  Dot,
  And,
  Op,
  End
};

struct Token {
  Tok kind;
  std::string text;  // keyword upper-cased, var without '?', unescaped string
  double number = 0.0;
  std::size_t offset = 0;
};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_'; }
bool ident_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '-' || c == ':';
}

std::vector<Token> lex(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto fail = [&](const std::string& msg, std::vector<std::string> expected = {}) {
    throw SyntaxError(msg + " at offset " + std::to_string(i), i, std::move(expected));
  };
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (c == '{') {
      out.push_back({Tok::LBrace, "{", 0.0, start});
      ++i;
    } else if (c == '}') {
      out.push_back({Tok::RBrace, "}", 0.0, start});
      ++i;
    } else if (c == '(') {
      out.push_back({Tok::LParen, "(", 0.0, start});
      ++i;
    } else if (c == ')') {
      out.push_back({Tok::RParen, ")", 0.0, start});
      ++i;
    } else if (c == '.' && !(i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      out.push_back({Tok::Dot, ".", 0.0, start});
      ++i;
    } else if (c == '&') {
      if (i + 1 < s.size() && s[i + 1] == '&') {
        out.push_back({Tok::And, "&&", 0.0, start});
        i += 2;
      } else {
        fail("unexpected '&'", {"&&"});
      }
    } else if (c == '<' || c == '>') {
      std::string op(1, static_cast<char>(c));
      ++i;
      if (i < s.size() && s[i] == '=') {
        op.push_back('=');
        ++i;
      }
      out.push_back({Tok::Op, op, 0.0, start});
    } else if (c == '?') {
      ++i;
      const std::size_t name_start = i;
      while (i < s.size() && ident_char(static_cast<unsigned char>(s[i]))) ++i;
      if (i == name_start) fail("empty variable name", {"variable name"});
      out.push_back({Tok::Var, std::string(s.substr(name_start, i - name_start)), 0.0, start});
    } else if (c == '"') {
      ++i;
      while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\') ++i;
        ++i;
      }
      if (i >= s.size()) {
        i = start;
        fail("unterminated string literal", {"\""});
      }
      ++i;
      std::string unescaped;
      try {
        unescaped = nlohmann::json::parse(s.substr(start, i - start)).get<std::string>();
      } catch (const std::exception&) {
        i = start;
        fail("malformed string literal");
      }
      out.push_back({Tok::String, std::move(unescaped), 0.0, start});
    } else if (std::isdigit(c) || c == '-' || c == '+' || c == '.') {
      std::size_t j = i;
      if (s[j] == '-' || s[j] == '+') ++j;
      const std::size_t digits = j;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && s[j] == '.' && j + 1 < s.size() &&
          std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
        ++j;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      }
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '-' || s[k] == '+')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          while (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) ++k;
          j = k;
        }
      }
      if (j == digits) fail("malformed number", {"number"});
      auto v = text::parse_number(s.substr(i, j - i));
      if (!v) fail("malformed number", {"number"});
      out.push_back({Tok::Number, std::string(s.substr(i, j - i)), *v, start});
      i = j;
    } else if (ident_start(c)) {
      while (i < s.size() && ident_char(static_cast<unsigned char>(s[i]))) ++i;
      std::string word(s.substr(start, i - start));
      std::string upper = word;
      for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      if (upper == "SELECT" || upper == "WHERE" || upper == "FILTER" || upper == "LIMIT") {
        out.push_back({Tok::Keyword, upper, 0.0, start});
      } else {
        out.push_back({Tok::Ident, std::move(word), 0.0, start});
      }
    } else {
      fail(std::string("unexpected character '") + static_cast<char>(c) + "'");
    }
  }
  out.push_back({Tok::End, "", 0.0, s.size()});
  return out;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  explicit Parser(std::string_view text) : tokens_(lex(text)) {}

  QueryAst parse() {
    QueryAst q;
    expect_keyword("SELECT");
    while (peek().kind == Tok::Var) q.select_vars.push_back(next().text);
    if (q.select_vars.empty()) error({"variable"});
    expect_keyword("WHERE");
    expect(Tok::LBrace, "{");
    while (true) {
      const Token& t = peek();
      if (t.kind == Tok::RBrace) {
        next();
        break;
      }
      if (t.kind == Tok::Keyword && t.text == "FILTER") {
        q.filters.push_back(parse_filter());
        if (peek().kind == Tok::Dot) next();
        continue;
      }
      q.patterns.push_back(parse_pattern());
      if (peek().kind == Tok::Dot) {
        next();
      } else if (peek().kind != Tok::RBrace &&
                 !(peek().kind == Tok::Keyword && peek().text == "FILTER")) {
        error({".", "}", "FILTER"});
      }
    }
    if (peek().kind == Tok::Keyword && peek().text == "LIMIT") {
      next();
      const Token& n = peek();
      if (n.kind != Tok::Number || n.number < 1 || n.number != static_cast<double>(static_cast<std::size_t>(n.number)) ||
          n.text.find_first_of(".eE") != std::string::npos) {
        error({"positive integer"});
      }
      q.limit = static_cast<std::size_t>(next().number);
    }
    if (peek().kind != Tok::End) error({"end of query"});
    validate(q);
    return q;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  [[noreturn]] void error(std::vector<std::string> expected) const {
    const Token& t = peek();
    std::string got = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
    std::string msg = "syntax error at offset " + std::to_string(t.offset) +
                      ": unexpected " + got + ", expected one of {" +
                      text::join(expected, ", ") + "}";
    throw SyntaxError(msg, t.offset, std::move(expected));
  }

  void expect_keyword(std::string_view kw) {
    if (peek().kind != Tok::Keyword || peek().text != kw) error({std::string(kw)});
    next();
  }

  void expect(Tok kind, std::string_view what) {
    if (peek().kind != kind) error({std::string(what)});
    next();
  }

  PatternTerm parse_term(bool allow_literals) {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Var:
        return Variable{next().text};
      case Tok::Ident:
        return Term::identifier(next().text);
      case Tok::String:
        if (allow_literals) return Term::string(next().text);
        break;
      case Tok::Number:
        if (allow_literals) return Term::numeric(next().number);
        break;
      default:
        break;
    }
    if (allow_literals) error({"variable", "identifier", "string", "number"});
    error({"variable", "identifier"});
  }

  TriplePattern parse_pattern() {
    TriplePattern p;
    p.subject = parse_term(false);
    p.predicate = parse_term(false);
    p.object = parse_term(true);
    return p;
  }

  Comparison parse_comparison() {
    const Token& first = peek();
    if (first.kind == Tok::Var) {
      Variable v{next().text};
      if (peek().kind != Tok::Op) error({"<", "<=", ">", ">="});
      auto op = *parse_compare_op(next().text);
      if (peek().kind != Tok::Number) error({"number"});
      return {std::move(v), op, next().number};
    }
    if (first.kind == Tok::Number) {
      double value = next().number;
      if (peek().kind != Tok::Op) error({"<", "<=", ">", ">="});
      auto op = *parse_compare_op(next().text);
      if (peek().kind != Tok::Var) error({"variable"});
      return {Variable{next().text}, flip(op), value};
    }
    error({"variable", "number"});
  }

  Filter parse_filter() {
    expect_keyword("FILTER");
    expect(Tok::LParen, "(");
    Filter f;
    f.conjuncts.push_back(parse_comparison());
    while (peek().kind == Tok::And) {
      next();
      f.conjuncts.push_back(parse_comparison());
    }
    expect(Tok::RParen, ")");
    return f;
  }

  static void validate(const QueryAst& q) {
    if (q.patterns.empty()) throw QueryError("empty pattern list");
    std::set<std::string> bound;
    for (const auto& p : q.patterns) {
      for (const auto* t : {&p.subject, &p.predicate, &p.object}) {
        if (const auto* v = std::get_if<Variable>(t)) bound.insert(v->name);
      }
    }
    for (const auto& v : q.select_vars) {
      if (!bound.count(v)) throw QueryError("variable ?" + v + " in SELECT is unbound");
    }
    for (const auto& f : q.filters) {
      for (const auto& c : f.conjuncts) {
        if (!bound.count(c.var.name)) {
          throw QueryError("variable ?" + c.var.name + " in FILTER is unbound");
        }
      }
    }
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

QueryAst parse_query(std::string_view text) { return Parser(text).parse(); }

std::string to_text(const QueryAst& q) {
  std::string out = "SELECT";
  for (const auto& v : q.select_vars) out += " ?" + v;
  out += " WHERE { ";
  for (const auto& p : q.patterns) {
    out += term_text(p.subject) + " " + term_text(p.predicate) + " " +
           term_text(p.object) + " . ";
  }
  for (const auto& f : q.filters) {
    out += "FILTER(";
    for (std::size_t i = 0; i < f.conjuncts.size(); ++i) {
      const auto& c = f.conjuncts[i];
      if (i) out += " && ";
      out += "?" + c.var.name + " " + std::string(to_string(c.op)) + " " +
             text::format_number(c.value);
    }
    out += ") ";
  }
  out += "}";
  if (q.limit) out += " LIMIT " + std::to_string(*q.limit);
  return out;
}

// ---------------------------------------------------------------------------
// Templates

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::TaggedRecipes:
      return "tagged_recipes";
    case TemplateId::RecipeDetail:
      return "recipe_detail";
    case TemplateId::TaggedWithNutrientFilter:
      return "tagged_with_nutrient_filter";
  }
  return "?";
}

std::optional<TemplateId> parse_template_id(std::string_view s) {
  for (auto id : {TemplateId::TaggedRecipes, TemplateId::RecipeDetail,
                  TemplateId::TaggedWithNutrientFilter}) {
    if (to_string(id) == s) return id;
  }
  return std::nullopt;
}

namespace {

const std::string& require(const Bindings& b, std::string_view key) {
  auto it = b.find(key);
  if (it == b.end()) {
    throw QueryError("missing template placeholder '" + std::string(key) + "'");
  }
  return it->second;
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !ident_start(static_cast<unsigned char>(s.front()))) return false;
  for (unsigned char c : s) {
    if (!ident_char(c)) return false;
  }
  std::string upper(s);
  for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return upper != "SELECT" && upper != "WHERE" && upper != "FILTER" && upper != "LIMIT";
}

Variable var(std::string name) { return Variable{std::move(name)}; }

}  // namespace

QueryAst template_ast(TemplateId id, const Bindings& bindings) {
  QueryAst q;
  switch (id) {
    case TemplateId::TaggedRecipes: {
      const auto& tag = require(bindings, "tag");
      q.select_vars = {"r", "name"};
      q.patterns.push_back({var("r"), Term::identifier("tagged"), Term::string(tag)});
      q.patterns.push_back({var("r"), Term::identifier("name"), var("name")});
      return q;
    }
    case TemplateId::RecipeDetail: {
      const auto& rid = require(bindings, "id");
      if (!is_identifier(rid)) throw QueryError("placeholder 'id' is not an identifier: " + rid);
      q.select_vars = {"p", "o"};
      q.patterns.push_back({Term::identifier(rid), var("p"), var("o")});
      return q;
    }
    case TemplateId::TaggedWithNutrientFilter: {
      const auto& tag = require(bindings, "tag");
      const auto& nutrient = require(bindings, "nutrient");
      const auto& op_text = require(bindings, "op");
      const auto& v_text = require(bindings, "v");
      if (!is_identifier(nutrient)) {
        throw QueryError("placeholder 'nutrient' is not an identifier: " + nutrient);
      }
      auto op = parse_compare_op(op_text);
      if (!op) throw QueryError("placeholder 'op' must be one of <, <=, >, >=");
      auto v = text::parse_number(v_text);
      if (!v) throw QueryError("placeholder 'v' is not a number: " + v_text);
      q.select_vars = {"r", "name", "x"};
      q.patterns.push_back({var("r"), Term::identifier("tagged"), Term::string(tag)});
      q.patterns.push_back({var("r"), Term::identifier("name"), var("name")});
      q.patterns.push_back({var("r"), Term::identifier(nutrient), var("x")});
      q.filters.push_back(Filter{{Comparison{var("x"), *op, *v}}});
      return q;
    }
  }
  throw QueryError("unknown template id");
}

std::string instantiate_template(TemplateId id, const Bindings& bindings) {
  return to_text(template_ast(id, bindings));
}

// ---------------------------------------------------------------------------
// Execution

TripleStore::TripleStore(const kg::KnowledgeGraph& kg) : triples_(kg::to_triples(kg)) {
  build_index();
}

TripleStore::TripleStore(std::vector<kg::Triple> triples) : triples_(std::move(triples)) {
  build_index();
}

void TripleStore::build_index() {
  for (std::size_t i = 0; i < triples_.size(); ++i) {
    subject_index_[triples_[i].subject].push_back(i);
    predicate_index_[triples_[i].predicate].push_back(i);
  }
}

const std::vector<std::size_t>* TripleStore::by_subject(std::string_view s) const {
  auto it = subject_index_.find(s);
  return it == subject_index_.end() ? nullptr : &it->second;
}

const std::vector<std::size_t>* TripleStore::by_predicate(std::string_view p) const {
  auto it = predicate_index_.find(p);
  return it == predicate_index_.end() ? nullptr : &it->second;
}

namespace {

struct CompiledTerm {
  int slot = -1;  // >= 0 for variables
  Term constant;
};

class Executor {
 public:
  Executor(const TripleStore& store, const QueryAst& q) : store_(store), q_(q) {
    for (const auto& p : q.patterns) {
      patterns_.push_back({compile(p.subject), compile(p.predicate), compile(p.object)});
    }
    for (const auto& v : q.select_vars) projection_.push_back(slots_.at(v));
    for (const auto& f : q.filters) {
      for (const auto& c : f.conjuncts) {
        filters_.push_back({slots_.at(c.var.name), c});
      }
    }
    binding_.resize(slots_.size());
  }

  ResultTable run() {
    match(0);
    ResultTable table;
    table.columns = q_.select_vars;
    table.rows.assign(rows_.begin(), rows_.end());
    if (q_.limit && table.rows.size() > *q_.limit) table.rows.resize(*q_.limit);
    return table;
  }

 private:
  struct Compiled {
    CompiledTerm s, p, o;
  };
  struct BoundFilter {
    int slot;
    Comparison cmp;
  };

  CompiledTerm compile(const PatternTerm& t) {
    if (const auto* v = std::get_if<Variable>(&t)) {
      auto [it, _] = slots_.emplace(v->name, static_cast<int>(slots_.size()));
      return {it->second, {}};
    }
    return {-1, std::get<Term>(t)};
  }

  // Current value of a compiled term, if constant or already bound.
  const Term* resolved(const CompiledTerm& t) const {
    if (t.slot < 0) return &t.constant;
    return binding_[t.slot] ? &*binding_[t.slot] : nullptr;
  }

  bool unify(const CompiledTerm& t, const Term& value, std::vector<int>& newly) {
    if (const Term* r = resolved(t)) return *r == value;
    binding_[t.slot] = value;
    newly.push_back(t.slot);
    return true;
  }

  void match(std::size_t pi) {
    if (pi == patterns_.size()) {
      emit();
      return;
    }
    const Compiled& p = patterns_[pi];
    const std::vector<std::size_t>* candidates = nullptr;
    bool scan_all = false;
    const Term* s = resolved(p.s);
    const Term* pr = resolved(p.p);
    if (s) {
      if (s->kind != Term::Kind::Identifier) return;
      candidates = store_.by_subject(s->text);
      if (!candidates) return;
    } else if (pr) {
      if (pr->kind != Term::Kind::Identifier) return;
      candidates = store_.by_predicate(pr->text);
      if (!candidates) return;
    } else {
      scan_all = true;
    }
    const auto triples = store_.triples();
    const std::size_t n = scan_all ? triples.size() : candidates->size();
    std::vector<int> newly;
    for (std::size_t k = 0; k < n; ++k) {
      const kg::Triple& t = triples[scan_all ? k : (*candidates)[k]];
      newly.clear();
      if (unify(p.s, Term::identifier(t.subject), newly) &&
          unify(p.p, Term::identifier(t.predicate), newly) &&
          unify(p.o, t.object, newly)) {
        match(pi + 1);
      }
      for (int slot : newly) binding_[slot].reset();
    }
  }

  void emit() {
    for (const auto& f : filters_) {
      const Term& v = *binding_[f.slot];
      if (!v.is_number()) {
        throw EvalError("FILTER on non-numeric binding ?" + f.cmp.var.name + " = " +
                        kg::to_string(v));
      }
      if (!compare(v.number, f.cmp.op, f.cmp.value)) return;
    }
    Row row;
    row.reserve(projection_.size());
    for (int slot : projection_) row.push_back(*binding_[slot]);
    rows_.insert(std::move(row));
  }

  const TripleStore& store_;
  const QueryAst& q_;
  std::map<std::string, int> slots_;
  std::vector<Compiled> patterns_;
  std::vector<int> projection_;
  std::vector<BoundFilter> filters_;
  std::vector<std::optional<Term>> binding_;
  std::set<Row> rows_;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ResultTable execute(const TripleStore& store, const QueryAst& q) {
  return Executor(store, q).run();
}

ResultTable execute(const kg::KnowledgeGraph& kg, const QueryAst& q) {
  return execute(TripleStore(kg), q);
}

std::string to_csv(const ResultTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out += ',';
    out += csv_field(table.columns[i]);
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      const Term& t = row[i];
      out += csv_field(t.is_number() ? text::format_number(t.number) : t.text);
    }
    out += '\n';
  }
  return out;
}

}  // namespace kerl::squeal
