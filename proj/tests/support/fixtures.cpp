#include "fixtures.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <unistd.h>
#include <set>
#include <vector>

#include "kerl/kg_store.hpp"
#include "kerl/text.hpp"

namespace fixtures {

namespace c = kerl::constraints;
namespace fs = std::filesystem;

std::string data_path(const std::string& name) { return std::string(KERL_DATA_DIR) + "/" + name; }

std::string fixture_path(const std::string& name) {
  return std::string(KERL_TEST_FIXTURES) + "/" + name;
}

const kerl::kg::KnowledgeGraph& sample_graph() {
  static const auto g =
      kerl::kg::ingest_file(data_path("sample_corpus.jsonl"), kerl::kg::CorpusFormat::Jsonl).graph;
  return g;
}

const kerl::kg::KnowledgeGraph& preference_graph() {
  static const auto g =
      kerl::kg::ingest_file(fixture_path("preference_corpus.jsonl"), kerl::kg::CorpusFormat::Jsonl)
          .graph;
  return g;
}

const c::TemplateCatalog& kgqa_catalog() {
  static const auto cat = c::load_catalog(data_path("templates/kgqa_questions.json"));
  return cat;
}

c::ConstraintQuery banana_bread_query() {
  c::ConstraintQuery q;
  q.tag = "low-protein";
  q.includes = {"baking soda", "tomato paste", "green onions", "ground cinnamon", "flour"};
  q.excludes = {"orange slice", "sweet rice flour", "yellow cake mix"};
  q.nutrient_constraints = {{"cholesterol", c::LessThan{0.07, true}},
                            {"salt_per_100g", c::Range{0.14, 0.26}}};
  return q;
}

namespace {

double awkward_number(kerl::Rng& rng) {
  switch (rng.index(5)) {
    case 0:
      return static_cast<double>(rng.index(2000));
    case 1:
      return std::round(rng.uniform(0, 500) * 100) / 100;
    case 2:
      return rng.uniform(0, 1e-3);
    case 3:
      return rng.uniform(1e5, 1e9);
    default:
      return rng.uniform(0, 1000);
  }
}

}  // namespace

c::ConstraintQuery random_query(const kerl::kg::KnowledgeGraph& kg, kerl::Rng& rng,
                                bool allow_empty_lists) {
  const auto tags = kg.tags();
  c::ConstraintQuery q;
  q.tag = tags[rng.index(tags.size())];
  const auto vocab = kerl::kg::ingredient_vocabulary(kg, q.tag);
  std::vector<std::string> pool(vocab.begin(), vocab.end());
  const std::size_t lo = allow_empty_lists ? 0 : 1;
  const std::size_t n_inc = std::min<std::size_t>(lo + rng.index(5), pool.size() / 2);
  const std::size_t n_exc = std::min<std::size_t>(lo + rng.index(4), pool.size() - n_inc);
  auto picked = rng.sample(pool, n_inc + n_exc);
  q.includes.assign(picked.begin(), picked.begin() + static_cast<std::ptrdiff_t>(n_inc));
  q.excludes.assign(picked.begin() + static_cast<std::ptrdiff_t>(n_inc), picked.end());

  const std::vector<std::string> nutrients(kg.nutrient_names().begin(), kg.nutrient_names().end());
  const std::size_t n_c = rng.index(4);
  for (std::size_t i = 0; i < n_c; ++i) {
    c::NutrientConstraint nc;
    nc.nutrient = nutrients[rng.index(nutrients.size())];
    switch (rng.index(3)) {
      case 0:
        nc.filter = c::LessThan{awkward_number(rng), rng.coin()};
        break;
      case 1:
        nc.filter = c::AtLeast{awkward_number(rng), rng.coin()};
        break;
      default: {
        double a = awkward_number(rng), b = awkward_number(rng);
        if (a == b) b = a + 1;
        nc.filter = c::Range{std::min(a, b), std::max(a, b)};
      }
    }
    q.nutrient_constraints.push_back(std::move(nc));
  }
  return q;
}

std::set<std::string> squeal_path_truth(const kerl::kg::KnowledgeGraph& kg,
                                        const kerl::squeal::TripleStore& store,
                                        const c::ConstraintQuery& q) {
  using kerl::squeal::TemplateId;
  auto ids_of = [&](TemplateId id, const kerl::squeal::Bindings& b) {
    std::set<std::string> ids;
    for (const auto& row : kerl::squeal::execute(store, kerl::squeal::template_ast(id, b)).rows) {
      ids.insert(row.at(0).text);
    }
    return ids;
  };
  std::set<std::string> ids = ids_of(TemplateId::TaggedRecipes, {{"tag", q.tag}});
  auto narrow = [&](const std::string& nutrient, const char* op, double v) {
    const auto hit = ids_of(TemplateId::TaggedWithNutrientFilter,
                            {{"tag", q.tag},
                             {"nutrient", nutrient},
                             {"op", op},
                             {"v", kerl::text::format_number(v)}});
    std::set<std::string> keep;
    for (const auto& id : ids) {
      if (hit.count(id)) keep.insert(id);
    }
    ids = std::move(keep);
  };
  for (const auto& nc : q.nutrient_constraints) {
    if (const auto* lt = std::get_if<c::LessThan>(&nc.filter)) {
      narrow(nc.nutrient, lt->inclusive ? "<=" : "<", lt->value);
    } else if (const auto* al = std::get_if<c::AtLeast>(&nc.filter)) {
      narrow(nc.nutrient, al->inclusive ? ">=" : ">", al->value);
    } else {
      const auto& r = std::get<c::Range>(nc.filter);
      narrow(nc.nutrient, ">=", r.lo);
      narrow(nc.nutrient, "<=", r.hi);
    }
  }
  std::set<std::string> out;
  for (const auto& id : ids) {
    const auto& ings = kg.find(id)->ingredients;
    const std::set<std::string> have(ings.begin(), ings.end());
    bool ok = true;
    for (const auto& i : q.includes) ok = ok && have.count(i);
    for (const auto& e : q.excludes) ok = ok && !have.count(e);
    if (ok) out.insert(id);
  }
  return out;
}

std::string scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  fs::path p = fs::path(KERL_TEST_SCRATCH) / (name + "-" + std::to_string(::getpid()) + "-" +
                                              std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace fixtures
