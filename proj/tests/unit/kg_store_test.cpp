#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "kerl/kg_store.hpp"
#include "oracles.hpp"

using namespace kerl;
using kg::Recipe;

namespace {

Recipe make(std::string id, std::vector<std::string> ings, kg::NutrientMap n,
            std::set<std::string> tags, std::string title = "") {
  Recipe r;
  r.id = std::move(id);
  r.title = title.empty() ? "Dish " + r.id : title;
  r.ingredients = std::move(ings);
  r.nutrition = std::move(n);
  r.tags = std::move(tags);
  return r;
}

kg::IngestResult ingest_text(const std::string& s, kg::IngestOptions opt = {}) {
  std::istringstream in(s);
  return kg::ingest_corpus(in, kg::CorpusFormat::Jsonl, opt);
}

}  // namespace

TEST_CASE("three records, two tags") {
  const std::string corpus =
      R"({"id":"a","title":"A","ingredients":["x"],"nutrition":{"calories":1},"tags":["vegan"]})"
      "\n"
      R"({"id":"b","title":"B","ingredients":["y"],"nutrition":{"calories":2},"tags":["low-fat"]})"
      "\n"
      R"({"id":"c","title":"C","ingredients":["z"],"nutrition":{"calories":3},"tags":["vegan","low-fat"]})"
      "\n";
  const auto res = ingest_text(corpus);
  CHECK(res.graph.size() == 3);
  CHECK(res.graph.tag_index().size() == 2);
  CHECK(res.rejected.empty());
}

TEST_CASE("negative nutrient is rejected with a diagnostic") {
  const std::string corpus =
      R"({"id":"a","title":"A","ingredients":["x"],"nutrition":{"protein":-1},"tags":["vegan"]})"
      "\n"
      R"({"id":"b","title":"B","ingredients":["y"],"nutrition":{"protein":1},"tags":["vegan"]})"
      "\n";
  try {
    ingest_text(corpus);
    FAIL("expected IngestError");
  } catch (const kg::IngestError& e) {
    REQUIRE(e.diagnostics().size() == 1);
    CHECK(e.diagnostics()[0].line == 1);
    CHECK(e.diagnostics()[0].reason.find("protein") != std::string::npos);
  }
  const auto skipped = ingest_text(corpus, {.skip_invalid = true});
  CHECK(skipped.graph.size() == 1);
  REQUIRE(skipped.rejected.size() == 1);
  CHECK(skipped.rejected[0].line == 1);
}

TEST_CASE("records that would break the context format are rejected") {
  CHECK_THROWS_AS(kg::KnowledgeGraph::from_recipes(
                      {make("a", {"x"}, {}, {"vegan"}, "Pipe | Pie")}),
                  kg::GraphError);
  CHECK_THROWS_AS(kg::KnowledgeGraph::from_recipes({make("a", {"salt, pepper"}, {}, {"vegan"})}),
                  kg::GraphError);
  CHECK_THROWS_AS(
      kg::KnowledgeGraph::from_recipes({make("a", {"x"}, {}, {"vegan"}), make("a", {"y"}, {}, {"vegan"})}),
      kg::GraphError);
  CHECK_THROWS_AS(kg::recipe_from_json("{not json"), kg::GraphError);
  CHECK_THROWS_AS(kg::recipe_from_json(R"({"id":"a","title":"A","ingredients":["x"],"tags":["v"],"nutrition":{"fat":"lots"}})"),
                  kg::GraphError);
}

TEST_CASE("sample corpus covers every benchmark tag") {
  const auto& g = fixtures::sample_graph();
  CHECK(g.size() >= 500);
  for (const auto& tag : {"lactose", "vegan", "vegetarian", "dairy-free", "gluten-free",
                          "nut-free", "egg-free", "low-carb", "low-fat", "low-sodium",
                          "low-cholesterol", "low-protein", "high-protein", "high-calcium",
                          "high-fiber"}) {
    CHECK_MESSAGE(!oracle::ids_with_tag(g, tag).empty(), tag);
    CHECK(kg::recipes_with_tag(g, tag).size() == oracle::ids_with_tag(g, tag).size());
  }
}

TEST_CASE("recipes_with_tag") {
  std::vector<Recipe> rs;
  for (int i = 0; i < 7; ++i) rs.push_back(make("r" + std::to_string(i), {"x"}, {}, {"lactose"}));
  rs.push_back(make("other", {"x"}, {}, {"vegan"}));
  const auto g = kg::KnowledgeGraph::from_recipes(rs);
  CHECK(kg::recipes_with_tag(g, "lactose").size() == 7);
  CHECK(kg::recipes_with_tag(g, "astronaut").empty());

  const auto& s = fixtures::sample_graph();
  for (const auto& tag : s.tags()) {
    std::vector<std::string> ids;
    for (const auto* r : kg::recipes_with_tag(s, tag)) ids.push_back(r->id);
    CHECK(ids == oracle::ids_with_tag(s, tag));
  }
}

TEST_CASE("ingredient_vocabulary") {
  const auto g = kg::KnowledgeGraph::from_recipes(
      {make("r1", {"a", "b"}, {}, {"t"}), make("r2", {"b", "c"}, {}, {"t"}),
       make("r3", {"d"}, {}, {"u"})});
  CHECK(kg::ingredient_vocabulary(g, "t") == std::set<std::string>{"a", "b", "c"});
  CHECK(kg::ingredient_vocabulary(g, "nope").empty());
  const auto& s = fixtures::sample_graph();
  CHECK(kg::ingredient_vocabulary(s, "vegan") == oracle::vocabulary(s, "vegan"));
  for (const auto& tag : s.tags()) {
    CHECK(kg::ingredient_vocabulary(s, tag) == oracle::vocabulary(s, tag));
  }
}

TEST_CASE("nutrient_stats") {
  const auto g = kg::KnowledgeGraph::from_recipes(
      {make("r1", {"a"}, {{"fat", 1}, {"protein", 2}}, {"t"}),
       make("r2", {"a"}, {{"fat", 1}, {"protein", 4}}, {"t"}),
       make("r3", {"a"}, {{"fat", 1}}, {"t"})});
  const auto flat = kg::nutrient_stats(g, "t", "fat");
  CHECK(flat.mean == 1.0);
  CHECK(flat.stddev == 0.0);
  CHECK(flat.max == 1.0);
  CHECK(flat.count == 3);
  const auto p = kg::nutrient_stats(g, "t", "protein");
  CHECK(p.mean == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(p.stddev == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.max == 4.0);
  CHECK_THROWS_AS(kg::nutrient_stats(g, "t", "fiber"), kg::NoDataError);
  CHECK_THROWS_AS(kg::nutrient_stats(g, "u", "fat"), kg::NoDataError);

  const auto& s = fixtures::sample_graph();
  for (const auto& tag : s.tags()) {
    for (const auto& n : s.nutrient_names()) {
      const auto ref = oracle::nutrient_stats(s, tag, n);
      if (ref.count == 0) continue;
      const auto got = kg::nutrient_stats(s, tag, n);
      CHECK(got.count == ref.count);
      CHECK(std::abs(got.mean - ref.mean) <= 1e-9 * std::max(1.0, ref.mean));
      CHECK(std::abs(got.stddev - ref.stddev) <= 1e-9 * std::max(1.0, ref.stddev));
      CHECK(got.max == ref.max);
    }
  }
}

TEST_CASE("triples") {
  const auto one = kg::KnowledgeGraph::from_recipes(
      {make("r1", {"bread", "butter"}, {{"calories", 90}, {"fat", 4}}, {"vegan"})});
  CHECK(kg::to_triples(one).size() == 6);
  CHECK(kg::to_triples(kg::KnowledgeGraph{}).empty());

  std::ostringstream empty_out;
  kg::write_triples(empty_out, {});
  CHECK(empty_out.str().empty());

  const auto& s = fixtures::sample_graph();
  const auto triples = kg::to_triples(s);
  std::stringstream io;
  kg::write_triples(io, triples);
  const auto back = kg::read_triples(io);
  CHECK(back == triples);
  CHECK(kg::from_triples(back) == s);
}

TEST_CASE("triples preserve awkward strings") {
  auto r = make("r1", {"crème fraîche", "\"quoted\" oil"}, {{"fiber", 1e-7}}, {"low-fat"},
                "Tab\tand \\ slash");
  r.instructions = {"Step with \"quotes\"", "Step\nnewline"};
  const auto g = kg::KnowledgeGraph::from_recipes({r});
  std::stringstream io;
  kg::write_triples(io, kg::to_triples(g));
  CHECK(kg::from_triples(kg::read_triples(io)) == g);
}

TEST_CASE("context serialization") {
  const auto toast = kg::KnowledgeGraph::from_recipes(
      {make("t", {"bread"}, {{"calories", 90}}, {"vegan"}, "Toast")});
  CHECK(kg::serialize_recipe_context(toast.recipes()[0]) ==
        "name: Toast | ingredients: bread | nutrition: calories=90 | tags: vegan");

  Recipe two = make("x", {"a"}, {}, {"vegan"}, "Two");
  two.nutrition = {{"protein", 3}, {"calories", 120.5}};
  const auto line = kg::serialize_recipe_context(two);
  CHECK(line.find("nutrition: calories=120.5; protein=3") != std::string::npos);

  for (const auto& r : fixtures::sample_graph().recipes()) {
    const auto f = kg::parse_recipe_context(kg::serialize_recipe_context(r));
    CHECK(f.title == r.title);
    CHECK(f.ingredients == r.ingredients);
    CHECK(f.nutrition == r.nutrition);
    CHECK(f.tags == r.tags);
  }
  CHECK_THROWS_AS(kg::parse_recipe_context("name: x | ingredients: y"), kg::GraphError);
}

TEST_CASE("JSON record round trip") {
  for (const auto& r : fixtures::sample_graph().recipes()) {
    CHECK(kg::recipe_from_json(kg::recipe_to_json(r)) == r);
  }
}
