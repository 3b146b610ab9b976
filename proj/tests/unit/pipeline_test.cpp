#include <doctest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <set>

#include "fixtures.hpp"
#include "kerl/benchgen.hpp"
#include "kerl/metrics.hpp"
#include "kerl/pipeline.hpp"
#include "kerl/text.hpp"
#include "stub_server.hpp"

using namespace kerl;
using namespace kerl::pipeline;
namespace c = kerl::constraints;

namespace {

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

kg::Recipe same_length(int i) {
  kg::Recipe r;
  r.id = "r" + std::to_string(i);
  r.title = "Dish " + std::to_string(i);
  r.ingredients = {"salt"};
  r.nutrition = {{"fat", 1}};
  r.tags = {"t"};
  return r;
}

// Returns a fixed reply and counts calls.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::function<GenerationResult(const std::string&, std::size_t, int)> f)
      : f_(std::move(f)) {}
  GenerationResult generate(const std::string& prompt, std::size_t chunk) override {
    return f_(prompt, chunk, calls++);
  }
  std::atomic<int> calls{0};

 private:
  std::function<GenerationResult(const std::string&, std::size_t, int)> f_;
};

}  // namespace

TEST_CASE("retrieval matches the graph index") {
  std::vector<kg::Recipe> rs;
  for (int i = 0; i < 7; ++i) rs.push_back(same_length(i));
  const auto g = kg::KnowledgeGraph::from_recipes(rs);
  CHECK(retrieve_context(g, "t").size() == 7);
  CHECK(retrieve_context(g, "astronaut").empty());

  const auto& s = fixtures::sample_graph();
  const squeal::TripleStore store(s);
  for (const auto& tag : s.tags()) {
    CHECK(retrieve_context(store, s, tag) == kg::recipes_with_tag(s, tag));
  }
}

TEST_CASE("greedy chunking arithmetic") {
  const auto g = kg::KnowledgeGraph::from_recipes({same_length(1), same_length(2), same_length(3)});
  const auto all = kg::recipes_with_tag(g, "t");
  const std::size_t len = kg::serialize_recipe_context(*all[0]).size();
  const auto chunks = chunk_context(all, 2 * len + 1 + len / 2);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].lines.size() == 2);
  CHECK(chunks[1].lines.size() == 1);
  CHECK(chunks[0].char_budget_used == 2 * len + 1);

  CHECK(chunk_context(all, 1'000'000).size() == 1);
  CHECK(chunk_context(all, 1).size() == 3);
  CHECK(chunk_context({}, 10).empty());
  CHECK_THROWS(chunk_context(all, 0));
}

TEST_CASE("chunking is a lossless, greedy partition") {
  const auto& g = fixtures::sample_graph();
  const auto recipes = g.recipes();
  Rng rng(6);
  for (int trial = 0; trial < 10000; ++trial) {
    kg::RecipeList list;
    const std::size_t n = rng.index(12);
    for (std::size_t i = 0; i < n; ++i) list.push_back(&recipes[rng.index(recipes.size())]);
    const std::size_t budget = 1 + rng.index(1500);
    const auto chunks = chunk_context(list, budget);
    std::vector<std::string> flat;
    for (std::size_t k = 0; k < chunks.size(); ++k) {
      const auto& ch = chunks[k];
      REQUIRE_FALSE(ch.lines.empty());
      CHECK(ch.index == k);
      CHECK(ch.char_budget_used == text::join(ch.lines, "\n").size());
      CHECK((ch.char_budget_used <= budget || ch.lines.size() == 1));
      if (k + 1 < chunks.size()) {
        CHECK(ch.char_budget_used + 1 + chunks[k + 1].lines.front().size() > budget);
      }
      flat.insert(flat.end(), ch.lines.begin(), ch.lines.end());
    }
    REQUIRE(flat.size() == list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      CHECK(flat[i] == kg::serialize_recipe_context(*list[i]));
    }
  }
}

TEST_CASE("prompt assembly round trip") {
  const std::vector<std::string> lines = {"name: A | ingredients: x | nutrition:  | tags: t"};
  const auto p = assemble_prompt("Which?", lines);
  CHECK(p == "Which?\nContext:\nname: A | ingredients: x | nutrition:  | tags: t\nAnswer with "
             "recipe names only, one per line.");
  const auto parts = split_prompt(p);
  CHECK(parts.question == "Which?");
  CHECK(parts.lines == lines);
  CHECK(split_prompt(assemble_prompt("Q", {})).lines.empty());
  CHECK_THROWS_AS(split_prompt("no header"), PromptFormatError);
}

TEST_CASE("answer list parsing") {
  CHECK(parse_answer_list("1. Fudge Pie\n2. Pasta Pascal") ==
        std::vector<std::string>{"fudge pie", "pasta pascal"});
  CHECK(parse_answer_list("").empty());
  CHECK(parse_answer_list("- A\n* B\n\xE2\x80\xA2 C\n3) D\nA.\n\n") ==
        std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(parse_answer_list("Aunt Peg's  Banana Bread ") ==
        std::vector<std::string>{text::title_key("Aunt Peg's Banana Bread")});
  // A number without a following space is part of the title.
  CHECK(parse_answer_list("7.5 Minute Eggs") == std::vector<std::string>{"7.5 minute eggs"});
}

TEST_CASE("oracle backend answers exactly") {
  const auto& g = fixtures::preference_graph();
  const auto& cat = fixtures::kgqa_catalog();
  auto oracle = oracle_backend(g, cat);
  const auto q = fixtures::banana_bread_query();
  const auto question = c::render_question(q, *cat.find("give_me"));
  const auto part = c::partition(g, q);
  REQUIRE(part.positives.size() == 3);

  std::vector<std::string> lines;
  for (std::size_t i = 0; i < 2; ++i) lines.push_back(kg::serialize_recipe_context(*part.positives[i]));
  for (std::size_t i = 0; i < 3; ++i) lines.push_back(kg::serialize_recipe_context(*part.negatives[i]));
  const auto res = oracle->generate(assemble_prompt(question, lines), 0);
  CHECK(as_set(parse_answer_list(res.text)) ==
        std::set<std::string>{text::title_key(part.positives[0]->title),
                              text::title_key(part.positives[1]->title)});

  std::vector<std::string> negs;
  for (const auto* r : part.negatives) negs.push_back(kg::serialize_recipe_context(*r));
  CHECK(oracle->generate(assemble_prompt(question, negs), 0).text.empty());
}

TEST_CASE("oracle recommendations equal the generated answers") {
  const auto& g = fixtures::sample_graph();
  const auto& cat = fixtures::kgqa_catalog();
  const Recommender rec(g, cat);
  auto oracle = oracle_backend(g, cat);
  benchgen::GenConfig cfg;
  Rng rng(41);
  for (const auto& tag : cfg.tags) {
    for (int i = 0; i < 4; ++i) {
      const auto item = benchgen::generate_kgqa_item(g, tag, cat, rng, cfg);
      for (std::size_t budget : {std::size_t{300}, std::size_t{8000}}) {
        const auto res = rec.recommend(item.question, *oracle, {budget, 3, 1});
        CHECK(as_set(res.final_titles) == as_set(item.answers));
        CHECK_FALSE(res.any_failed);
        CHECK(res.backend_calls == res.per_chunk.size());
        CHECK(res.query == item.query);
      }
      const auto structured = rec.recommend(item.query, *oracle, {});
      CHECK(as_set(structured.final_titles) == as_set(item.answers));
    }
  }
}

TEST_CASE("unknown tag means no context and no backend calls") {
  const auto& g = fixtures::sample_graph();
  const Recommender rec(g, fixtures::kgqa_catalog());
  ScriptedBackend backend([](const std::string&, std::size_t, int) { return GenerationResult{}; });
  const auto res = rec.recommend("Give me astronaut recipes with salt and without milk.", backend, {});
  CHECK(res.final_titles.empty());
  CHECK(res.backend_calls == 0);
  CHECK(backend.calls == 0);
  CHECK(res.context_size == 0);
}

TEST_CASE("hallucinated titles are recorded but not returned") {
  const auto& g = fixtures::preference_graph();
  const Recommender rec(g, fixtures::kgqa_catalog());
  ScriptedBackend backend([](const std::string&, std::size_t, int) {
    return GenerationResult{"1. Aunt Peg's Banana Bread\n2. Moon Cheese Souffle", std::nullopt, 0};
  });
  const auto res = rec.recommend(fixtures::banana_bread_query(), backend, {});
  CHECK(res.final_titles == std::vector<std::string>{"Aunt Peg's Banana Bread"});
  REQUIRE(res.per_chunk.size() == 1);
  CHECK(res.per_chunk[0].hallucinated == std::vector<std::string>{"moon cheese souffle"});
}

TEST_CASE("transport failures are retried per chunk") {
  const auto& g = fixtures::preference_graph();
  const Recommender rec(g, fixtures::kgqa_catalog());
  ScriptedBackend flaky([](const std::string&, std::size_t chunk, int call) -> GenerationResult {
    if (call < 2) throw BackendError(chunk, "flaky");
    return {"Fresh Apricot Praline Butter", std::nullopt, 0};
  });
  const auto ok = rec.recommend(fixtures::banana_bread_query(), flaky, {});
  CHECK(ok.per_chunk[0].attempts == 3);
  CHECK_FALSE(ok.per_chunk[0].failed);
  CHECK(ok.final_titles == std::vector<std::string>{"Fresh Apricot Praline Butter"});

  ScriptedBackend dead([](const std::string&, std::size_t chunk, int) -> GenerationResult {
    throw BackendError(chunk, "down");
  });
  const auto bad = rec.recommend(fixtures::banana_bread_query(), dead, {});
  CHECK(bad.any_failed);
  CHECK(bad.per_chunk[0].failed);
  CHECK(bad.per_chunk[0].attempts == 3);
  CHECK(dead.calls == 3);
  CHECK(bad.final_titles.empty());

  ScriptedBackend broken([](const std::string&, std::size_t, int) -> GenerationResult {
    throw std::logic_error("bug");
  });
  CHECK_THROWS_AS(rec.recommend(fixtures::banana_bread_query(), broken, {}), std::logic_error);
  CHECK_THROWS_AS(rec.recommend(fixtures::banana_bread_query(), broken, {8000, 3, 4}),
                  std::logic_error);
}

TEST_CASE("parallel workers give the serial answer") {
  const auto& g = fixtures::sample_graph();
  const auto& cat = fixtures::kgqa_catalog();
  const Recommender rec(g, cat);
  auto oracle = oracle_backend(g, cat);
  benchgen::GenConfig cfg;
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    const auto item = benchgen::generate_kgqa_item(g, cfg.tags[i % cfg.tags.size()], cat, rng, cfg);
    const auto serial = rec.recommend(item.question, *oracle, {400, 3, 1});
    const auto parallel = rec.recommend(item.question, *oracle, {400, 3, 4});
    CHECK(serial.final_titles == parallel.final_titles);
    CHECK(serial.per_chunk.size() == parallel.per_chunk.size());
  }
}

TEST_CASE("remote backend wire format") {
  stub::CompletionServer server([](const nlohmann::json&, std::size_t) {
    return stub::text_reply("Apple Bread\nMom's Raisin Rock Cookies");
  });
  BackendConfig cfg;
  cfg.kind = BackendKind::Remote;
  cfg.endpoint = server.endpoint();
  cfg.auth_token = "secret";
  auto backend = remote_backend(cfg);
  const auto res = backend->generate("hello", 0);
  CHECK(res.text == "Apple Bread\nMom's Raisin Rock Cookies");
  CHECK_FALSE(res.token_logprobs.has_value());
  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 1);
  CHECK(reqs[0].body.at("prompt") == "hello");
  CHECK(reqs[0].body.at("temperature").get<double>() == 0.2);
  CHECK(reqs[0].body.at("num_beams").get<int>() == 1);
  CHECK(reqs[0].body.at("max_tokens").get<int>() == 1024);
  CHECK(reqs[0].body.at("want_logprobs").get<bool>() == false);
  CHECK(reqs[0].authorization == "Bearer secret");
}

TEST_CASE("remote backend failures") {
  stub::CompletionServer server([](const nlohmann::json& req, std::size_t) -> stub::Reply {
    const auto prompt = req.at("prompt").get<std::string>();
    if (prompt == "garbage") return {200, "not json"};
    if (prompt == "bad-logprob") return {200, R"({"text":"x","logprobs":[0.5]})"};
    return {500, "{}"};
  });
  BackendConfig cfg;
  cfg.kind = BackendKind::Remote;
  cfg.endpoint = server.endpoint();
  auto backend = remote_backend(cfg);
  try {
    backend->generate("boom", 4);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.chunk_index() == 4);
  }
  CHECK_THROWS_AS(backend->generate("garbage", 0), BackendError);
  CHECK_THROWS_AS(backend->generate("bad-logprob", 0), BackendError);

  // Three 500s mark the chunk failed.
  const auto& g = fixtures::preference_graph();
  const Recommender rec(g, fixtures::kgqa_catalog());
  const auto before = server.requests().size();
  const auto res = rec.recommend(fixtures::banana_bread_query(), *backend, {});
  CHECK(res.per_chunk[0].failed);
  CHECK(res.per_chunk[0].attempts == 3);
  CHECK(server.requests().size() - before == 3);

  BackendConfig closed = cfg;
  closed.endpoint = "http://127.0.0.1:1/none";
  closed.timeout_ms = 500;
  CHECK_THROWS_AS(remote_backend(closed)->generate("x", 0), BackendError);
  BackendConfig https = cfg;
  https.endpoint = "https://example.invalid/x";
  CHECK_THROWS_AS(remote_backend(https), std::invalid_argument);
}

TEST_CASE("remote log-probabilities feed perplexity") {
  stub::CompletionServer server([](const nlohmann::json& req, std::size_t) -> stub::Reply {
    CHECK(req.at("want_logprobs").get<bool>());
    const double l = -std::log(2.0);
    return {200, nlohmann::json{{"text", "ab"}, {"logprobs", {{"a", l}, {{"token", "b"}, {"logprob", l}}}}}.dump()};
  });
  BackendConfig cfg;
  cfg.kind = BackendKind::Remote;
  cfg.endpoint = server.endpoint();
  cfg.want_logprobs = true;
  const auto res = remote_backend(cfg)->generate("p", 0);
  REQUIRE(res.token_logprobs.has_value());
  REQUIRE(res.token_logprobs->size() == 2);
  CHECK((*res.token_logprobs)[0].first == "a");
  CHECK((*res.token_logprobs)[1].first == "b");
  std::vector<double> lps;
  for (const auto& [_, lp] : *res.token_logprobs) lps.push_back(lp);
  CHECK(std::abs(metrics::perplexity(lps) - 2.0) <= 1e-12);
}
