// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed below.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "kerl/benchgen.hpp"
#include "kerl/evaluate.hpp"
#include "kerl/json_io.hpp"
#include "kerl/metrics.hpp"
#include "kerl/pipeline.hpp"
#include "oracles.hpp"
#include "stub_server.hpp"

using namespace kerl;
namespace c = kerl::constraints;
namespace fs = std::filesystem;

namespace {

constexpr double kMetricTol = 1e-9;
constexpr double kEndToEndSeconds = 60.0;
constexpr int kCrossPathQueries = 1000;
constexpr int kRoundtripQueries = 10000;
constexpr int kFuzzedMetricPairs = 200;
constexpr int kK2Items = 10000;

struct Outcome {
  bool ok = true;
  std::string detail;
};

class Check {
 public:
  void require(bool cond, const std::string& what) {
    if (!cond && out_.ok) {
      out_.ok = false;
      out_.detail = what;
    }
  }
  Outcome& outcome() { return out_; }

 private:
  Outcome out_;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.ok) ++failures;
  std::cout << (o.ok ? "PASS " : "FAIL ") << name;
  if (!o.detail.empty()) std::cout << ": " << o.detail;
  std::cout << std::endl;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const benchgen::Dataset& seed7_dataset() {
  static const benchgen::Dataset ds = [] {
    benchgen::GenConfig cfg;
    cfg.seed = 7;
    return benchgen::generate_dataset(fixtures::sample_graph(), fixtures::kgqa_catalog(), cfg);
  }();
  return ds;
}

Outcome oracle_end_to_end() {
  Check ck;
  const auto start = std::chrono::steady_clock::now();
  const auto& g = fixtures::sample_graph();
  const auto& cat = fixtures::kgqa_catalog();
  ck.require(g.size() >= 500, "sample corpus has fewer than 500 recipes");
  benchgen::GenConfig cfg;
  cfg.seed = 7;
  ck.require(cfg.tags.size() == 15, "default tag list is not 15 tags");
  const auto ds = benchgen::generate_dataset(g, cat, cfg);
  const pipeline::Recommender rec(g, cat);
  auto oracle = pipeline::oracle_backend(g, cat);
  const auto rep = evaluate::evaluate_kgqa(ds.test, rec, *oracle, {});
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto& a = rep.aggregates;
  ck.require(!ds.test.empty() && a.items == ds.test.size(), "not every test item was scored");
  ck.require(rep.failures == 0, std::to_string(rep.failures) + " failed items");
  ck.require(a.map == 1.0 && a.precision == 1.0 && a.recall == 1.0 && a.f1 == 1.0,
             "aggregates are not all exactly 1");
  ck.require(secs < kEndToEndSeconds, "took " + std::to_string(secs) + " s");
  if (ck.outcome().ok) {
    std::ostringstream d;
    d << a.items << " test items, mAP=P=R=F1=1, " << secs << " s";
    ck.outcome().detail = d.str();
  }
  return ck.outcome();
}

Outcome cross_path() {
  Check ck;
  const auto& g = fixtures::sample_graph();
  const squeal::TripleStore store(g);
  Rng rng(20240607);
  int nonempty = 0;
  for (int i = 0; i < kCrossPathQueries; ++i) {
    const auto q = fixtures::random_query(g, rng, true);
    std::set<std::string> truth;
    for (const auto* r : c::ground_truth(g, q)) truth.insert(r->id);
    nonempty += !truth.empty();
    ck.require(truth == fixtures::squeal_path_truth(g, store, q),
               "mismatch on query " + std::to_string(i));
  }
  if (ck.outcome().ok) {
    ck.outcome().detail = std::to_string(kCrossPathQueries) + " queries, " +
                          std::to_string(nonempty) + " with nonempty answers";
  }
  return ck.outcome();
}

Outcome chunk_invariance() {
  Check ck;
  const auto& g = fixtures::sample_graph();
  const auto& cat = fixtures::kgqa_catalog();
  const pipeline::Recommender rec(g, cat);
  auto oracle = pipeline::oracle_backend(g, cat);
  const auto& ds = seed7_dataset();
  std::vector<benchgen::BenchmarkItem> items = ds.train;
  items.insert(items.end(), ds.val.begin(), ds.val.end());
  items.insert(items.end(), ds.test.begin(), ds.test.end());
  std::size_t multi_chunk = 0;
  for (const auto& item : items) {
    std::size_t max_line = 1;
    for (const auto* r : kg::recipes_with_tag(g, item.tag)) {
      max_line = std::max(max_line, kg::serialize_recipe_context(*r).size());
    }
    std::optional<std::set<std::string>> first;
    for (std::size_t budget : {max_line, 2 * max_line, 10 * max_line,
                               std::numeric_limits<std::size_t>::max()}) {
      const auto res = rec.recommend(item.question, *oracle, {budget, 3, 1});
      if (budget == max_line) multi_chunk += res.per_chunk.size() > 1;
      const auto got = as_set(res.final_titles);
      if (!first) {
        first = got;
      } else {
        ck.require(got == *first, item.id + " differs at budget " + std::to_string(budget));
      }
    }
  }
  if (ck.outcome().ok) {
    ck.outcome().detail = std::to_string(items.size()) + " questions x 4 budgets, " +
                          std::to_string(multi_chunk) + " split into several chunks";
  }
  return ck.outcome();
}

Outcome dataset_shape() {
  Check ck;
  const auto& ds = seed7_dataset();
  const std::size_t n = ds.train.size() + ds.val.size() + ds.test.size();
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& item : *split) {
      ck.require(!item.answers.empty(), item.id + " has no positives");
      ck.require(item.answers.size() <= item.context_size, item.id + " has |R+| > |R(t)|");
    }
  }
  const std::array<std::size_t, 3> sizes = {ds.train.size(), ds.val.size(), ds.test.size()};
  const std::array<double, 3> frac = {0.8, 0.1, 0.1};
  for (int s = 0; s < 3; ++s) {
    ck.require(std::abs(static_cast<double>(sizes[s]) - frac[s] * static_cast<double>(n)) <= 1.0,
               "split " + std::to_string(s) + " has " + std::to_string(sizes[s]) + " of " +
                   std::to_string(n));
  }
  const auto a = fixtures::scratch_dir("acceptance_regen_a");
  const auto b = fixtures::scratch_dir("acceptance_regen_b");
  benchgen::GenConfig cfg;
  cfg.seed = 7;
  json_io::write_dataset(a, benchgen::generate_dataset(fixtures::sample_graph(),
                                                      fixtures::kgqa_catalog(), cfg));
  json_io::write_dataset(b, benchgen::generate_dataset(fixtures::sample_graph(),
                                                      fixtures::kgqa_catalog(), cfg));
  for (const auto* name : {"train.jsonl", "val.jsonl", "test.jsonl", "stats.json"}) {
    const auto x = slurp(fs::path(a) / name);
    ck.require(!x.empty() && x == slurp(fs::path(b) / name), std::string(name) + " differs");
  }
  if (ck.outcome().ok) {
    ck.outcome().detail = std::to_string(n) + " items, splits " + std::to_string(sizes[0]) + "/" +
                          std::to_string(sizes[1]) + "/" + std::to_string(sizes[2]) +
                          ", regeneration byte-identical";
  }
  return ck.outcome();
}

Outcome roundtrips() {
  Check ck;
  const auto& g = fixtures::sample_graph();
  const auto& cat = fixtures::kgqa_catalog();
  const auto vocab = c::vocabulary_from(g);
  Rng rng(99);
  std::size_t checked = 0;
  for (int i = 0; i < kRoundtripQueries; ++i) {
    const auto q = fixtures::random_query(g, rng, i % 4 == 0);
    for (const auto& tpl : cat.templates) {
      const auto text = c::render_question(q, tpl);
      ck.require(c::parse_question(text, vocab, cat) == q, "render/parse mismatch: " + text);
      ++checked;
    }
  }
  std::stringstream io;
  kg::write_triples(io, kg::to_triples(g));
  ck.require(kg::from_triples(kg::read_triples(io)) == g, "triple round trip changed the graph");
  for (const auto& r : g.recipes()) {
    const auto back = kg::parse_recipe_context(kg::serialize_recipe_context(r));
    ck.require(back.title == r.title && back.ingredients == r.ingredients &&
                   back.nutrition == r.nutrition && back.tags == r.tags,
               "context line lost data for " + r.id);
  }
  if (ck.outcome().ok) {
    ck.outcome().detail = std::to_string(checked) + " question round trips, " +
                          std::to_string(g.size()) + " recipes through triples and context lines";
  }
  return ck.outcome();
}

Outcome metric_goldens() {
  Check ck;
  using metrics::tokenize;
  auto near = [&](double got, double want, const std::string& what) {
    ck.require(std::abs(got - want) <= kMetricTol,
               what + " = " + std::to_string(got) + ", wanted " + std::to_string(want));
  };
  const auto s = metrics::retrieval_scores({"a", "b", "c"}, {"a", "b", "d"});
  near(s.precision, 2.0 / 3, "P");
  near(s.recall, 2.0 / 3, "R");
  near(s.f1, 2.0 / 3, "F1");
  near(metrics::average_precision({"a", "b"}, {"a", "x", "b"}), 5.0 / 6, "AP");
  near(metrics::bleu(tokenize("the the the the"), tokenize("the cat sat"), 1), 0.25, "BLEU-1 clip");
  near(metrics::bleu(tokenize("a b"), tokenize("a b c d"), 1), std::exp(-1.0), "BLEU-1 BP");
  near(metrics::rouge_n(tokenize("the cat"), {tokenize("the cat sat")}, 1), 2.0 / 3, "ROUGE-1");
  near(metrics::meteor(tokenize("b a"), tokenize("a b")), 0.5, "METEOR swap");
  const std::vector<double> ln2(7, -std::log(2.0));
  near(metrics::perplexity(ln2), 2.0, "perplexity");
  const auto mae = metrics::nutrient_mae({{{{"protein", 10}}, {{"protein", 8}}},
                                          {{{"protein", 4}}, {{"protein", 5}}}});
  near(mae.mae.at("protein"), 1.5, "MAE");

  Rng rng(4242);
  auto sentence = [&](std::size_t vocab) {
    metrics::Tokens t(1 + rng.index(8));
    for (auto& w : t) w = "w" + std::to_string(rng.index(vocab));
    return t;
  };
  std::vector<metrics::Tokens> cands;
  std::vector<std::vector<metrics::Tokens>> refs;
  for (int i = 0; i < kFuzzedMetricPairs; ++i) {
    const std::size_t vocab = 2 + rng.index(7);
    const auto cand = sentence(vocab);
    const auto ref = sentence(vocab);
    for (int n = 1; n <= 4; ++n) {
      near(metrics::bleu(cand, ref, n), oracle::bleu(cand, ref, n), "fuzzed BLEU");
      near(metrics::rouge_n(cand, {ref}, n), oracle::rouge_n(cand, {ref}, n), "fuzzed ROUGE-N");
    }
    near(metrics::rouge_l(cand, {ref}), oracle::rouge_l(cand, {ref}, 1.2), "fuzzed ROUGE-L");
    near(metrics::meteor(cand, ref), oracle::meteor(cand, ref), "fuzzed METEOR");
    cands.push_back(cand);
    refs.push_back({ref});
  }
  const auto got = metrics::cider(cands, refs);
  const auto want = oracle::cider(cands, refs, 4);
  for (std::size_t i = 0; i < got.size(); ++i) near(got[i], want[i], "fuzzed CIDEr");
  if (ck.outcome().ok) {
    ck.outcome().detail = "goldens within 1e-9, " + std::to_string(kFuzzedMetricPairs) +
                          " fuzzed pairs agree with reference implementations";
  }
  return ck.outcome();
}

Outcome k_half_sampler() {
  Check ck;
  const auto& g = fixtures::sample_graph();
  const auto& cat = fixtures::kgqa_catalog();
  benchgen::GenConfig cfg;
  Rng rng(31337);
  std::size_t capped = 0;
  std::size_t exhausted = 0;
  for (int i = 0; i < kK2Items;) {
    const auto& tag = cfg.tags[rng.index(cfg.tags.size())];
    benchgen::BenchmarkItem item;
    try {
      item = benchgen::generate_kgqa_item(g, tag, cat, rng, cfg);
    } catch (const benchgen::GenerationError&) {
      // Rejection sampling may give up on a tiny tag; that is not a sampler failure.
      ++exhausted;
      continue;
    }
    item.id = tag + "#" + std::to_string(i++);
    benchgen::GenConfig kcfg = cfg;
    kcfg.k_train = 2 * rng.between(1, 20);
    const auto ex = benchgen::sample_training_context(item, g, kcfg, rng);
    const auto half = static_cast<std::size_t>(kcfg.k_train / 2);
    ck.require(ex.positives <= half, item.id + ": too many positives");
    ck.require(ex.negatives <= half, item.id + ": too many negatives");
    ck.require(ex.context_lines.size() == ex.positives + ex.negatives, item.id + ": line count");
    std::vector<std::string> in_context;
    for (const auto& line : ex.context_lines) {
      const auto r = kg::parse_recipe_context(line);
      if (c::satisfies(r, item.query)) in_context.push_back(r.title);
    }
    ck.require(in_context == ex.answer_titles, item.id + ": answers differ from in-context positives");
    ck.require(ex.answer_titles.size() == ex.positives, item.id + ": positive count");
    capped += ex.positives == half;
  }
  if (ck.outcome().ok) {
    ck.outcome().detail = std::to_string(kK2Items) + " items, " + std::to_string(capped) +
                          " hit the K/2 positive cap, " + std::to_string(exhausted) +
                          " generation attempts gave up";
  }
  return ck.outcome();
}

Outcome inference_defaults() {
  Check ck;
  stub::CompletionServer server(
      [](const nlohmann::json&, std::size_t) { return stub::text_reply("Apple Bread"); });
  pipeline::BackendConfig cfg;
  cfg.kind = pipeline::BackendKind::Remote;
  cfg.endpoint = server.endpoint();
  auto backend = pipeline::remote_backend(cfg);
  const pipeline::Recommender rec(fixtures::preference_graph(), fixtures::kgqa_catalog());
  rec.recommend(fixtures::banana_bread_query(), *backend, {200, 3, 1});
  const auto reqs = server.requests();
  ck.require(!reqs.empty(), "stub saw no requests");
  for (const auto& r : reqs) {
    const auto& b = r.body;
    ck.require(b.contains("temperature") && b["temperature"].get<double>() == 0.2,
               "temperature is not 0.2");
    ck.require(b.contains("num_beams") && b["num_beams"].get<int>() == 1, "num_beams is not 1");
    ck.require(b.contains("max_tokens") && b["max_tokens"].get<int>() == 1024,
               "max new tokens is not 1024");
  }
  if (ck.outcome().ok) {
    ck.outcome().detail = std::to_string(reqs.size()) +
                          " requests with temperature 0.2, num_beams 1, max_tokens 1024";
  }
  return ck.outcome();
}

Outcome percentile_filter() {
  Check ck;
  Rng rng(95);
  std::vector<metrics::NutrientPair> pairs;
  for (int i = 0; i < 5000; ++i) {
    // Pareto(alpha = 1.2) truth; errors grow with the value.
    const double truth = 10.0 / std::pow(1.0 - rng.unit(), 1.0 / 1.2);
    const double pred = truth * (1.0 + rng.uniform(-0.3, 0.3));
    pairs.push_back({{{"sodium", truth}}, {{"sodium", pred}}});
  }
  const double all = metrics::nutrient_mae(pairs).mae.at("sodium");
  const double filtered = metrics::nutrient_mae(pairs, 95.0).mae.at("sodium");
  ck.require(filtered < all, "filtered MAE " + std::to_string(filtered) + " >= unfiltered " +
                                 std::to_string(all));
  if (ck.outcome().ok) {
    std::ostringstream d;
    d << "MAE " << all << " -> " << filtered << " at p=95";
    ck.outcome().detail = d.str();
  }
  return ck.outcome();
}

}  // namespace

int main() {
  criterion("oracle end-to-end", oracle_end_to_end);
  criterion("cross-path ground truth", cross_path);
  criterion("chunk invariance", chunk_invariance);
  criterion("dataset shape", dataset_shape);
  criterion("roundtrips", roundtrips);
  criterion("metric golden values", metric_goldens);
  criterion("K/2 sampler", k_half_sampler);
  criterion("inference defaults", inference_defaults);
  criterion("percentile filter", percentile_filter);
  return failures == 0 ? 0 : 1;
}
