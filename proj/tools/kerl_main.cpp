// kerl command-line interface.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "kerl/benchgen.hpp"
#include "kerl/evaluate.hpp"
#include "kerl/json_io.hpp"
#include "kerl/metrics.hpp"
#include "kerl/pipeline.hpp"
#include "kerl/service.hpp"
#include "kerl/text.hpp"

namespace fs = std::filesystem;
using namespace kerl;
using nlohmann::json;

namespace {

struct Common {
  std::string corpus = std::string(KERL_DATA_DIR) + "/sample_corpus.jsonl";
  std::string format = "jsonl";
  std::string templates = std::string(KERL_DATA_DIR) + "/templates/kgqa_questions.json";
  std::uint64_t seed = 7;
  std::string backend = "oracle";
  std::string endpoint;
  int parallelism = 1;
  std::size_t chunk_budget = 8000;
  std::string out;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

kg::CorpusFormat parse_format(const std::string& f) {
  if (f == "jsonl") return kg::CorpusFormat::Jsonl;
  if (f == "triples") return kg::CorpusFormat::Triples;
  throw UsageError("unknown corpus format '" + f + "'");
}

kg::KnowledgeGraph load_graph(const Common& c) {
  return kg::ingest_file(c.corpus, parse_format(c.format)).graph;
}

pipeline::BackendConfig backend_config(const Common& c) {
  pipeline::BackendConfig cfg;
  if (c.backend == "oracle") {
    cfg.kind = pipeline::BackendKind::Oracle;
  } else if (c.backend == "remote") {
    cfg.kind = pipeline::BackendKind::Remote;
    cfg.endpoint = c.endpoint;
    if (const char* token = std::getenv("KERL_BACKEND_TOKEN")) cfg.auth_token = token;
  } else {
    throw UsageError("backend must be 'oracle' or 'remote'");
  }
  cfg.parallelism = c.parallelism;
  cfg.validate();
  return cfg;
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return text::sha256_hex(ss.str());
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

std::vector<benchgen::PromptPair> read_prompts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prompts '" + path + "'");
  std::vector<benchgen::PromptPair> out;
  for (const auto& row : json_io::read_jsonl(in)) out.push_back(json_io::prompt_from_json(row));
  return out;
}

service::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph recipe recommendation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Common c;
  app.add_option("--corpus", c.corpus, "Recipe corpus file");
  app.add_option("--format", c.format, "Corpus format: jsonl or triples");
  app.add_option("--templates", c.templates, "Question template catalog (JSON)");
  app.add_option("--seed", c.seed, "Random seed");
  app.add_option("--backend", c.backend, "Model backend: oracle or remote");
  app.add_option("--endpoint", c.endpoint,
                 "Remote completion endpoint (token via KERL_BACKEND_TOKEN)");
  app.add_option("--parallelism", c.parallelism, "Concurrent backend calls");
  app.add_option("--chunk-budget", c.chunk_budget, "Context characters per prompt");
  app.add_option("--out", c.out, "Output file or directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and report statistics");
  bool skip_invalid = false;
  std::string export_triples;
  ingest->add_flag("--skip-invalid", skip_invalid, "Drop invalid records instead of failing");
  ingest->add_option("--export-triples", export_triples, "Write the triple view to this file");

  // ask
  auto* ask = app.add_subcommand("ask", "Recommend recipes for a question");
  std::string question, query_file;
  bool ask_json = false;
  ask->add_option("question", question, "Question text");
  ask->add_option("--query", query_file, "Structured query (JSON file) instead of text");
  ask->add_flag("--json", ask_json, "Print the full result as JSON");

  // benchgen
  auto* gen = app.add_subcommand("benchgen", "Generate benchmark datasets");
  std::string task = "kgqa", prompt_templates;
  int per_tag = 20, per_recipe = 1, k_train = 20;
  std::vector<std::string> tags;
  gen->add_option("--task", task, "kgqa, nutri or recipe")->check(CLI::IsMember({"kgqa", "nutri", "recipe"}));
  gen->add_option("--per-tag", per_tag, "Questions per tag (kgqa)");
  gen->add_option("--tags", tags, "Tags to generate for (kgqa)");
  gen->add_option("--k", k_train, "Training context size K");
  gen->add_option("--prompts", prompt_templates, "Prompt template file (nutri/recipe)");
  gen->add_option("--per-recipe", per_recipe, "Prompts per recipe (nutri/recipe)");

  // sample-train
  auto* train = app.add_subcommand("sample-train", "Sample fine-tuning contexts (K/2 rule)");
  std::string train_dataset;
  train->add_option("--dataset", train_dataset, "Benchmark items (JSONL)")->required();
  train->add_option("--k", k_train, "Context size K");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate recommendations on a benchmark split");
  std::string eval_dataset, ap_norm = "truth";
  eval->add_option("--dataset", eval_dataset, "Benchmark items (JSONL)")->required();
  eval->add_option("--ap-norm", ap_norm, "AP normalization: truth (|Y|) or found (|M|)")
      ->check(CLI::IsMember({"truth", "found"}));

  // nutri-eval / recipe-eval
  auto* nutri = app.add_subcommand("nutri-eval", "Score nutrient estimates (MAE)");
  auto* recipe = app.add_subcommand("recipe-eval", "Score generated recipes (text metrics)");
  std::string prompts_file, predictions_file;
  std::optional<double> pct;
  for (auto* sub : {nutri, recipe}) {
    sub->add_option("--dataset", prompts_file, "Prompt pairs (JSONL)")->required();
    sub->add_option("--predictions", predictions_file, "Model outputs (JSONL {text, logprobs?})");
  }
  nutri->add_option("--percentile", pct, "Also report MAE below this truth percentile");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string host = "127.0.0.1", data_dir = "kerl-data";
  int port = 8080;
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port");
  serve->add_option("--data-dir", data_dir, "Directory for job outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*ingest) {
      kg::IngestOptions opts;
      opts.skip_invalid = skip_invalid;
      auto res = kg::ingest_file(c.corpus, parse_format(c.format), opts);
      for (const auto& d : res.rejected) {
        std::cerr << "rejected line " << d.line << ": " << d.reason << '\n';
      }
      json summary = {{"recipes", res.graph.size()},
                      {"tags", res.graph.tag_index().size()},
                      {"ingredients", res.graph.ingredient_index().size()},
                      {"nutrients", res.graph.nutrient_names()},
                      {"rejected", res.rejected.size()}};
      if (!export_triples.empty()) {
        std::ofstream out(export_triples, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + export_triples + "'");
        kg::write_triples(out, kg::to_triples(res.graph));
      }
      std::cout << summary.dump(2) << '\n';
      return 0;
    }

    if (*ask) {
      if (question.empty() == query_file.empty()) {
        throw UsageError("ask needs either a question or --query");
      }
      const auto graph = load_graph(c);
      const auto catalog = constraints::load_catalog(c.templates);
      const auto backend = pipeline::make_backend(backend_config(c), graph, catalog);
      const pipeline::Recommender rec(graph, catalog);
      pipeline::RecommendConfig rc;
      rc.chunk_budget = c.chunk_budget;
      rc.parallelism = c.parallelism;
      pipeline::RecommendationResult result;
      if (!query_file.empty()) {
        std::ifstream in(query_file);
        if (!in) throw std::runtime_error("cannot open '" + query_file + "'");
        result = rec.recommend(json_io::query_from_json(json::parse(in)), *backend, rc);
      } else {
        result = rec.recommend(question, *backend, rc);
      }
      if (result.context_size == 0) {
        std::cerr << "warning: no recipes tagged '" << result.query.tag << "'\n";
      }
      if (result.any_failed) std::cerr << "warning: some context chunks failed\n";
      if (ask_json) {
        std::cout << json_io::to_json(result).dump(2) << '\n';
      } else {
        for (const auto& t : result.final_titles) std::cout << t << '\n';
      }
      return 0;
    }

    if (*gen) {
      if (c.out.empty()) throw UsageError("benchgen needs --out");
      const auto graph = load_graph(c);
      if (task == "kgqa") {
        benchgen::GenConfig cfg;
        cfg.seed = c.seed;
        cfg.n_questions_per_tag = per_tag;
        cfg.k_train = k_train;
        if (!tags.empty()) cfg.tags = tags;
        const auto catalog = constraints::load_catalog(c.templates);
        const auto ds = benchgen::generate_dataset(graph, catalog, cfg);
        json_io::write_dataset(c.out, ds);
        for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl", "stats.json"}) {
          std::cout << file_digest(fs::path(c.out) / name) << "  " << name << '\n';
        }
        return 0;
      }
      const bool nutri_task = task == "nutri";
      if (prompt_templates.empty()) {
        prompt_templates = std::string(KERL_DATA_DIR) + "/templates/" +
                           (nutri_task ? "nutri_prompts.json" : "recipe_prompts.json");
      }
      const auto templates = benchgen::load_prompt_templates(prompt_templates);
      Rng rng(c.seed ^ text::fnv1a64(task));
      std::vector<std::string> diagnostics;
      std::vector<json> rows;
      for (const auto& r : graph.recipes()) {
        const auto pairs =
            nutri_task
                ? benchgen::generate_nutri_prompts(r, templates, rng, per_recipe, &diagnostics)
                : benchgen::generate_recipe_prompts(r, templates, rng, per_recipe, &diagnostics);
        for (const auto& p : pairs) rows.push_back(json_io::to_json(p));
      }
      for (const auto& d : diagnostics) std::cerr << "skipped: " << d << '\n';
      fs::create_directories(c.out);
      const auto path = fs::path(c.out) / "prompts.jsonl";
      std::ofstream out(path, std::ios::binary);
      json_io::write_jsonl(out, rows);
      out.close();
      std::cout << file_digest(path) << "  prompts.jsonl\n";
      return 0;
    }

    if (*train) {
      if (c.out.empty()) throw UsageError("sample-train needs --out");
      const auto graph = load_graph(c);
      benchgen::GenConfig cfg;
      cfg.k_train = k_train;
      cfg.validate();
      Rng rng(c.seed);
      std::vector<json> rows;
      for (const auto& item : json_io::read_items(train_dataset)) {
        rows.push_back(json_io::to_json(benchgen::sample_training_context(item, graph, cfg, rng)));
      }
      std::ostringstream out;
      json_io::write_jsonl(out, rows);
      write_text(c.out, out.str());
      return 0;
    }

    if (*eval) {
      const auto graph = load_graph(c);
      const auto catalog = constraints::load_catalog(c.templates);
      const auto backend = pipeline::make_backend(backend_config(c), graph, catalog);
      const pipeline::Recommender rec(graph, catalog);
      evaluate::KgqaOptions opts;
      opts.recommend.chunk_budget = c.chunk_budget;
      opts.recommend.parallelism = c.parallelism;
      opts.ap_norm =
          ap_norm == "found" ? metrics::ApNormalization::Found : metrics::ApNormalization::Truth;
      const auto report =
          evaluate::evaluate_kgqa(json_io::read_items(eval_dataset), rec, *backend, opts);
      if (!c.out.empty()) {
        write_text(fs::path(c.out) / "report.json", metrics::report_to_json(report) + "\n");
        write_text(fs::path(c.out) / "report.csv", metrics::report_to_csv(report));
      }
      const auto& a = report.aggregates;
      std::cout << "items=" << a.items << " failures=" << report.failures
                << " mAP=" << text::format_number(a.map)
                << " P=" << text::format_number(a.precision)
                << " R=" << text::format_number(a.recall) << " F1=" << text::format_number(a.f1)
                << '\n';
      return 0;
    }

    if (*nutri || *recipe) {
      const auto prompts = read_prompts(prompts_file);
      evaluate::Predictions preds;
      if (!predictions_file.empty()) {
        preds = evaluate::read_predictions(predictions_file);
      } else if (c.backend == "remote") {
        auto backend = pipeline::remote_backend(backend_config(c));
        preds = evaluate::query_backend(prompts, *backend);
      } else {
        throw UsageError("needs --predictions or --backend remote");
      }
      const std::string report = *nutri
                                     ? evaluate::to_json(evaluate::evaluate_nutri(prompts, preds, pct))
                                     : evaluate::to_json(evaluate::evaluate_recipe(prompts, preds));
      if (!c.out.empty()) write_text(c.out, report + "\n");
      std::cout << report << '\n';
      return 0;
    }

    if (*serve) {
      service::ServiceConfig cfg;
      cfg.host = host;
      cfg.port = port;
      cfg.corpus_path = c.corpus;
      cfg.corpus_format = parse_format(c.format);
      cfg.templates_path = c.templates;
      cfg.chunk_budget = c.chunk_budget;
      cfg.data_dir = data_dir;
      cfg.remote.endpoint = c.endpoint;
      cfg.remote.kind = pipeline::BackendKind::Remote;
      cfg.remote.parallelism = c.parallelism;
      if (const char* token = std::getenv("KERL_BACKEND_TOKEN")) cfg.remote.auth_token = token;
      service::Service svc(cfg);
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const int bound = svc.start();
      std::cerr << "listening on " << host << ':' << bound << " ("
                << svc.graph().size() << " recipes)\n";
      svc.wait();
      g_service = nullptr;
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const kg::IngestError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& d : e.diagnostics()) {
      std::cerr << "  line " << d.line << ": " << d.reason << '\n';
    }
    return 1;
  } catch (const constraints::QuestionParseError& e) {
    std::cerr << "error: " << e.what() << " (bytes " << e.span_begin() << '-' << e.span_end()
              << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
