#include "kerl/pipeline.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <map>
#include <set>
#include <thread>
#include <unordered_set>

#include "kerl/text.hpp"

namespace kerl::pipeline {

namespace c = kerl::constraints;

kg::RecipeList retrieve_context(const squeal::TripleStore& store, const kg::KnowledgeGraph& kg,
                                const std::string& tag) {
  const auto ast = squeal::template_ast(squeal::TemplateId::TaggedRecipes, {{"tag", tag}});
  const auto table = squeal::execute(store, ast);
  std::unordered_set<std::string> ids;
  for (const auto& row : table.rows) ids.insert(row.at(0).text);
  kg::RecipeList out;
  if (ids.empty()) return out;
  for (const auto& r : kg.recipes()) {
    if (ids.count(r.id)) out.push_back(&r);
  }
  return out;
}

kg::RecipeList retrieve_context(const kg::KnowledgeGraph& kg, const std::string& tag) {
  return retrieve_context(squeal::TripleStore(kg), kg, tag);
}

std::vector<ContextChunk> chunk_context(const kg::RecipeList& recipes, std::size_t budget_chars) {
  if (budget_chars == 0) throw std::invalid_argument("chunk budget must be >= 1");
  std::vector<ContextChunk> chunks;
  for (const auto* r : recipes) {
    std::string line = kg::serialize_recipe_context(*r);
    const bool fits = !chunks.empty() &&
                      chunks.back().char_budget_used + 1 + line.size() <= budget_chars;
    if (fits) {
      chunks.back().char_budget_used += 1 + line.size();
    } else {
      ContextChunk fresh;
      fresh.index = chunks.size();
      fresh.char_budget_used = line.size();
      chunks.push_back(std::move(fresh));
    }
    chunks.back().lines.push_back(std::move(line));
    chunks.back().recipe_titles.push_back(r->title);
  }
  return chunks;
}

std::string assemble_prompt(std::string_view question, const std::vector<std::string>& lines) {
  std::string out(question);
  out += kContextHeader;
  out += text::join(lines, "\n");
  out += kAnswerInstruction;
  return out;
}

PromptParts split_prompt(std::string_view prompt) {
  const auto header = prompt.find(kContextHeader);
  if (header == std::string_view::npos) {
    throw PromptFormatError("prompt has no context header");
  }
  if (!text::ends_with(prompt, kAnswerInstruction)) {
    throw PromptFormatError("prompt does not end with the answer instruction");
  }
  const auto body_begin = header + kContextHeader.size();
  const auto body_end = prompt.size() - kAnswerInstruction.size();
  if (body_end < body_begin) throw PromptFormatError("prompt context block is truncated");
  PromptParts parts;
  parts.question = std::string(prompt.substr(0, header));
  const auto body = prompt.substr(body_begin, body_end - body_begin);
  if (!body.empty()) parts.lines = text::split(body, "\n");
  return parts;
}

namespace {

std::string_view strip_marker(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  if (!s.empty() && (s.front() == '-' || s.front() == '*')) {
    s.remove_prefix(1);
    return s;
  }
  if (text::starts_with(s, "\xE2\x80\xA2")) {  // bullet
    s.remove_prefix(3);
    return s;
  }
  std::size_t digits = 0;
  while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
  if (digits > 0 && digits + 1 < s.size() && (s[digits] == '.' || s[digits] == ')') &&
      std::isspace(static_cast<unsigned char>(s[digits + 1]))) {
    s.remove_prefix(digits + 1);
  }
  return s;
}

}  // namespace

std::vector<std::string> parse_answer_list(std::string_view text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& raw : text::split(text, "\n")) {
    auto key = text::title_key(strip_marker(raw));
    if (key.empty() || !seen.insert(key).second) continue;
    out.push_back(std::move(key));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backends

void BackendConfig::validate() const {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  if (num_beams < 1) throw std::invalid_argument("num_beams must be >= 1");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (kind == BackendKind::Remote && endpoint.empty()) {
    throw std::invalid_argument("remote backend needs an endpoint");
  }
}

GenerationResult OracleBackend::generate(const std::string& prompt, std::size_t) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto parts = split_prompt(prompt);
  const auto query = c::parse_question(parts.question, vocab_, catalog_);
  std::vector<std::string> titles;
  for (const auto& line : parts.lines) {
    const auto fields = kg::parse_recipe_context(line);
    if (c::satisfies(fields, query)) titles.push_back(fields.title);
  }
  GenerationResult res;
  res.text = text::join(titles, "\n");
  res.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::unique_ptr<Backend> oracle_backend(const kg::KnowledgeGraph& kg,
                                        const c::TemplateCatalog& catalog) {
  return std::make_unique<OracleBackend>(c::vocabulary_from(kg), catalog);
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, const kg::KnowledgeGraph& kg,
                                      const c::TemplateCatalog& catalog) {
  cfg.validate();
  if (cfg.kind == BackendKind::Oracle) return oracle_backend(kg, catalog);
  return remote_backend(cfg);
}

// ---------------------------------------------------------------------------
// Recommendation

Recommender::Recommender(const kg::KnowledgeGraph& kg, const c::TemplateCatalog& catalog)
    : kg_(kg), catalog_(catalog), vocab_(c::vocabulary_from(kg)), store_(kg) {
  vocab_.open_tags = true;
}

RecommendationResult Recommender::recommend(std::string_view question, Backend& backend,
                                            const RecommendConfig& cfg) const {
  auto query = c::parse_question(question, vocab_, catalog_);
  return run(std::string(question), std::move(query), backend, cfg);
}

RecommendationResult Recommender::recommend(const c::ConstraintQuery& query, Backend& backend,
                                            const RecommendConfig& cfg) const {
  c::validate(query);
  if (catalog_.templates.empty()) throw c::InvalidQuery("template catalog is empty");
  return run(c::render_question(query, catalog_.templates.front()), query, backend, cfg);
}

RecommendationResult Recommender::run(std::string question, c::ConstraintQuery query,
                                      Backend& backend, const RecommendConfig& cfg) const {
  if (cfg.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  RecommendationResult result;
  result.query = std::move(query);
  const auto context = retrieve_context(store_, kg_, result.query.tag);
  result.context_size = context.size();
  if (context.empty()) return result;

  const auto chunks = chunk_context(context, cfg.chunk_budget);
  result.per_chunk.resize(chunks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};

  auto work = [&] {
    for (std::size_t i = next++; i < chunks.size(); i = next++) {
      const auto& chunk = chunks[i];
      ChunkOutcome& out = result.per_chunk[i];
      out.index = chunk.index;
      const std::string prompt = assemble_prompt(question, chunk.lines);
      std::optional<GenerationResult> gen;
      while (!gen && out.attempts < cfg.max_attempts) {
        ++out.attempts;
        ++calls;
        try {
          gen = backend.generate(prompt, chunk.index);
        } catch (const BackendError& e) {
          out.error = e.what();
        }
      }
      if (!gen) {
        out.failed = true;
        continue;
      }
      out.error.clear();
      out.raw_text = gen->text;
      out.token_logprobs = std::move(gen->token_logprobs);
      std::map<std::string, std::string> in_chunk;
      for (const auto& title : chunk.recipe_titles) in_chunk.emplace(text::title_key(title), title);
      for (const auto& key : parse_answer_list(out.raw_text)) {
        auto it = in_chunk.find(key);
        if (it == in_chunk.end()) {
          out.hallucinated.push_back(key);
        } else {
          out.parsed_titles.push_back(it->second);
        }
      }
    }
  };

  const auto workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.parallelism)), chunks.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work();
        } catch (...) {
          errors[w] = std::current_exception();
          next = chunks.size();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::set<std::string> seen;
  for (const auto& out : result.per_chunk) {
    result.any_failed = result.any_failed || out.failed;
    for (const auto& title : out.parsed_titles) {
      if (seen.insert(title).second) result.final_titles.push_back(title);
    }
  }
  result.backend_calls = calls;
  return result;
}

}  // namespace kerl::pipeline
