#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kerl/constraints.hpp"
#include "kerl/kg_store.hpp"
#include "kerl/squeal.hpp"

namespace kerl::pipeline {

/// Tag-scoped retrieval through the tagged_recipes query template. Recipes
/// come back in ingestion order; an unknown tag yields an empty list.
kg::RecipeList retrieve_context(const squeal::TripleStore& store, const kg::KnowledgeGraph& kg,
                                const std::string& tag);
kg::RecipeList retrieve_context(const kg::KnowledgeGraph& kg, const std::string& tag);

struct ContextChunk {
  std::size_t index = 0;
  std::vector<std::string> lines;
  std::vector<std::string> recipe_titles;
  std::size_t char_budget_used = 0;  // length of the newline-joined lines
};

/// Greedy packing in retrieval order. A line longer than the budget gets a
/// chunk of its own.
std::vector<ContextChunk> chunk_context(const kg::RecipeList& recipes, std::size_t budget_chars);

inline constexpr std::string_view kContextHeader = "\nContext:\n";
inline constexpr std::string_view kAnswerInstruction =
    "\nAnswer with recipe names only, one per line.";

std::string assemble_prompt(std::string_view question, const std::vector<std::string>& lines);

struct PromptParts {
  std::string question;
  std::vector<std::string> lines;
};

class PromptFormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inverse of assemble_prompt. Throws PromptFormatError.
PromptParts split_prompt(std::string_view prompt);

/// Splits on newlines, strips list markers and trailing punctuation, and
/// returns normalized title keys (NFC, case-folded), deduplicated in order.
std::vector<std::string> parse_answer_list(std::string_view text);

// ---------------------------------------------------------------------------
// Backends

struct GenerationResult {
  std::string text;
  std::optional<std::vector<std::pair<std::string, double>>> token_logprobs;
  double latency_ms = 0.0;
};

/// Transport-level failure for one chunk; retried by recommend().
class BackendError : public std::runtime_error {
 public:
  BackendError(std::size_t chunk_index, const std::string& message)
      : std::runtime_error(message), chunk_index_(chunk_index) {}
  std::size_t chunk_index() const { return chunk_index_; }

 private:
  std::size_t chunk_index_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// Must be safe to call concurrently.
  virtual GenerationResult generate(const std::string& prompt, std::size_t chunk_index) = 0;
};

enum class BackendKind { Oracle, Remote };

struct BackendConfig {
  BackendKind kind = BackendKind::Oracle;
  std::string endpoint;  // http://host:port/path, remote only
  std::string auth_token;
  double temperature = 0.2;
  int num_beams = 1;
  int max_new_tokens = 1024;
  int parallelism = 1;
  bool want_logprobs = false;
  int timeout_ms = 60000;

  void validate() const;
};

/// Answers by re-parsing the question and evaluating every context line
/// exactly. Deterministic.
class OracleBackend : public Backend {
 public:
  OracleBackend(constraints::ParseVocabulary vocab, constraints::TemplateCatalog catalog)
      : vocab_(std::move(vocab)), catalog_(std::move(catalog)) {}

  GenerationResult generate(const std::string& prompt, std::size_t chunk_index) override;

 private:
  constraints::ParseVocabulary vocab_;
  constraints::TemplateCatalog catalog_;
};

std::unique_ptr<Backend> oracle_backend(const kg::KnowledgeGraph& kg,
                                        const constraints::TemplateCatalog& catalog);

/// JSON-over-HTTP completion client. Request body:
/// {prompt, temperature, max_tokens, num_beams, want_logprobs};
/// response body: {text, logprobs?}.
std::unique_ptr<Backend> remote_backend(const BackendConfig& cfg);

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, const kg::KnowledgeGraph& kg,
                                      const constraints::TemplateCatalog& catalog);

// ---------------------------------------------------------------------------
// Recommendation

struct ChunkOutcome {
  std::size_t index = 0;
  std::string raw_text;
  std::vector<std::string> parsed_titles;  // corpus titles found in the chunk
  std::vector<std::string> hallucinated;   // returned keys absent from the chunk
  int attempts = 0;
  bool failed = false;
  std::string error;
  std::optional<std::vector<std::pair<std::string, double>>> token_logprobs;
};

struct RecommendationResult {
  std::vector<std::string> final_titles;
  std::vector<ChunkOutcome> per_chunk;
  constraints::ConstraintQuery query;
  std::size_t context_size = 0;
  std::size_t backend_calls = 0;
  bool any_failed = false;
};

struct RecommendConfig {
  std::size_t chunk_budget = 8000;
  int max_attempts = 3;
  int parallelism = 1;
};

/// Parses the question, retrieves R(t), chunks it and merges the per-chunk
/// answers. Shares the graph read-only; safe to call concurrently.
class Recommender {
 public:
  Recommender(const kg::KnowledgeGraph& kg, const constraints::TemplateCatalog& catalog);

  RecommendationResult recommend(std::string_view question, Backend& backend,
                                 const RecommendConfig& cfg) const;

  /// Structured entry point; the prompt carries the query rendered with the
  /// first catalog template.
  RecommendationResult recommend(const constraints::ConstraintQuery& query, Backend& backend,
                                 const RecommendConfig& cfg) const;

  const constraints::ParseVocabulary& vocabulary() const { return vocab_; }
  const squeal::TripleStore& store() const { return store_; }

 private:
  RecommendationResult run(std::string question, constraints::ConstraintQuery query,
                           Backend& backend, const RecommendConfig& cfg) const;

  const kg::KnowledgeGraph& kg_;
  const constraints::TemplateCatalog& catalog_;
  constraints::ParseVocabulary vocab_;
  squeal::TripleStore store_;
};

}  // namespace kerl::pipeline
