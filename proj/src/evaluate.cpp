#include "kerl/evaluate.hpp"

#include <fstream>

#include <json.hpp>

#include "kerl/json_io.hpp"

namespace kerl::evaluate {

using nlohmann::json;

metrics::EvalReport evaluate_kgqa(const std::vector<benchgen::BenchmarkItem>& items,
                                  const pipeline::Recommender& recommender,
                                  pipeline::Backend& backend, const KgqaOptions& options) {
  std::vector<metrics::ItemScore> scores;
  std::size_t failures = 0;
  for (const auto& item : items) {
    if (item.answers.empty()) {
      ++failures;
      continue;
    }
    pipeline::RecommendationResult rec;
    try {
      rec = recommender.recommend(item.question, backend, options.recommend);
    } catch (const constraints::QuestionParseError&) {
      ++failures;
      continue;
    } catch (const pipeline::PromptFormatError&) {
      ++failures;
      continue;
    }
    metrics::ItemScore s;
    s.id = item.id;
    s.tag = item.tag;
    s.score = metrics::retrieval_scores(item.answers, rec.final_titles);
    s.score.ap = metrics::average_precision(item.answers, rec.final_titles, options.ap_norm);
    scores.push_back(std::move(s));
  }
  return metrics::build_report(std::move(scores), failures);
}

Predictions query_backend(const std::vector<benchgen::PromptPair>& prompts,
                          pipeline::Backend& backend, int max_attempts) {
  Predictions out;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::optional<pipeline::GenerationResult> gen;
    std::string last_error;
    for (int attempt = 0; attempt < max_attempts && !gen; ++attempt) {
      try {
        gen = backend.generate(prompts[i].prompt, i);
      } catch (const pipeline::BackendError& e) {
        last_error = e.what();
      }
    }
    if (!gen) throw pipeline::BackendError(i, "prompt " + std::to_string(i) + ": " + last_error);
    out.texts.push_back(gen->text);
    if (gen->token_logprobs) {
      std::vector<double> lp;
      for (const auto& [_, v] : *gen->token_logprobs) lp.push_back(v);
      out.logprobs.emplace_back(std::move(lp));
    } else {
      out.logprobs.emplace_back(std::nullopt);
    }
  }
  return out;
}

Predictions read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions '" + path + "'");
  Predictions out;
  for (const auto& row : json_io::read_jsonl(in)) {
    out.texts.push_back(row.at("text").get<std::string>());
    if (row.contains("logprobs") && !row["logprobs"].is_null()) {
      out.logprobs.emplace_back(row["logprobs"].get<std::vector<double>>());
    } else {
      out.logprobs.emplace_back(std::nullopt);
    }
  }
  return out;
}

namespace {

void check_lengths(const std::vector<benchgen::PromptPair>& prompts, const Predictions& p) {
  if (prompts.size() != p.texts.size()) {
    throw std::runtime_error("got " + std::to_string(p.texts.size()) + " predictions for " +
                             std::to_string(prompts.size()) + " prompts");
  }
}

}  // namespace

NutriReport evaluate_nutri(const std::vector<benchgen::PromptPair>& prompts,
                           const Predictions& predictions, std::optional<double> percentile) {
  check_lengths(prompts, predictions);
  NutriReport r;
  r.items = prompts.size();
  r.percentile = percentile;
  std::vector<metrics::NutrientPair> pairs;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto truth = metrics::parse_nutrients(prompts[i].target).values;
    auto pred = metrics::parse_nutrients(predictions.texts[i]);
    if (!pred.source_span) ++r.unparsed;
    pairs.emplace_back(std::move(truth), std::move(pred.values));
  }
  r.mae = metrics::nutrient_mae(pairs);
  if (percentile) r.mae_filtered = metrics::nutrient_mae(pairs, percentile);
  return r;
}

RecipeReport evaluate_recipe(const std::vector<benchgen::PromptPair>& prompts,
                             const Predictions& predictions) {
  check_lengths(prompts, predictions);
  RecipeReport r;
  std::vector<metrics::Tokens> cands;
  std::vector<std::vector<metrics::Tokens>> refs;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    cands.push_back(metrics::tokenize(predictions.texts[i]));
    refs.push_back({metrics::tokenize(prompts[i].target)});
  }
  std::optional<metrics::CiderScorer> cider;
  if (refs.size() >= 2) cider.emplace(refs);

  double ppl_sum = 0.0;
  std::size_t ppl_n = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    metrics::TextScore s;
    for (int n = 1; n <= 4; ++n) s.bleu[n] = metrics::bleu(cands[i], refs[i][0], n);
    for (int n = 1; n <= 2; ++n) s.rouge_n[n] = metrics::rouge_n(cands[i], refs[i], n);
    s.rouge_l = metrics::rouge_l(cands[i], refs[i]);
    s.meteor = metrics::meteor(cands[i], refs[i][0]);
    if (cider) s.cider = cider->score(cands[i], i);
    if (predictions.logprobs[i] && !predictions.logprobs[i]->empty()) {
      s.perplexity = metrics::perplexity(*predictions.logprobs[i]);
      ppl_sum += *s.perplexity;
      ++ppl_n;
    }
    r.per_item.push_back(std::move(s));
  }

  if (!r.per_item.empty()) {
    const auto n = static_cast<double>(r.per_item.size());
    for (const auto& s : r.per_item) {
      for (const auto& [k, v] : s.bleu) r.mean.bleu[k] += v / n;
      for (const auto& [k, v] : s.rouge_n) r.mean.rouge_n[k] += v / n;
      r.mean.rouge_l += s.rouge_l / n;
      r.mean.meteor += s.meteor / n;
      r.mean.cider += s.cider / n;
    }
  }
  if (ppl_n > 0) r.mean.perplexity = ppl_sum / static_cast<double>(ppl_n);
  return r;
}

namespace {

json mae_json(const metrics::MaeResult& m) {
  return {{"mae", m.mae}, {"samples", m.samples}, {"diagnostics", m.diagnostics}};
}

json text_json(const metrics::TextScore& s) {
  json j;
  for (const auto& [k, v] : s.bleu) j["bleu" + std::to_string(k)] = v;
  for (const auto& [k, v] : s.rouge_n) j["rouge" + std::to_string(k)] = v;
  j["rougeL"] = s.rouge_l;
  j["meteor"] = s.meteor;
  j["cider"] = s.cider;
  if (s.perplexity) j["perplexity"] = *s.perplexity;
  return j;
}

}  // namespace

std::string to_json(const NutriReport& r) {
  json j = {{"items", r.items}, {"unparsed", r.unparsed}, {"all", mae_json(r.mae)}};
  if (r.mae_filtered) {
    j["percentile"] = *r.percentile;
    j["filtered"] = mae_json(*r.mae_filtered);
  }
  return j.dump(2);
}

std::string to_json(const RecipeReport& r) {
  json items = json::array();
  for (const auto& s : r.per_item) items.push_back(text_json(s));
  return json{{"mean", text_json(r.mean)}, {"items", r.per_item.size()}, {"per_item", items}}
      .dump(2);
}

}  // namespace kerl::evaluate
