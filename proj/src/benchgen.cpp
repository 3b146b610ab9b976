#include "kerl/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

#include "kerl/text.hpp"

namespace kerl::benchgen {

namespace c = kerl::constraints;

std::vector<std::string> default_tags() {
  return {"lactose",         "vegan",       "vegetarian",  "dairy-free",  "gluten-free",
          "nut-free",        "egg-free",    "low-carb",    "low-fat",     "low-sodium",
          "low-cholesterol", "low-protein", "high-protein", "high-calcium", "high-fiber"};
}

std::vector<std::string> default_nutrients() {
  return {"calories", "fat_calories", "protein",     "sugar",         "fiber",
          "carbohydrates", "sodium",  "cholesterol", "saturated_fat", "total_fat"};
}

void GenConfig::validate() const {
  auto check_range = [](const CountRange& r, const char* name) {
    if (r.lo < 0 || r.hi < r.lo) {
      throw GenerationError(std::string("empty or negative range for ") + name);
    }
  };
  check_range(include_count, "include_count");
  check_range(exclude_count, "exclude_count");
  check_range(nutrient_constraint_count, "nutrient_constraint_count");
  if (tags.empty()) throw GenerationError("no tags configured");
  if (n_questions_per_tag < 0) throw GenerationError("n_questions_per_tag must be >= 0");
  if (k_train < 2 || k_train % 2 != 0) throw GenerationError("k_train must be even and >= 2");
  if (max_resample_attempts < 1) throw GenerationError("max_resample_attempts must be >= 1");
  double sum = 0.0;
  for (double f : split_fractions) {
    if (!(f >= 0.0)) throw GenerationError("split fractions must be non-negative");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw GenerationError("split fractions must sum to 1");
  if (static_cast<std::size_t>(nutrient_constraint_count.hi) > nutrients.size()) {
    throw GenerationError("more nutrient constraints requested than nutrients available");
  }
}

Preferences sample_preferences(const kg::KnowledgeGraph& kg, const std::string& tag, Rng& rng,
                               const GenConfig& cfg) {
  auto vocab_set = kg::ingredient_vocabulary(kg, tag);
  std::vector<std::string> vocab(vocab_set.begin(), vocab_set.end());
  const auto need = static_cast<std::size_t>(cfg.include_count.hi + cfg.exclude_count.hi);
  if (vocab.size() < need) {
    throw GenerationError("ingredient vocabulary of tag '" + tag + "' has " +
                          std::to_string(vocab.size()) + " entries, need " +
                          std::to_string(need));
  }
  const auto n_inc = static_cast<std::size_t>(rng.between(cfg.include_count.lo, cfg.include_count.hi));
  const auto n_exc = static_cast<std::size_t>(rng.between(cfg.exclude_count.lo, cfg.exclude_count.hi));
  auto drawn = rng.sample(std::move(vocab), n_inc + n_exc);
  Preferences p;
  p.includes.assign(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(n_inc));
  p.excludes.assign(drawn.begin() + static_cast<std::ptrdiff_t>(n_inc), drawn.end());
  return p;
}

c::NutrientConstraint sample_nutrient_constraint(const std::string& nutrient,
                                                 const kg::NutrientStats& stats, Rng& rng) {
  const double hi = stats.mean + 2.0 * stats.stddev;
  if (!(hi > 0.0)) {
    throw GenerationError("no satisfiable threshold for '" + nutrient + "' (mean + 2 sd is 0)");
  }
  const double lo = std::max(0.0, stats.mean - 2.0 * stats.stddev);
  const auto kind = static_cast<c::FilterKind>(rng.index(3));
  const double x = rng.uniform(lo, hi);

  c::NutrientConstraint out{nutrient, c::LessThan{}};
  switch (kind) {
    case c::FilterKind::LessThan:
      out.filter = c::LessThan{x, rng.coin()};
      break;
    case c::FilterKind::AtLeast:
      out.filter = c::AtLeast{x, rng.coin()};
      break;
    case c::FilterKind::Range: {
      const bool lower_ok = x > 0.0;
      const bool upper_ok = x < stats.max;
      bool lower = rng.coin();
      if (lower && !lower_ok) lower = false;
      if (!lower && !upper_ok) lower = true;
      if (!lower_ok && !upper_ok) {
        throw GenerationError("no valid range around threshold for '" + nutrient + "'");
      }
      out.filter = lower ? c::NutrientFilter{c::Range{0.0, x}} : c::Range{x, stats.max};
      break;
    }
  }
  return out;
}

BenchmarkItem generate_kgqa_item(const kg::KnowledgeGraph& kg, const std::string& tag,
                                 const c::TemplateCatalog& catalog, Rng& rng,
                                 const GenConfig& cfg) {
  if (catalog.templates.empty()) throw GenerationError("template catalog is empty");
  const auto context = kg::recipes_with_tag(kg, tag);
  if (context.empty()) throw GenerationError("tag '" + tag + "' has no recipes");

  for (int attempt = 0; attempt < cfg.max_resample_attempts; ++attempt) {
    const auto& tpl = catalog.templates[rng.index(catalog.templates.size())];
    auto prefs = sample_preferences(kg, tag, rng, cfg);
    const auto n_c = static_cast<std::size_t>(
        rng.between(cfg.nutrient_constraint_count.lo, cfg.nutrient_constraint_count.hi));

    c::ConstraintQuery q;
    q.tag = tag;
    q.includes = std::move(prefs.includes);
    q.excludes = std::move(prefs.excludes);
    for (const auto& nutrient : rng.sample(cfg.nutrients, n_c)) {
      kg::NutrientStats stats;
      try {
        stats = kg::nutrient_stats(kg, tag, nutrient);
      } catch (const kg::NoDataError&) {
        throw GenerationError("tag '" + tag + "' has no data for nutrient '" + nutrient + "'");
      }
      q.nutrient_constraints.push_back(sample_nutrient_constraint(nutrient, stats, rng));
    }

    const auto positives = c::ground_truth(kg, q);
    if (positives.empty()) continue;

    BenchmarkItem item;
    item.tag = tag;
    item.question = c::render_question(q, tpl);
    item.template_id = tpl.id;
    item.query = std::move(q);
    for (const auto* r : positives) item.answers.push_back(r->title);
    item.context_size = context.size();
    return item;
  }
  throw GenerationError("resample budget of " + std::to_string(cfg.max_resample_attempts) +
                        " exhausted for tag '" + tag + "'");
}

std::vector<int> assign_splits(std::size_t n, const std::array<double, 3>& fractions) {
  std::vector<int> labels;
  labels.reserve(n);
  std::array<std::size_t, 3> counts{0, 0, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    int best = 0;
    double best_deficit = -1e300;
    for (int k = 0; k < 3; ++k) {
      const double deficit = fractions[k] * static_cast<double>(i) - static_cast<double>(counts[k]);
      if (deficit > best_deficit + 1e-12) {
        best = k;
        best_deficit = deficit;
      }
    }
    ++counts[best];
    labels.push_back(best);
  }
  return labels;
}

namespace {

SummaryStat summarize(const std::vector<std::size_t>& values) {
  SummaryStat s;
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (auto v : values) sum += static_cast<double>(v);
  s.avg = sum / static_cast<double>(values.size());
  return s;
}

std::string item_id(const std::string& tag, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i + 1);
  return tag + "-" + buf;
}

}  // namespace

Dataset generate_dataset(const kg::KnowledgeGraph& kg, const c::TemplateCatalog& catalog,
                         const GenConfig& cfg) {
  cfg.validate();
  // Each tag draws from its own seed-derived stream, so tags can run in parallel.
  std::vector<std::future<std::vector<BenchmarkItem>>> streams;
  for (const auto& tag : cfg.tags) {
    streams.push_back(std::async(std::launch::async, [&kg, &catalog, &cfg, tag] {
      Rng rng(cfg.seed ^ text::fnv1a64(tag));
      std::vector<BenchmarkItem> items;
      for (int i = 0; i < cfg.n_questions_per_tag; ++i) {
        auto item = generate_kgqa_item(kg, tag, catalog, rng, cfg);
        item.id = item_id(tag, i);
        items.push_back(std::move(item));
      }
      return items;
    }));
  }
  std::vector<BenchmarkItem> all;
  for (auto& s : streams) {
    auto items = s.get();
    std::move(items.begin(), items.end(), std::back_inserter(all));
  }

  Dataset ds;
  const auto labels = assign_splits(all.size(), cfg.split_fractions);
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& target = labels[i] == 0 ? ds.train : labels[i] == 1 ? ds.val : ds.test;
    target.push_back(std::move(all[i]));
  }
  ds.stats = compute_stats(ds);
  return ds;
}

DatasetStats compute_stats(const Dataset& ds) {
  DatasetStats st;
  std::vector<std::size_t> ctx, pos;
  const std::vector<BenchmarkItem>* splits[] = {&ds.train, &ds.val, &ds.test};
  for (int k = 0; k < 3; ++k) {
    st.split_sizes[k] = splits[k]->size();
    for (const auto& item : *splits[k]) {
      ++st.questions;
      ++st.questions_per_tag[item.tag];
      ctx.push_back(item.context_size);
      pos.push_back(item.answers.size());
    }
  }
  st.context_size = summarize(ctx);
  st.positives = summarize(pos);
  return st;
}

TrainingExample sample_training_context(const BenchmarkItem& item, const kg::KnowledgeGraph& kg,
                                        const GenConfig& cfg, Rng& rng) {
  const auto half = static_cast<std::size_t>(cfg.k_train / 2);
  const auto part = c::partition(kg, item.query);
  auto pos = rng.sample(part.positives, std::min(half, part.positives.size()));
  auto neg = rng.sample(part.negatives, std::min(half, part.negatives.size()));

  struct Drawn {
    const kg::Recipe* recipe;
    bool positive;
  };
  std::vector<Drawn> drawn;
  for (const auto* r : pos) drawn.push_back({r, true});
  for (const auto* r : neg) drawn.push_back({r, false});
  rng.shuffle(drawn);

  TrainingExample ex;
  ex.question = item.question;
  ex.positives = pos.size();
  ex.negatives = neg.size();
  for (const auto& d : drawn) {
    ex.context_lines.push_back(kg::serialize_recipe_context(*d.recipe));
    if (d.positive) ex.answer_titles.push_back(d.recipe->title);
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Prompt datasets

std::string_view to_string(PromptTask t) {
  return t == PromptTask::RecipeGen ? "recipe_gen" : "nutri_gen";
}

std::vector<std::string> load_prompt_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GenerationError("cannot open prompt templates '" + path + "'");
  try {
    auto j = nlohmann::json::parse(in);
    auto out = j.at("templates").get<std::vector<std::string>>();
    if (out.empty()) throw GenerationError("prompt template file '" + path + "' is empty");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw GenerationError("malformed prompt templates '" + path + "': " + e.what());
  }
}

std::string nutrients_to_json(const kg::NutrientMap& nutrition) {
  std::string out = "{";
  bool first = true;
  for (const auto& [k, v] : nutrition) {
    if (!first) out += ", ";
    first = false;
    out += text::quote(k) + ": " + text::format_number(v);
  }
  return out + "}";
}

namespace {

constexpr std::string_view kName = "<name>";
constexpr std::string_view kIngredients = "<ingredients>";
constexpr std::string_view kInstructions = "<instructions>";

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::vector<PromptPair> generate_prompts(PromptTask task, const kg::Recipe& recipe,
                                         const std::vector<std::string>& templates, Rng& rng,
                                         std::size_t per_recipe,
                                         std::vector<std::string>* diagnostics) {
  std::vector<PromptPair> out;
  auto note = [&](std::string msg) {
    if (diagnostics) diagnostics->push_back(recipe.id + ": " + std::move(msg));
  };
  if (templates.empty()) return out;

  std::string target;
  if (task == PromptTask::NutriGen) {
    if (recipe.nutrition.empty()) {
      note("no nutrition data");
      return out;
    }
    target = nutrients_to_json(recipe.nutrition);
  } else {
    if (recipe.instructions.empty()) {
      note("no instructions");
      return out;
    }
    target = text::join(recipe.instructions, "\n");
  }

  std::vector<std::size_t> order(templates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  order = rng.sample(std::move(order), std::min(per_recipe, templates.size()));

  for (std::size_t idx : order) {
    const std::string& tpl = templates[idx];
    const bool uses_name = tpl.find(kName) != std::string::npos;
    const bool uses_ing = tpl.find(kIngredients) != std::string::npos;
    const bool uses_inst = tpl.find(kInstructions) != std::string::npos;
    if (uses_inst && (task == PromptTask::RecipeGen || recipe.instructions.empty())) {
      note("template " + std::to_string(idx) + " needs instructions, skipped");
      continue;
    }
    if (uses_ing && recipe.ingredients.empty()) {
      note("template " + std::to_string(idx) + " needs ingredients, skipped");
      continue;
    }
    PromptPair p;
    p.task = task;
    p.prompt = tpl;
    replace_all(p.prompt, kName, recipe.title);
    replace_all(p.prompt, kIngredients, text::join(recipe.ingredients, ", "));
    replace_all(p.prompt, kInstructions, text::join(recipe.instructions, " "));
    if (uses_name) p.inputs_used.push_back("title");
    if (uses_ing) p.inputs_used.push_back("ingredients");
    if (uses_inst) p.inputs_used.push_back("instructions");
    p.target = target;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

std::vector<PromptPair> generate_nutri_prompts(const kg::Recipe& recipe,
                                               const std::vector<std::string>& templates,
                                               Rng& rng, std::size_t per_recipe,
                                               std::vector<std::string>* diagnostics) {
  return generate_prompts(PromptTask::NutriGen, recipe, templates, rng, per_recipe, diagnostics);
}

std::vector<PromptPair> generate_recipe_prompts(const kg::Recipe& recipe,
                                                const std::vector<std::string>& templates,
                                                Rng& rng, std::size_t per_recipe,
                                                std::vector<std::string>* diagnostics) {
  return generate_prompts(PromptTask::RecipeGen, recipe, templates, rng, per_recipe,
                          diagnostics);
}

}  // namespace kerl::benchgen
