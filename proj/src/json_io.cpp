#include "kerl/json_io.hpp"

#include <filesystem>
#include <fstream>

#include "kerl/text.hpp"

namespace kerl::json_io {

namespace c = kerl::constraints;

json to_json(const c::ConstraintQuery& q) {
  json cons = json::array();
  for (const auto& nc : q.nutrient_constraints) {
    json e = {{"nutrient", nc.nutrient}, {"kind", std::string(c::to_string(nc.kind()))}};
    if (const auto* r = std::get_if<c::Range>(&nc.filter)) {
      e["lo"] = r->lo;
      e["hi"] = r->hi;
    } else if (const auto* lt = std::get_if<c::LessThan>(&nc.filter)) {
      e["value"] = lt->value;
      e["inclusive"] = lt->inclusive;
    } else {
      const auto& al = std::get<c::AtLeast>(nc.filter);
      e["value"] = al.value;
      e["inclusive"] = al.inclusive;
    }
    cons.push_back(std::move(e));
  }
  return {{"tag", q.tag},
          {"includes", q.includes},
          {"excludes", q.excludes},
          {"nutrient_constraints", cons}};
}

c::ConstraintQuery query_from_json(const json& j) {
  c::ConstraintQuery q;
  try {
    q.tag = text::canonical_name(j.at("tag").get<std::string>());
    for (const auto& s : j.value("includes", std::vector<std::string>{})) {
      q.includes.push_back(text::canonical_name(s));
    }
    for (const auto& s : j.value("excludes", std::vector<std::string>{})) {
      q.excludes.push_back(text::canonical_name(s));
    }
    if (j.contains("nutrient_constraints")) {
      for (const auto& e : j.at("nutrient_constraints")) {
        c::NutrientConstraint nc;
        nc.nutrient = text::canonical_nutrient(e.at("nutrient").get<std::string>());
        const auto kind_name = e.at("kind").get<std::string>();
        const auto kind = c::parse_filter_kind(kind_name);
        if (!kind) throw c::InvalidQuery("unknown constraint kind '" + kind_name + "'");
        switch (*kind) {
          case c::FilterKind::LessThan:
            nc.filter = c::LessThan{e.at("value").get<double>(), e.value("inclusive", true)};
            break;
          case c::FilterKind::AtLeast:
            nc.filter = c::AtLeast{e.at("value").get<double>(), e.value("inclusive", true)};
            break;
          case c::FilterKind::Range:
            nc.filter = c::Range{e.at("lo").get<double>(), e.at("hi").get<double>()};
            break;
        }
        q.nutrient_constraints.push_back(std::move(nc));
      }
    }
  } catch (const json::exception& e) {
    throw c::InvalidQuery(std::string("malformed query: ") + e.what());
  }
  c::validate(q);
  return q;
}

json to_json(const benchgen::BenchmarkItem& item) {
  return {{"id", item.id},
          {"tag", item.tag},
          {"question", item.question},
          {"template", item.template_id},
          {"query", to_json(item.query)},
          {"answers", item.answers},
          {"context_size", item.context_size}};
}

benchgen::BenchmarkItem item_from_json(const json& j) {
  benchgen::BenchmarkItem item;
  try {
    item.id = j.at("id").get<std::string>();
    item.tag = j.at("tag").get<std::string>();
    item.question = j.at("question").get<std::string>();
    item.template_id = j.value("template", std::string());
    item.query = query_from_json(j.at("query"));
    item.answers = j.at("answers").get<std::vector<std::string>>();
    item.context_size = j.value("context_size", std::size_t{0});
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed benchmark item: ") + e.what());
  }
  return item;
}

json to_json(const benchgen::TrainingExample& ex) {
  return {{"question", ex.question}, {"context", ex.context_lines}, {"answers", ex.answer_titles}};
}

json to_json(const benchgen::PromptPair& p) {
  return {{"task", std::string(benchgen::to_string(p.task))},
          {"prompt", p.prompt},
          {"target", p.target},
          {"inputs_used", p.inputs_used}};
}

benchgen::PromptPair prompt_from_json(const json& j) {
  benchgen::PromptPair p;
  try {
    const auto task = j.at("task").get<std::string>();
    if (task == "recipe_gen") {
      p.task = benchgen::PromptTask::RecipeGen;
    } else if (task == "nutri_gen") {
      p.task = benchgen::PromptTask::NutriGen;
    } else {
      throw std::runtime_error("unknown prompt task '" + task + "'");
    }
    p.prompt = j.at("prompt").get<std::string>();
    p.target = j.at("target").get<std::string>();
    p.inputs_used = j.value("inputs_used", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed prompt pair: ") + e.what());
  }
  return p;
}

json to_json(const benchgen::DatasetStats& st) {
  auto summary = [](const benchgen::SummaryStat& s) {
    return json{{"min", s.min}, {"max", s.max}, {"avg", s.avg}};
  };
  return {{"questions", st.questions},
          {"questions_per_tag", st.questions_per_tag},
          {"split_sizes", {{"train", st.split_sizes[0]}, {"val", st.split_sizes[1]},
                           {"test", st.split_sizes[2]}}},
          {"context_size", summary(st.context_size)},
          {"positives", summary(st.positives)}};
}

json to_json(const pipeline::RecommendationResult& r) {
  json chunks = json::array();
  for (const auto& ch : r.per_chunk) {
    json e = {{"index", ch.index},
              {"raw_text", ch.raw_text},
              {"parsed_titles", ch.parsed_titles},
              {"hallucinated", ch.hallucinated},
              {"attempts", ch.attempts},
              {"failed", ch.failed}};
    if (!ch.error.empty()) e["error"] = ch.error;
    chunks.push_back(std::move(e));
  }
  return {{"final_titles", r.final_titles},
          {"query", to_json(r.query)},
          {"context_size", r.context_size},
          {"backend_calls", r.backend_calls},
          {"any_failed", r.any_failed},
          {"per_chunk", chunks}};
}

json to_json(const kg::Recipe& r) { return json::parse(kg::recipe_to_json(r)); }

void write_jsonl(std::ostream& out, const std::vector<json>& rows) {
  for (const auto& row : rows) out << row.dump() << '\n';
}

std::vector<json> read_jsonl(std::istream& in) {
  std::vector<json> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::normalize_space(line).empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<benchgen::BenchmarkItem> read_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  std::vector<benchgen::BenchmarkItem> items;
  for (const auto& row : read_jsonl(in)) items.push_back(item_from_json(row));
  return items;
}

void write_items(const std::string& path, const std::vector<benchgen::BenchmarkItem>& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& item : items) out << to_json(item).dump() << '\n';
}

void write_dataset(const std::string& dir, const benchgen::Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_items((fs::path(dir) / "train.jsonl").string(), ds.train);
  write_items((fs::path(dir) / "val.jsonl").string(), ds.val);
  write_items((fs::path(dir) / "test.jsonl").string(), ds.test);
  std::ofstream out(fs::path(dir) / "stats.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write stats into '" + dir + "'");
  out << to_json(ds.stats).dump(2) << '\n';
}

}  // namespace kerl::json_io
