#include "kerl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kerl/text.hpp"

namespace kerl::metrics {

namespace {

std::vector<std::string> normalized_unique(const std::vector<std::string>& titles) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& t : titles) {
    auto key = text::title_key(t);
    if (!key.empty() && seen.insert(key).second) out.push_back(std::move(key));
  }
  return out;
}

}  // namespace

RetrievalScore retrieval_scores(const std::vector<std::string>& truth,
                                const std::vector<std::string>& predicted) {
  const auto y = normalized_unique(truth);
  if (y.empty()) throw MetricError("retrieval_scores: ground truth is empty");
  const auto pred = normalized_unique(predicted);
  RetrievalScore s;
  if (pred.empty()) return s;
  const std::set<std::string> yset(y.begin(), y.end());
  std::size_t tp = 0;
  for (const auto& p : pred) tp += yset.count(p);
  s.precision = static_cast<double>(tp) / static_cast<double>(pred.size());
  s.recall = static_cast<double>(tp) / static_cast<double>(y.size());
  if (s.precision + s.recall > 0.0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

double average_precision(const std::vector<std::string>& truth,
                         const std::vector<std::string>& ranked, ApNormalization norm) {
  const auto y = normalized_unique(truth);
  if (y.empty()) throw MetricError("average_precision: ground truth is empty");
  const std::set<std::string> yset(y.begin(), y.end());
  const auto pred = normalized_unique(ranked);
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (yset.count(pred[k])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) return 0.0;
  const double denom = norm == ApNormalization::Truth ? static_cast<double>(y.size())
                                                      : static_cast<double>(hits);
  return sum / denom;
}

double mean_ap(std::span<const double> aps) {
  if (aps.empty()) throw MetricError("mean_ap: no items");
  double sum = 0.0;
  for (double a : aps) sum += a;
  return sum / static_cast<double>(aps.size());
}

double perplexity(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw MetricError("perplexity: empty log-probability list");
  double sum = 0.0;
  for (double lp : token_logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) {
      throw MetricError("perplexity: log-probabilities must be finite and <= 0");
    }
    sum += lp;
  }
  return std::exp(-sum / static_cast<double>(token_logprobs.size()));
}

// ---------------------------------------------------------------------------
// Nutrition

namespace {

/// End offset (exclusive) of the balanced object starting at `begin`, if any.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t begin) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = begin; i < s.size(); ++i) {
    const char ch = s[i];
    if (in_string) {
      if (ch == '\\') {
        ++i;
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
    } else if (ch == '{') {
      ++depth;
    } else if (ch == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

}  // namespace

NutrientParse parse_nutrients(std::string_view text) {
  NutrientParse out;
  for (auto open = text.find('{'); open != std::string_view::npos;
       open = text.find('{', open + 1)) {
    const auto end = balanced_end(text, open);
    if (!end) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text.substr(open, *end - open));
    } catch (const nlohmann::json::parse_error&) {
      out.diagnostics.push_back("unparseable object at offset " + std::to_string(open));
      continue;
    }
    if (!j.is_object()) continue;
    out.source_span = std::make_pair(open, *end);
    for (const auto& [key, value] : j.items()) {
      const auto name = text::canonical_nutrient(key);
      if (!value.is_number()) {
        out.diagnostics.push_back("non-numeric value for '" + key + "' skipped");
        continue;
      }
      const double v = value.get<double>();
      if (!std::isfinite(v)) {
        out.diagnostics.push_back("non-finite value for '" + key + "' skipped");
        continue;
      }
      out.values[name] = v;
    }
    return out;
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw MetricError("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw MetricError("percentile must be within [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

MaeResult nutrient_mae(const std::vector<NutrientPair>& pairs,
                       std::optional<double> percentile_p) {
  if (pairs.empty()) throw MetricError("nutrient_mae: no samples");
  MaeResult out;
  std::set<std::string> names;
  for (const auto& [truth, _] : pairs) {
    for (const auto& [k, v] : truth) names.insert(k);
  }
  for (const auto& name : names) {
    std::optional<double> cutoff;
    if (percentile_p) {
      std::vector<double> truth_values;
      for (const auto& [truth, _] : pairs) {
        if (auto it = truth.find(name); it != truth.end()) truth_values.push_back(it->second);
      }
      cutoff = percentile(std::move(truth_values), *percentile_p);
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [truth, pred] : pairs) {
      auto t = truth.find(name);
      auto p = pred.find(name);
      if (t == truth.end() || p == pred.end()) continue;
      if (cutoff && t->second > *cutoff) continue;
      sum += std::fabs(t->second - p->second);
      ++n;
    }
    if (n == 0) {
      out.diagnostics.push_back("no co-occurring samples for '" + name + "'");
      continue;
    }
    out.mae[name] = sum / static_cast<double>(n);
    out.samples[name] = n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

Aggregate aggregate(std::span<const ItemScore> items) {
  Aggregate a;
  a.items = items.size();
  if (items.empty()) return a;
  for (const auto& it : items) {
    a.map += it.score.ap;
    a.precision += it.score.precision;
    a.recall += it.score.recall;
    a.f1 += it.score.f1;
  }
  const auto n = static_cast<double>(items.size());
  a.map /= n;
  a.precision /= n;
  a.recall /= n;
  a.f1 /= n;
  return a;
}

EvalReport build_report(std::vector<ItemScore> items, std::size_t failures) {
  EvalReport r;
  r.per_item = std::move(items);
  r.failures = failures;
  r.aggregates = aggregate(r.per_item);
  std::map<std::string, std::vector<ItemScore>> by_tag;
  for (const auto& it : r.per_item) by_tag[it.tag].push_back(it);
  for (const auto& [tag, group] : by_tag) r.per_tag[tag] = aggregate(group);
  return r;
}

namespace {

nlohmann::json aggregate_json(const Aggregate& a) {
  return {{"items", a.items},
          {"mAP", a.map},
          {"precision", a.precision},
          {"recall", a.recall},
          {"f1", a.f1}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : report.per_item) {
    items.push_back({{"id", it.id},
                     {"tag", it.tag},
                     {"ap", it.score.ap},
                     {"precision", it.score.precision},
                     {"recall", it.score.recall},
                     {"f1", it.score.f1}});
  }
  nlohmann::json per_tag = nlohmann::json::object();
  for (const auto& [tag, a] : report.per_tag) per_tag[tag] = aggregate_json(a);
  nlohmann::json j = {{"aggregates", aggregate_json(report.aggregates)},
                      {"per_tag", per_tag},
                      {"failures", report.failures},
                      {"per_item", items}};
  return j.dump(2);
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "tag,items,mAP,P,R,F1\n";
  auto row = [&](const std::string& tag, const Aggregate& a) {
    out << tag << ',' << a.items << ',' << text::format_number(a.map) << ','
        << text::format_number(a.precision) << ',' << text::format_number(a.recall) << ','
        << text::format_number(a.f1) << '\n';
  };
  for (const auto& [tag, a] : report.per_tag) row(tag, a);
  row("all", report.aggregates);
  return out.str();
}

}  // namespace kerl::metrics
