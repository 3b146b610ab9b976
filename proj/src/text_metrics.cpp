#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "kerl/metrics.hpp"
#include "kerl/text.hpp"

namespace kerl::metrics {

namespace {

using Gram = std::vector<std::string>;
using GramCounts = std::map<Gram, std::size_t>;

GramCounts ngrams(const Tokens& tokens, int n) {
  GramCounts out;
  const auto un = static_cast<std::size_t>(n);
  if (tokens.size() < un) return out;
  for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
    ++out[Gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
               tokens.begin() + static_cast<std::ptrdiff_t>(i + un))];
  }
  return out;
}

std::size_t clipped_matches(const GramCounts& cand, const GramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : cand) {
    if (auto it = ref.find(g); it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

std::size_t total(const GramCounts& counts) {
  std::size_t t = 0;
  for (const auto& [_, c] : counts) t += c;
  return t;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

Tokens tokenize(std::string_view input) {
  const std::string folded = text::casefold(input);
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : folded) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

double bleu(const Tokens& candidate, const Tokens& reference, int max_n) {
  if (max_n < 1) throw MetricError("bleu: N must be >= 1");
  if (reference.empty()) throw MetricError("bleu: empty reference");
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = ngrams(candidate, n);
    const auto denom = total(cand);
    const auto matched = clipped_matches(cand, ngrams(reference, n));
    if (denom == 0 || matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(denom)) /
               static_cast<double>(max_n);
  }
  const double np = static_cast<double>(candidate.size());
  const double nl = static_cast<double>(reference.size());
  const double bp = np > nl ? 1.0 : std::exp(1.0 - nl / np);
  return bp * std::exp(log_sum);
}

double rouge_n(const Tokens& candidate, const std::vector<Tokens>& references, int n) {
  if (n < 1) throw MetricError("rouge_n: n must be >= 1");
  if (references.empty()) throw MetricError("rouge_n: no references");
  const auto cand = ngrams(candidate, n);
  std::size_t num = 0, den = 0;
  for (const auto& ref : references) {
    const auto r = ngrams(ref, n);
    num += clipped_matches(cand, r);
    den += total(r);
  }
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta) {
  if (references.empty()) throw MetricError("rouge_l: no references");
  double best = 0.0;
  for (const auto& ref : references) {
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    const double r = lcs / static_cast<double>(ref.size());
    const double p = lcs / static_cast<double>(candidate.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * r * p / (r + b2 * p));
  }
  return best;
}

// ---------------------------------------------------------------------------
// METEOR

namespace {

class MeteorSearch {
 public:
  MeteorSearch(const Tokens& cand, const Tokens& ref, std::size_t budget)
      : cand_(cand), budget_(budget), used_(ref.size(), false) {
    std::map<std::string, std::size_t> cand_counts;
    for (const auto& t : cand) ++cand_counts[t];
    for (std::size_t j = 0; j < ref.size(); ++j) ref_positions_[ref[j]].push_back(j);
    for (const auto& [tok, cc] : cand_counts) {
      auto it = ref_positions_.find(tok);
      const std::size_t rc = it == ref_positions_.end() ? 0 : it->second.size();
      matches_ += std::min(cc, rc);
      skips_left_[tok] = cc - std::min(cc, rc);
    }
  }

  MeteorAlignment run() {
    MeteorAlignment a;
    a.matches = matches_;
    if (matches_ == 0) return a;
    dfs(0, -1, 0);
    a.chunks = best_;
    a.exhaustive = nodes_ <= budget_;
    return a;
  }

 private:
  void dfs(std::size_t i, long prev, std::size_t chunks) {
    if (++nodes_ > budget_ && best_ != kNone) return;
    if (chunks >= best_) return;
    if (i == cand_.size()) {
      best_ = chunks;
      return;
    }
    const auto& tok = cand_[i];
    auto it = ref_positions_.find(tok);
    if (it != ref_positions_.end()) {
      // Try extending the current chunk first so a good bound appears early.
      std::vector<std::size_t> order;
      for (std::size_t j : it->second) {
        if (!used_[j]) order.push_back(j);
      }
      std::stable_partition(order.begin(), order.end(),
                            [&](std::size_t j) { return static_cast<long>(j) == prev + 1; });
      for (std::size_t j : order) {
        const bool extends = prev >= 0 && static_cast<long>(j) == prev + 1;
        used_[j] = true;
        dfs(i + 1, static_cast<long>(j), chunks + (extends ? 0 : 1));
        used_[j] = false;
      }
    }
    auto& skips = skips_left_[tok];
    if (skips > 0) {
      --skips;
      dfs(i + 1, -1, chunks);
      ++skips;
    }
  }

  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  const Tokens& cand_;
  std::size_t budget_;
  std::vector<bool> used_;
  std::map<std::string, std::vector<std::size_t>> ref_positions_;
  std::map<std::string, std::size_t> skips_left_;
  std::size_t matches_ = 0;
  std::size_t best_ = kNone;
  std::size_t nodes_ = 0;
};

}  // namespace

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference,
                             std::size_t node_budget) {
  return MeteorSearch(candidate, reference, node_budget).run();
}

double meteor(const Tokens& candidate, const Tokens& reference) {
  const auto a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3.0);
  return f * (1.0 - penalty);
}

// ---------------------------------------------------------------------------
// CIDEr

CiderScorer::CiderScorer(const std::vector<std::vector<Tokens>>& references, int max_n)
    : references_(references), max_n_(max_n) {
  if (max_n < 1) throw MetricError("cider: N must be >= 1");
  if (references_.size() < 2) {
    throw MetricError("cider: need at least 2 reference documents");
  }
  for (const auto& doc : references_) {
    if (doc.empty()) throw MetricError("cider: item without references");
    std::set<Gram> seen;
    for (const auto& ref : doc) {
      for (int n = 1; n <= max_n_; ++n) {
        for (const auto& [g, _] : ngrams(ref, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) ++df_[g];
  }
}

CiderScorer::Vector CiderScorer::weights(const Tokens& tokens, int n) const {
  Vector v;
  const double docs = static_cast<double>(references_.size());
  for (const auto& [g, count] : ngrams(tokens, n)) {
    auto it = df_.find(g);
    const double df = it == df_.end() ? 1.0 : static_cast<double>(it->second);
    v[g] = static_cast<double>(count) * std::log(docs / df);
  }
  return v;
}

double CiderScorer::score(const Tokens& candidate, std::size_t item) const {
  if (item >= references_.size()) throw MetricError("cider: item index out of range");
  if (candidate.empty()) return 0.0;
  const auto& refs = references_[item];
  double total_score = 0.0;
  for (int n = 1; n <= max_n_; ++n) {
    const auto vc = weights(candidate, n);
    double norm_c = 0.0;
    for (const auto& [_, w] : vc) norm_c += w * w;
    norm_c = std::sqrt(norm_c);
    double sum = 0.0;
    for (const auto& ref : refs) {
      const auto vr = weights(ref, n);
      double norm_r = 0.0, dot = 0.0;
      for (const auto& [g, w] : vr) {
        norm_r += w * w;
        if (auto it = vc.find(g); it != vc.end()) dot += w * it->second;
      }
      norm_r = std::sqrt(norm_r);
      if (norm_c > 0.0 && norm_r > 0.0) sum += dot / (norm_c * norm_r);
    }
    total_score += sum / static_cast<double>(refs.size()) / static_cast<double>(max_n_);
  }
  return total_score;
}

std::vector<double> cider(const std::vector<Tokens>& candidates,
                          const std::vector<std::vector<Tokens>>& references, int max_n) {
  if (candidates.size() != references.size()) {
    throw MetricError("cider: candidates and references differ in length");
  }
  const CiderScorer scorer(references, max_n);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back(scorer.score(candidates[i], i));
  return out;
}

}  // namespace kerl::metrics
