#include "skewprobe/skew_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "skewprobe/errors.hpp"

namespace skewprobe {

DesiredDistribution DesiredDistribution::uniform(
    const std::vector<std::string>& types, const std::vector<std::vector<std::string>>& values) {
  if (types.empty() || types.size() != values.size())
    throw ConfigError("desired: one value list per attribute type required");
  std::vector<Combo> combos{{}};
  for (const auto& vs : values) {
    if (vs.empty()) throw ConfigError("desired: attribute type with no values");
    std::vector<Combo> next;
    for (const auto& c : combos) {
      for (const auto& v : vs) {
        auto extended = c;
        extended.push_back(v);
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }
  DesiredDistribution d;
  d.types = types;
  const double p = 1.0 / static_cast<double>(combos.size());
  for (auto& c : combos) d.probs.emplace_back(std::move(c), p);
  return d;
}

void DesiredDistribution::validate() const {
  if (types.empty()) throw ConfigError("desired: no attribute types");
  if (probs.empty()) throw ConfigError("desired: no combinations");
  std::set<Combo> seen;
  double total = 0.0;
  for (const auto& [combo, p] : probs) {
    if (combo.size() != types.size())
      throw ConfigError("desired: combination arity does not match attribute types");
    if (!seen.insert(combo).second) throw ConfigError("desired: duplicate combination");
    if (!(p > 0.0) || !std::isfinite(p)) throw ConfigError("desired: probabilities must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("desired: probabilities do not sum to 1");
  // Every combination of the observed per-type values must be present.
  std::size_t product = 1;
  for (std::size_t t = 0; t < types.size(); ++t) {
    std::set<std::string> vs;
    for (const auto& [combo, p] : probs) vs.insert(combo[t]);
    product *= vs.size();
  }
  if (product != probs.size()) throw ConfigError("desired: missing attribute combinations");
}

std::vector<SkewValue> skew_at_k(const RetrievalResult& result,
                                 const std::map<std::string, Combo>& labels,
                                 const DesiredDistribution& desired) {
  const auto k = result.ranked.size();
  if (k == 0) throw DataError("skew: empty retrieval (K = 0)");
  std::map<Combo, std::size_t> counts;
  for (const auto& [combo, p] : desired.probs) counts[combo] = 0;
  for (const auto& img : result.ranked) {
    auto it = labels.find(img.id);
    if (it == labels.end()) throw DataError("skew: unlabeled image '" + img.id + "'");
    auto slot = counts.find(it->second);
    if (slot == counts.end())
      throw DataError("skew: image '" + img.id + "' has a combination outside the desired distribution");
    ++slot->second;
  }
  std::vector<SkewValue> out;
  out.reserve(desired.probs.size());
  for (const auto& [combo, p] : desired.probs) {
    SkewValue v;
    v.combo = combo;
    v.count = counts[combo];
    v.actual = static_cast<double>(v.count) / static_cast<double>(k);
    v.desired = p;
    v.skew = v.count == 0 ? kNegInf : std::log(v.actual / v.desired);
    out.push_back(std::move(v));
  }
  return out;
}

double max_skew_at_k(std::span<const SkewValue> values) {
  if (values.empty()) throw DataError("max skew of an empty list");
  double best = kNegInf;
  for (const auto& v : values) best = std::max(best, v.skew);
  return best;
}

SkewReport make_report(std::string subject, const RetrievalResult& result,
                       const std::map<std::string, Combo>& labels,
                       const DesiredDistribution& desired) {
  SkewReport report;
  report.subject = std::move(subject);
  report.k = result.ranked.size();
  report.per_combo = skew_at_k(result, labels, desired);
  report.max_skew = max_skew_at_k(report.per_combo);
  report.ranked = result.ranked;
  for (const auto& v : report.per_combo) {
    report.proportions.emplace_back(v.combo, v.actual);
    for (std::size_t t = 0; t < desired.types.size(); ++t)
      report.marginals[desired.types[t]][v.combo[t]] += v.actual;
  }
  return report;
}

SkewReport audit_subject(const EmbeddingStore& store, std::string_view subject,
                         const AuditSpec& spec) {
  const auto query = build_neutral_query(store, subject);
  const std::multiset<std::string> segment(spec.segment_types.begin(), spec.segment_types.end());
  const PoolFilter pool = [&](const EmbeddingRecord& r) {
    if (r.subject != subject) return false;
    std::multiset<std::string> types;
    for (const auto& av : r.attr_values) types.insert(av.type);
    if (types != segment) return false;
    return !spec.restrict || spec.restrict(r);
  };
  const auto result = top_k(store, query, spec.k, pool);

  std::map<std::string, Combo> labels;
  for (const auto& img : result.ranked) {
    const auto& rec = store.record(img.row);
    Combo combo;
    for (const auto& t : spec.target_types) {
      const auto* v = rec.attr(t);
      if (v == nullptr) throw DataError("image '" + rec.id + "' has no '" + t + "' attribute");
      combo.push_back(*v);
    }
    labels.emplace(img.id, std::move(combo));
  }
  return make_report(std::string(subject), result, labels, spec.desired);
}

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

CorpusSummary summarize_corpus(std::map<std::string, SkewReport> reports) {
  if (reports.empty()) throw DataError("corpus summary needs at least one subject");
  CorpusSummary s;
  std::vector<double> values;
  values.reserve(reports.size());
  double sum = 0.0;
  bool first = true;
  for (const auto& [subject, r] : reports) {
    values.push_back(r.max_skew);
    sum += r.max_skew;
    // Strict comparisons keep the lexicographically smallest subject on ties.
    if (first || r.max_skew < s.min_subject.second) s.min_subject = {subject, r.max_skew};
    if (first || r.max_skew > s.max_subject.second) s.max_subject = {subject, r.max_skew};
    first = false;
  }
  s.mean_max_skew = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  s.quartiles = {values.front(), quantile(values, 0.25), quantile(values, 0.5),
                 quantile(values, 0.75), values.back()};
  s.per_subject = std::move(reports);
  return s;
}

}  // namespace skewprobe
