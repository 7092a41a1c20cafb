#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skewprobe/embedding_store.hpp"
#include "skewprobe/retrieval.hpp"

namespace skewprobe {

/// Attribute values of one combination, aligned with the audited types,
/// e.g. {"Asian", "female"} for (race, gender) or {"male"} for a marginal
/// gender audit.
using Combo = std::vector<std::string>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct DesiredDistribution {
  std::vector<std::string> types;
  /// Every combination of the types' values, in canonical order.
  std::vector<std::pair<Combo, double>> probs;

  static DesiredDistribution uniform(const std::vector<std::string>& types,
                                     const std::vector<std::vector<std::string>>& values);

  /// Probabilities positive and summing to 1 within 1e-9, combos distinct
  /// and of matching arity. Throws ConfigError.
  void validate() const;
};

struct SkewValue {
  Combo combo;
  std::size_t count = 0;
  double actual = 0.0;
  double desired = 0.0;
  /// ln(actual / desired), kNegInf when count == 0.
  double skew = 0.0;
};

std::vector<SkewValue> skew_at_k(const RetrievalResult& result,
                                 const std::map<std::string, Combo>& labels,
                                 const DesiredDistribution& desired);

double max_skew_at_k(std::span<const SkewValue> values);

struct SkewReport {
  std::string subject;
  std::size_t k = 0;
  std::vector<SkewValue> per_combo;
  double max_skew = 0.0;
  std::vector<std::pair<Combo, double>> proportions;
  /// type -> value -> share of the top-k.
  std::map<std::string, std::map<std::string, double>> marginals;
  std::vector<RankedImage> ranked;
};

/// What one audit measures. The pool is the subject's image rows whose
/// attribute types are exactly `segment_types` (in any order) and which
/// pass `restrict`; skew is counted over `target_types`.
struct AuditSpec {
  std::vector<std::string> segment_types;
  std::vector<std::string> target_types;
  std::size_t k = 0;
  DesiredDistribution desired;
  PoolFilter restrict;
};

/// Neutral query -> exact top-k over the pool -> Skew@K -> MaxSkew@K.
SkewReport audit_subject(const EmbeddingStore& store, std::string_view subject,
                         const AuditSpec& spec);

/// Counts of top-k combos without going through retrieval; shared by
/// audit_subject and tests.
SkewReport make_report(std::string subject, const RetrievalResult& result,
                       const std::map<std::string, Combo>& labels,
                       const DesiredDistribution& desired);

struct FiveNumberSummary {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Linear-interpolation quantile (numpy's default) over sorted values.
double quantile(std::span<const double> sorted, double q);

struct CorpusSummary {
  std::map<std::string, SkewReport> per_subject;
  double mean_max_skew = 0.0;
  std::pair<std::string, double> min_subject;
  std::pair<std::string, double> max_subject;
  FiveNumberSummary quartiles;
};

/// Throws DataError on an empty input. Extremes break ties toward the
/// lexicographically smallest subject.
CorpusSummary summarize_corpus(std::map<std::string, SkewReport> reports);

}  // namespace skewprobe
