#include "skewprobe/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "skewprobe/errors.hpp"

namespace skewprobe {

namespace {

bool is_neutral_text(const EmbeddingRecord& r) {
  return r.modality == Modality::text && r.caption_id.starts_with(kNeutralIdPrefix);
}

PoolFilter attribute_filter(std::string_view type, std::string_view value) {
  return [type = std::string(type), value = std::string(value)](const EmbeddingRecord& r) {
    const auto* v = r.attr(type);
    return r.modality == Modality::image && v != nullptr && *v == value;
  };
}

}  // namespace

bool ranks_before(const RankedImage& a, const RankedImage& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

NeutralQuery build_neutral_query(const EmbeddingStore& store, std::string_view subject) {
  std::vector<std::pair<std::string, std::size_t>> sources;
  for (const auto& r : store.records())
    if (is_neutral_text(r) && r.subject == subject) sources.emplace_back(r.caption_id, r.row);
  if (sources.empty())
    throw DataError("no neutral text rows for subject '" + std::string(subject) + "'");
  // Accumulate in caption_id order.
  std::sort(sources.begin(), sources.end());

  NeutralQuery q;
  q.subject = std::string(subject);
  q.embedding.assign(store.dim(), 0.0);
  for (const auto& [cid, row] : sources) {
    const auto v = store.vector(row);
    for (std::size_t i = 0; i < v.size(); ++i) q.embedding[i] += v[i];
    q.source_caption_ids.push_back(cid);
  }
  double norm_sq = 0.0;
  for (double& x : q.embedding) {
    x /= static_cast<double>(sources.size());
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  if (!(norm > 1e-12))
    throw DataError("neutral query for subject '" + std::string(subject) + "' has zero norm");
  for (double& x : q.embedding) x /= norm;
  return q;
}

RetrievalResult top_k(const EmbeddingStore& store, const NeutralQuery& query, std::size_t k,
                      const PoolFilter& pool) {
  if (k == 0) throw ConfigError("top_k: k must be at least 1");
  if (query.embedding.size() != store.dim())
    throw DataError("top_k: query dim " + std::to_string(query.embedding.size()) +
                    " does not match store dim " + std::to_string(store.dim()));

  std::vector<RankedImage> scored;
  for (const auto& r : store.records()) {
    if (r.modality != Modality::image || (pool && !pool(r))) continue;
    scored.push_back({r.id, r.row, dot(query.embedding, store.vector(r.row))});
  }
  if (scored.empty())
    throw DataError("top_k: empty candidate pool for subject '" + query.subject + "'");

  const auto n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    ranks_before);
  scored.resize(n);
  return {query.subject, k, std::move(scored)};
}

PoolFilter marginal_pool(const EmbeddingStore& store, std::string_view type,
                         std::string_view value) {
  std::set<std::string, std::less<>> values;
  for (const auto& r : store.records())
    if (const auto* v = r.attr(type)) values.insert(*v);
  if (values.empty()) throw ConfigError("unknown attribute type '" + std::string(type) + "'");
  if (!values.contains(value))
    throw ConfigError("attribute type '" + std::string(type) + "' has no value '" +
                      std::string(value) + "'");
  return attribute_filter(type, value);
}

PoolFilter marginal_pool(const AttributeGrid& grid, std::string_view type, std::string_view value) {
  const auto& t = grid.type(type);
  if (std::find(t.values.begin(), t.values.end(), value) == t.values.end())
    throw ConfigError("attribute type '" + std::string(type) + "' has no value '" +
                      std::string(value) + "'");
  return attribute_filter(type, value);
}

}  // namespace skewprobe
