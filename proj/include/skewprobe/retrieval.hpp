#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "skewprobe/embedding_store.hpp"

namespace skewprobe {

/// Attribute-neutral query for one subject: the renormalized mean of the
/// subject's neutral caption embeddings over all prefixes.
struct NeutralQuery {
  std::string subject;
  std::vector<double> embedding;
  /// Averaged caption ids, sorted; the mean is accumulated in this order.
  std::vector<std::string> source_caption_ids;
};

struct RankedImage {
  std::string id;
  std::size_t row = 0;
  double score = 0.0;

  bool operator==(const RankedImage&) const = default;
};

/// Top-k images, scores non-increasing, ties by ascending id.
struct RetrievalResult {
  std::string subject;
  std::size_t k = 0;
  std::vector<RankedImage> ranked;

  bool operator==(const RetrievalResult&) const = default;
};

using PoolFilter = std::function<bool(const EmbeddingRecord&)>;

/// Throws DataError when the subject has no neutral text rows or the mean
/// vanishes.
NeutralQuery build_neutral_query(const EmbeddingStore& store, std::string_view subject);

/// Exact scan over image rows accepted by `pool`. Throws DataError on an
/// empty pool and ConfigError for k == 0.
RetrievalResult top_k(const EmbeddingStore& store, const NeutralQuery& query, std::size_t k,
                      const PoolFilter& pool);

/// Image rows whose attributes include (type, value). The pair is checked
/// against every row of the store, text rows included, so a value known only
/// from probe captions yields an empty pool rather than an error. Throws
/// ConfigError for an unknown type or value.
PoolFilter marginal_pool(const EmbeddingStore& store, std::string_view type,
                         std::string_view value);
/// Same predicate, with type and value checked against a grid instead.
PoolFilter marginal_pool(const AttributeGrid& grid, std::string_view type, std::string_view value);

/// Ranking order used by top_k: higher score first, then ascending id.
bool ranks_before(const RankedImage& a, const RankedImage& b);

}  // namespace skewprobe
