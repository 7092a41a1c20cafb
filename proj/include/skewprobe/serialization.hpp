#pragma once

#include "skewprobe/caption_grid.hpp"
#include "skewprobe/embedding_store.hpp"
#include "skewprobe/filter_pipeline.hpp"
#include "skewprobe/json_io.hpp"
#include "skewprobe/skew_metrics.hpp"

namespace skewprobe {

// Grid config: {"prefixes": [...], "subjects": [...],
//   "attribute_types": [{"name": ..., "values": [...]}], "pairs": [["race", "gender"], ...]}
AttributeGrid grid_from_json(const json& j);
json grid_to_json(const AttributeGrid& grid);

void to_json(json& j, const AttrValue& v);
void from_json(const json& j, AttrValue& v);
void to_json(json& j, const CaptionRecord& c);
void from_json(const json& j, CaptionRecord& c);
void to_json(json& j, const EmbeddingRecord& r);
void from_json(const json& j, EmbeddingRecord& r);
void to_json(json& j, const OccupationSplit& s);

/// "-inf" for kNegInf, a number otherwise.
json skew_to_json(double skew);

json report_to_json(const SkewReport& r);
json summary_to_json(const CorpusSummary& s);
json desired_to_json(const DesiredDistribution& d);
/// {"types": [...], "probs": [{"values": [...], "p": ...}, ...]}
DesiredDistribution desired_from_json(const json& j);

DetectabilityThresholds thresholds_from_json(const json& j);
json thresholds_to_json(const DetectabilityThresholds& t);

/// {"set_id": ..., "labels": {"race": {"detectable_count": 9, "keep": true}, ...}}
ManualLabel manual_label_from_json(const json& j);

json funnel_to_json(const FunnelResult& r);
json kept_to_json(const FunnelResult& r);

}  // namespace skewprobe
