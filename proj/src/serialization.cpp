#include "skewprobe/serialization.hpp"

#include <cmath>

#include "skewprobe/errors.hpp"

namespace skewprobe {

AttributeGrid grid_from_json(const json& j) {
  try {
    AttributeGrid grid;
    grid.prefixes = j.at("prefixes").get<std::vector<std::string>>();
    grid.subjects = j.at("subjects").get<std::vector<std::string>>();
    for (const auto& t : j.at("attribute_types"))
      grid.attribute_types.push_back(
          {t.at("name").get<std::string>(), t.at("values").get<std::vector<std::string>>()});
    for (const auto& p : j.at("pairs")) {
      const auto names = p.get<std::vector<std::string>>();
      if (names.size() != 2) throw ConfigError("grid: each pair must name two attribute types");
      grid.pairs.push_back({grid.type_index(names[0]), grid.type_index(names[1])});
    }
    grid.validate();
    return grid;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

json grid_to_json(const AttributeGrid& grid) {
  json types = json::array();
  for (const auto& t : grid.attribute_types) types.push_back({{"name", t.name}, {"values", t.values}});
  json pairs = json::array();
  for (const auto& p : grid.pairs)
    pairs.push_back({grid.attribute_types[p.first].name, grid.attribute_types[p.second].name});
  return {{"prefixes", grid.prefixes},
          {"subjects", grid.subjects},
          {"attribute_types", types},
          {"pairs", pairs}};
}

void to_json(json& j, const AttrValue& v) { j = json::array({v.type, v.value}); }

void from_json(const json& j, AttrValue& v) {
  if (!j.is_array() || j.size() != 2) throw DataError("attr value must be a [type, value] array");
  v.type = j[0].get<std::string>();
  v.value = j[1].get<std::string>();
}

void to_json(json& j, const CaptionRecord& c) {
  j = {{"caption_id", c.caption_id},
       {"prefix", c.prefix},
       {"subject", c.subject},
       {"attr_values", c.attr_values},
       {"text", c.text}};
}

void from_json(const json& j, CaptionRecord& c) {
  c.caption_id = j.at("caption_id").get<std::string>();
  c.prefix = j.value("prefix", std::string{});
  c.subject = j.value("subject", std::string{});
  c.attr_values = j.value("attr_values", std::vector<AttrValue>{});
  c.text = j.at("text").get<std::string>();
}

void to_json(json& j, const EmbeddingRecord& r) {
  json aux = json::object();
  for (const auto& [k, v] : r.aux_scores) aux[k] = v;
  j = {{"row", r.row},
       {"id", r.id},
       {"modality", std::string(to_string(r.modality))},
       {"caption_id", r.caption_id},
       {"set_id", r.set_id},
       {"subject", r.subject},
       {"prefix", r.prefix},
       {"attr_values", r.attr_values},
       {"aux_scores", aux}};
}

void from_json(const json& j, EmbeddingRecord& r) {
  r.row = j.at("row").get<std::size_t>();
  r.id = j.at("id").get<std::string>();
  r.modality = parse_modality(j.at("modality").get<std::string>());
  r.caption_id = j.value("caption_id", std::string{});
  r.set_id = j.value("set_id", std::string{});
  r.subject = j.value("subject", std::string{});
  r.prefix = j.value("prefix", std::string{});
  r.attr_values = j.value("attr_values", std::vector<AttrValue>{});
  r.aux_scores.clear();
  if (j.contains("aux_scores")) {
    for (const auto& [k, v] : j.at("aux_scores").items()) {
      if (!v.is_number()) throw DataError("aux score '" + k + "' is not a number");
      r.aux_scores[k] = v.get<double>();
    }
  }
}

void to_json(json& j, const OccupationSplit& s) {
  j = {{"seed", s.seed}, {"test_fraction", s.test_fraction}, {"train", s.train}, {"test", s.test}};
}

json skew_to_json(double skew) {
  if (std::isinf(skew) && skew < 0) return "-inf";
  return skew;
}

json report_to_json(const SkewReport& r) {
  json per = json::array();
  for (const auto& v : r.per_combo)
    per.push_back({{"values", v.combo},
                   {"count", v.count},
                   {"actual", v.actual},
                   {"desired", v.desired},
                   {"skew", skew_to_json(v.skew)}});
  json props = json::array();
  for (const auto& [combo, p] : r.proportions) props.push_back({{"values", combo}, {"p", p}});
  json ranked = json::array();
  for (const auto& img : r.ranked) ranked.push_back({{"id", img.id}, {"score", img.score}});
  json marginals = json::object();
  for (const auto& [type, shares] : r.marginals)
    for (const auto& [value, p] : shares) marginals[type][value] = p;
  return {{"subject", r.subject}, {"k", r.k},          {"max_skew", r.max_skew},
          {"skews", per},         {"proportions", props}, {"marginals", marginals},
          {"ranked", ranked}};
}

json summary_to_json(const CorpusSummary& s) {
  return {{"subjects", s.per_subject.size()},
          {"mean_max_skew", s.mean_max_skew},
          {"min", {{"subject", s.min_subject.first}, {"max_skew", s.min_subject.second}}},
          {"max", {{"subject", s.max_subject.first}, {"max_skew", s.max_subject.second}}},
          {"quartiles",
           {{"min", s.quartiles.min},
            {"q1", s.quartiles.q1},
            {"median", s.quartiles.median},
            {"q3", s.quartiles.q3},
            {"max", s.quartiles.max}}}};
}

json desired_to_json(const DesiredDistribution& d) {
  json probs = json::array();
  for (const auto& [combo, p] : d.probs) probs.push_back({{"values", combo}, {"p", p}});
  return {{"types", d.types}, {"probs", probs}};
}

DesiredDistribution desired_from_json(const json& j) {
  try {
    DesiredDistribution d;
    d.types = j.at("types").get<std::vector<std::string>>();
    for (const auto& entry : j.at("probs"))
      d.probs.emplace_back(entry.at("values").get<Combo>(), entry.at("p").get<double>());
    d.validate();
    return d;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("desired distribution: ") + e.what());
  }
}

DetectabilityThresholds thresholds_from_json(const json& j) {
  try {
    DetectabilityThresholds out;
    for (const auto& [pair, per_type] : j.items()) {
      auto& slot = out[pair];
      for (const auto& [type, t] : per_type.items()) {
        if (!t.is_number_integer()) throw ConfigError("threshold " + pair + "/" + type + " is not an integer");
        slot[type] = t.get<int>();
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("thresholds: ") + e.what());
  }
}

json thresholds_to_json(const DetectabilityThresholds& t) {
  json out = json::object();
  for (const auto& [pair, per_type] : t)
    for (const auto& [type, v] : per_type) out[pair][type] = v;
  return out;
}

ManualLabel manual_label_from_json(const json& j) {
  ManualLabel label;
  label.set_id = j.at("set_id").get<std::string>();
  for (const auto& [type, entry] : j.at("labels").items())
    label.per_type[type] = {entry.at("detectable_count").get<int>(), entry.at("keep").get<bool>()};
  return label;
}

namespace {

json funnel_json(const FilterFunnel& f) {
  json stages = json::array();
  for (std::size_t s = 0; s < 3; ++s)
    stages.push_back({{"stage", std::string(kStageNames[s])},
                      {"surviving", f.surviving[s]},
                      {"filtered_out_percent", f.filtered_out_percent(s)}});
  return {{"input", f.input}, {"stages", stages}};
}

}  // namespace

json funnel_to_json(const FunnelResult& r) {
  json per = json::object();
  for (const auto& [pair, f] : r.per_pair) per[pair] = funnel_json(f);
  return {{"per_pair", per}, {"total", funnel_json(r.total)}};
}

json kept_to_json(const FunnelResult& r) {
  json statuses = json::array();
  for (const auto& st : r.statuses) {
    json stages = json::object();
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& o = st.stages[s];
      stages[std::string(kStageNames[s])] =
          o.evaluated ? json{{"pass", o.pass}, {"reasons", o.reasons}} : json(nullptr);
    }
    statuses.push_back({{"set_id", st.set_id}, {"pair", st.pair}, {"kept", st.kept()}, {"stages", stages}});
  }
  return {{"kept", r.kept}, {"candidates", statuses}};
}

}  // namespace skewprobe
