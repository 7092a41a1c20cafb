#include "skewprobe/filter_pipeline.hpp"

#include <algorithm>
#include <limits>

#include "skewprobe/errors.hpp"
#include "skewprobe/json_io.hpp"
#include "skewprobe/parallel.hpp"

namespace skewprobe {

std::vector<CandidateSet> assemble_candidates(const EmbeddingStore& store,
                                              const std::vector<CaptionRecord>& captions) {
  std::map<std::string, const CaptionRecord*, std::less<>> by_caption;
  std::map<TemplateKey, std::vector<const CaptionRecord*>> by_template;
  for (const auto& c : captions) {
    if (c.attr_values.size() != 2) continue;
    if (!by_caption.emplace(c.caption_id, &c).second)
      throw DataError("captions: duplicate caption_id '" + c.caption_id + "'");
    by_template[{c.prefix, c.subject, c.pair_key()}].push_back(&c);
  }

  std::map<std::string, std::vector<std::size_t>> groups;
  for (const auto& r : store.records()) {
    if (r.modality != Modality::image) continue;
    if (r.set_id.empty()) throw DataError("row " + std::to_string(r.row) + ": image without set_id");
    groups[r.set_id].push_back(r.row);
  }

  std::vector<CandidateSet> out;
  out.reserve(groups.size());
  std::map<TemplateKey, std::size_t> next_index;
  for (const auto& [set_id, rows] : groups) {
    CandidateSet cand;
    cand.set_id = set_id;
    std::map<std::string, std::size_t> row_by_caption;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& rec = store.record(rows[i]);
      auto it = by_caption.find(rec.caption_id);
      if (it == by_caption.end())
        throw DataError("set '" + set_id + "': row " + std::to_string(rec.row) +
                        " references unknown caption '" + rec.caption_id + "'");
      const TemplateKey key{it->second->prefix, it->second->subject, it->second->pair_key()};
      if (i == 0) cand.key = key;
      else if (key != cand.key)
        throw DataError("set '" + set_id + "' mixes captions from different templates");
      if (!row_by_caption.emplace(rec.caption_id, rec.row).second)
        throw DataError("set '" + set_id + "' has two images for caption '" + rec.caption_id + "'");
    }
    const auto& members = by_template.at(cand.key);
    if (row_by_caption.size() != members.size())
      throw DataError("set '" + set_id + "' has " + std::to_string(row_by_caption.size()) +
                      " images for " + std::to_string(members.size()) + " member captions");
    for (const auto* m : members) {
      cand.members.push_back(*m);
      cand.image_rows.push_back(row_by_caption.at(m->caption_id));
    }
    cand.pair_types = {members.front()->attr_values[0].type, members.front()->attr_values[1].type};
    cand.candidate_index = next_index[cand.key]++;
    out.push_back(std::move(cand));
  }
  return out;
}

std::vector<CandidateSet> candidates_from_store(const EmbeddingStore& store) {
  std::map<std::string, CandidateSet> groups;
  for (const auto& r : store.records()) {
    if (r.modality != Modality::image) continue;
    if (r.set_id.empty()) throw DataError("row " + std::to_string(r.row) + ": image without set_id");
    if (r.attr_values.size() != 2)
      throw DataError("row " + std::to_string(r.row) + ": image must carry two attribute values");
    auto& cand = groups[r.set_id];
    const std::string pair = r.attr_values[0].type + "-" + r.attr_values[1].type;
    if (cand.members.empty()) {
      cand.set_id = r.set_id;
      cand.key = {r.prefix, r.subject, pair};
      cand.pair_types = {r.attr_values[0].type, r.attr_values[1].type};
    } else if (cand.key.pair != pair) {
      throw DataError("set '" + r.set_id + "' mixes attribute pairs");
    }
    cand.members.push_back({r.caption_id, r.prefix, r.subject, r.attr_values, ""});
    cand.image_rows.push_back(r.row);
  }
  std::vector<CandidateSet> out;
  std::map<TemplateKey, std::size_t> next_index;
  for (auto& [id, cand] : groups) {
    cand.candidate_index = next_index[cand.key]++;
    out.push_back(std::move(cand));
  }
  return out;
}

StageDecision similarity_filter(const CandidateSet& candidate, const EmbeddingStore& store,
                                double tau) {
  StageDecision d;
  const auto n = candidate.members.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cid = candidate.members[i].caption_id;
    const auto text_row = store.find_text(cid);
    if (!text_row) throw DataError("set '" + candidate.set_id + "': no text embedding for caption '" + cid + "'");
    const double cos = dot(store.vector(*text_row), store.vector(candidate.image_rows[i]));
    if (cos < tau) {
      d.pass = false;
      d.reasons.push_back("caption-image " + cid + ": " + format_double(cos));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double cos =
          dot(store.vector(candidate.image_rows[i]), store.vector(candidate.image_rows[j]));
      if (cos < tau) {
        d.pass = false;
        d.reasons.push_back("image-image " + candidate.members[i].caption_id + " " +
                            candidate.members[j].caption_id + ": " + format_double(cos));
      }
    }
  }
  return d;
}

StageDecision nsfw_filter(const CandidateSet& candidate, const EmbeddingStore& store,
                          double threshold) {
  StageDecision d;
  for (const auto row : candidate.image_rows) {
    const auto& rec = store.record(row);
    auto it = rec.aux_scores.find(std::string(kNsfwScoreKey));
    if (it == rec.aux_scores.end())
      throw DataError("row " + std::to_string(row) + ": missing aux score '" +
                      std::string(kNsfwScoreKey) + "'");
    const double score = it->second;
    if (!(score >= 0.0 && score <= 1.0))
      throw DataError("row " + std::to_string(row) + ": nsfw_score outside [0, 1]");
    if (score >= threshold) {
      d.pass = false;
      d.reasons.push_back("nsfw " + rec.caption_id + ": " + format_double(score));
    }
  }
  return d;
}

std::size_t detectability_count(const CandidateSet& candidate, const EmbeddingStore& store,
                                std::string_view type) {
  const std::string probe_prefix = std::string(kProbeIdPrefix) + std::string(type) + ":";
  std::map<std::string, std::size_t> probes;
  for (const auto& r : store.records())
    if (r.modality == Modality::text && r.caption_id.starts_with(probe_prefix))
      probes.emplace(r.caption_id.substr(probe_prefix.size()), r.row);

  std::size_t count = 0;
  for (std::size_t i = 0; i < candidate.members.size(); ++i) {
    const auto& member = candidate.members[i];
    const std::string* target = nullptr;
    for (const auto& av : member.attr_values)
      if (av.type == type) target = &av.value;
    if (target == nullptr)
      throw DataError("caption '" + member.caption_id + "' has no '" + std::string(type) + "' attribute");
    auto target_probe = probes.find(*target);
    if (target_probe == probes.end())
      throw DataError("missing probe embedding '" + probe_prefix + *target + "'");

    const auto image = store.vector(candidate.image_rows[i]);
    const double target_score = dot(store.vector(target_probe->second), image);
    bool strictly_best = true;
    for (const auto& [value, row] : probes) {
      if (value == *target) continue;
      if (dot(store.vector(row), image) >= target_score) {
        strictly_best = false;
        break;
      }
    }
    if (strictly_best) ++count;
  }
  return count;
}

StageDecision detectability_decision(const std::map<std::string, std::size_t>& counts,
                                     const std::map<std::string, int>& thresholds,
                                     const std::vector<std::string>& types) {
  StageDecision d;
  for (const auto& type : types) {
    auto t = thresholds.find(type);
    if (t == thresholds.end()) throw ConfigError("no detectability threshold for '" + type + "'");
    auto c = counts.find(type);
    if (c == counts.end()) throw DataError("no detectability count for '" + type + "'");
    if (static_cast<long long>(c->second) < t->second) {
      d.pass = false;
      d.reasons.push_back(type + ": " + std::to_string(c->second) + " < " + std::to_string(t->second));
    }
  }
  return d;
}

StageDecision detectability_filter(const CandidateSet& candidate, const EmbeddingStore& store,
                                   const DetectabilityThresholds& thresholds) {
  auto per_pair = thresholds.find(candidate.key.pair);
  if (per_pair == thresholds.end())
    throw ConfigError("no detectability thresholds for pair '" + candidate.key.pair + "'");
  std::map<std::string, std::size_t> counts;
  for (const auto& type : candidate.pair_types) counts[type] = detectability_count(candidate, store, type);
  return detectability_decision(counts, per_pair->second, candidate.pair_types);
}

std::size_t threshold_agreement(std::span<const LabeledCount> labels, int t) {
  return static_cast<std::size_t>(std::count_if(
      labels.begin(), labels.end(), [t](const LabeledCount& l) { return (l.count >= t) == l.keep; }));
}

int learn_threshold(std::span<const LabeledCount> labels, int set_size) {
  if (labels.empty()) throw DataError("learn_threshold: no labels");
  if (set_size < 0) throw ConfigError("learn_threshold: negative set size");
  for (const auto& l : labels)
    if (l.count < 0 || l.count > set_size)
      throw DataError("learn_threshold: count " + std::to_string(l.count) + " outside [0, " +
                      std::to_string(set_size) + "]");
  int best_t = 0;
  std::size_t best = 0;
  for (int t = 0; t <= set_size + 1; ++t) {
    const auto a = threshold_agreement(labels, t);
    if (a >= best) {
      best = a;
      best_t = t;
    }
  }
  return best_t;
}

int learn_threshold(std::span<const ManualLabel> labels, std::string_view type, int set_size) {
  std::vector<LabeledCount> flat;
  flat.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = l.per_type.find(std::string(type));
    if (it == l.per_type.end())
      throw DataError("label for set '" + l.set_id + "' has no '" + std::string(type) + "' entry");
    flat.push_back({it->second.detectable_count, it->second.keep});
  }
  return learn_threshold(flat, set_size);
}

double FilterFunnel::filtered_out_percent(std::size_t stage) const {
  const std::size_t before = stage == 0 ? input : surviving.at(stage - 1);
  if (before == 0) return 0.0;
  return 100.0 * static_cast<double>(before - surviving.at(stage)) / static_cast<double>(before);
}

void check_thresholds(std::span<const CandidateSet> candidates,
                      const DetectabilityThresholds& thresholds) {
  for (const auto& c : candidates) {
    auto per_pair = thresholds.find(c.key.pair);
    if (per_pair == thresholds.end())
      throw ConfigError("no detectability thresholds for pair '" + c.key.pair + "'");
    const auto limit = static_cast<int>(c.members.size()) + 1;
    for (const auto& type : c.pair_types) {
      auto t = per_pair->second.find(type);
      if (t == per_pair->second.end())
        throw ConfigError("no detectability threshold for '" + type + "' in pair '" + c.key.pair + "'");
      if (t->second < 0 || t->second > limit)
        throw ConfigError("threshold " + c.key.pair + "/" + type + " = " + std::to_string(t->second) +
                          " outside [0, " + std::to_string(limit) + "]");
    }
  }
}

FunnelResult run_funnel(std::span<const CandidateSet> candidates, const EmbeddingStore& store,
                        const FilterConfig& config) {
  std::vector<const CandidateSet*> ordered;
  ordered.reserve(candidates.size());
  for (const auto& c : candidates) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const CandidateSet* a, const CandidateSet* b) { return a->set_id < b->set_id; });

  FunnelResult result;
  result.statuses.resize(ordered.size());
  parallel_for(ordered.size(), config.threads, [&](std::size_t i) {
    const auto& cand = *ordered[i];
    auto& status = result.statuses[i];
    status.set_id = cand.set_id;
    status.pair = cand.key.pair;
    auto record = [&](FilterStage stage, StageDecision d) {
      auto& o = status.stages[static_cast<std::size_t>(stage)];
      o.evaluated = true;
      o.pass = d.pass;
      o.reasons = std::move(d.reasons);
      return o.pass;
    };
    if (!record(FilterStage::similarity, similarity_filter(cand, store, config.tau))) return;
    if (!record(FilterStage::nsfw, nsfw_filter(cand, store, config.nsfw_threshold))) return;
    record(FilterStage::detectability, detectability_filter(cand, store, config.thresholds));
  });

  for (const auto& st : result.statuses) {
    auto& funnel = result.per_pair[st.pair];
    for (auto* f : {&funnel, &result.total}) {
      ++f->input;
      for (std::size_t s = 0; s < 3; ++s)
        if (st.stages[s].evaluated && st.stages[s].pass) ++f->surviving[s];
    }
    if (st.kept()) result.kept.push_back(st.set_id);
  }
  return result;
}

}  // namespace skewprobe
