#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skewprobe/caption_grid.hpp"
#include "skewprobe/embedding_store.hpp"

namespace skewprobe {

/// One over-generated image set for a template key, with image rows aligned
/// to the template's member captions.
struct CandidateSet {
  std::string set_id;
  TemplateKey key;
  std::vector<std::string> pair_types;
  std::size_t candidate_index = 0;
  std::vector<CaptionRecord> members;
  std::vector<std::size_t> image_rows;
};

/// Groups the store's image rows by set_id and matches each group against
/// the caption corpus. Candidates come back sorted by set_id; a group that
/// mixes templates or does not cover every member caption exactly once is
/// a DataError.
std::vector<CandidateSet> assemble_candidates(const EmbeddingStore& store,
                                              const std::vector<CaptionRecord>& captions);

/// Candidates built from image-row metadata alone (no caption corpus), for
/// callers that only need detectability counts. Member texts are empty.
std::vector<CandidateSet> candidates_from_store(const EmbeddingStore& store);

struct StageDecision {
  bool pass = true;
  std::vector<std::string> reasons;
};

inline constexpr double kDefaultSimilarityTau = 0.2;
inline constexpr double kDefaultNsfwThreshold = 0.5;
inline constexpr std::string_view kNsfwScoreKey = "nsfw_score";

/// Caption-to-own-image cosine >= tau for every member and image-image
/// cosine >= tau for every unordered pair of members.
StageDecision similarity_filter(const CandidateSet& candidate, const EmbeddingStore& store,
                                double tau = kDefaultSimilarityTau);

/// Fails the whole set if any image has nsfw_score >= threshold.
StageDecision nsfw_filter(const CandidateSet& candidate, const EmbeddingStore& store,
                          double threshold = kDefaultNsfwThreshold);

/// Member images whose closest "a/an {value} person" probe (over every probe
/// of `type` in the store) is their own target value. A tie at the top
/// counts as a miss.
std::size_t detectability_count(const CandidateSet& candidate, const EmbeddingStore& store,
                                std::string_view type);

/// pair key -> attribute type -> minimum detectable count.
using DetectabilityThresholds = std::map<std::string, std::map<std::string, int>>;

/// counts and thresholds keyed by attribute type; every type in `types`
/// must be present in both.
StageDecision detectability_decision(const std::map<std::string, std::size_t>& counts,
                                     const std::map<std::string, int>& thresholds,
                                     const std::vector<std::string>& types);

StageDecision detectability_filter(const CandidateSet& candidate, const EmbeddingStore& store,
                                   const DetectabilityThresholds& thresholds);

/// Human annotation for one sampled set.
struct ManualLabel {
  struct Entry {
    int detectable_count = 0;
    bool keep = true;
  };
  std::string set_id;
  std::map<std::string, Entry> per_type;
};

struct LabeledCount {
  int count = 0;
  bool keep = true;
};

/// Labels for which (count >= t) agrees with keep.
std::size_t threshold_agreement(std::span<const LabeledCount> labels, int t);

/// argmax_t agreement(t) over t in [0, set_size + 1], ties to the largest t.
/// Throws DataError on empty labels or counts outside [0, set_size].
int learn_threshold(std::span<const LabeledCount> labels, int set_size);
int learn_threshold(std::span<const ManualLabel> labels, std::string_view type, int set_size);

enum class FilterStage { similarity = 0, nsfw = 1, detectability = 2 };
inline constexpr std::array<std::string_view, 3> kStageNames = {"clip_similarity", "nsfw",
                                                                 "attribute_detectability"};

struct StageOutcome {
  bool evaluated = false;
  bool pass = false;
  std::vector<std::string> reasons;
};

struct CandidateStatus {
  std::string set_id;
  std::string pair;
  std::array<StageOutcome, 3> stages;

  bool kept() const { return stages[2].evaluated && stages[2].pass; }
};

/// input count followed by survivors after each stage.
struct FilterFunnel {
  std::size_t input = 0;
  std::array<std::size_t, 3> surviving{};

  /// Percent of the previous stage's survivors removed by `stage`.
  double filtered_out_percent(std::size_t stage) const;
};

struct FilterConfig {
  double tau = kDefaultSimilarityTau;
  double nsfw_threshold = kDefaultNsfwThreshold;
  DetectabilityThresholds thresholds;
  unsigned threads = 1;
};

struct FunnelResult {
  std::vector<CandidateStatus> statuses;
  std::vector<std::string> kept;
  std::map<std::string, FilterFunnel> per_pair;
  FilterFunnel total;
};

/// Runs similarity -> NSFW -> detectability; a set failing a stage is not
/// evaluated further. All survivors are kept, several per template key if
/// they pass. Output does not depend on candidate order or thread count.
FunnelResult run_funnel(std::span<const CandidateSet> candidates, const EmbeddingStore& store,
                        const FilterConfig& config);

/// Rejects thresholds missing for a pair present in `candidates` or lying
/// outside [0, set size + 1]. Throws ConfigError.
void check_thresholds(std::span<const CandidateSet> candidates,
                      const DetectabilityThresholds& thresholds);

}  // namespace skewprobe
