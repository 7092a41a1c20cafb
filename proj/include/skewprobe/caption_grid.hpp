#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace skewprobe {

/// A named attribute axis such as race or gender, with its ordered labels.
struct AttributeType {
  std::string name;
  std::vector<std::string> values;
};

/// Indices into AttributeGrid::attribute_types. `first` supplies the word
/// placed directly after the prefix, `second` the word before the subject.
struct AttributePair {
  std::size_t first = 0;
  std::size_t second = 0;
};

/// The caption space: prefixes x subjects x (for each pair) A_i x A_j.
struct AttributeGrid {
  std::vector<std::string> prefixes;
  std::vector<std::string> subjects;
  std::vector<AttributeType> attribute_types;
  std::vector<AttributePair> pairs;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  const AttributeType& type(std::string_view name) const;
  std::size_t type_index(std::string_view name) const;

  /// "race-gender" style key for a pair.
  std::string pair_key(const AttributePair& pair) const;
  /// Inverse of pair_key; throws ConfigError for unknown keys.
  const AttributePair& find_pair(std::string_view key) const;
};

struct AttrValue {
  std::string type;
  std::string value;

  auto operator<=>(const AttrValue&) const = default;
};

/// One caption. Counterfactual captions carry two attribute values,
/// probe captions one, neutral captions none.
struct CaptionRecord {
  std::string caption_id;
  std::string prefix;
  std::string subject;
  std::vector<AttrValue> attr_values;
  std::string text;

  bool operator==(const CaptionRecord&) const = default;

  /// "race-gender" for a counterfactual caption; empty otherwise.
  std::string pair_key() const;
};

struct TemplateKey {
  std::string prefix;
  std::string subject;
  std::string pair;

  auto operator<=>(const TemplateKey&) const = default;
};

struct CounterfactualSet {
  std::string set_id;
  TemplateKey key;
  std::size_t candidate_index = 0;
  std::vector<CaptionRecord> members;
};

/// Joins `prefix` and `rest` with one space. If the prefix ends in the
/// indefinite article ("a"/"an", any case) it is rewritten to agree with
/// the first letter of `rest`.
std::string join_with_article(std::string_view prefix, std::string_view rest);

std::string render_caption(std::string_view prefix, std::string_view a1, std::string_view a2,
                           std::string_view subject);
std::string neutral_caption(std::string_view prefix, std::string_view subject);
/// "a female person", "an Indian person".
std::string probe_caption(std::string_view value);

/// "{pair}:{subject_index}:{prefix_index}:{a1_index}:{a2_index}"
std::string caption_id(std::string_view pair, std::size_t subject_index, std::size_t prefix_index,
                       std::size_t a1_index, std::size_t a2_index);
/// "{pair}:{subject_index}:{prefix_index}"
std::string prototype_set_id(std::string_view pair, std::size_t subject_index,
                             std::size_t prefix_index);
std::string neutral_caption_id(std::size_t subject_index, std::size_t prefix_index);
std::string probe_caption_id(std::string_view type, std::string_view value);

inline constexpr std::string_view kNeutralIdPrefix = "neutral:";
inline constexpr std::string_view kProbeIdPrefix = "probe:";

/// One prototype set (candidate_index 0) per (pair, subject, prefix), in
/// that nesting order. Members are A_i-major.
std::vector<CounterfactualSet> build_corpus(const AttributeGrid& grid);

/// Flattened captions of build_corpus in the same order.
std::vector<CaptionRecord> corpus_captions(const AttributeGrid& grid);

/// Attribute-free captions, subjects outer, prefixes inner.
std::vector<CaptionRecord> neutral_captions(const AttributeGrid& grid);

/// "a/an {value} person" for every value of every attribute type.
std::vector<CaptionRecord> probe_captions(const AttributeGrid& grid);

struct DuplicateText {
  std::string text;
  std::vector<std::string> caption_ids;
};

/// Rendered texts shared by more than one caption, sorted by text.
std::vector<DuplicateText> find_duplicate_texts(const std::vector<CaptionRecord>& captions);

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();

 private:
  std::uint64_t state_;
};

struct OccupationSplit {
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Deterministic train/test partition of subjects: byte-order sort, then a
/// SplitMix64-driven Fisher-Yates shuffle, then the first
/// round(test_fraction * n) subjects form the test side.
OccupationSplit split_occupations(std::vector<std::string> subjects, double test_fraction,
                                  std::uint64_t seed);

}  // namespace skewprobe
