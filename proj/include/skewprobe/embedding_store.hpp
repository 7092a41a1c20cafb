#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "skewprobe/caption_grid.hpp"

namespace skewprobe {

enum class Modality { text, image };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

/// Metadata for one row of a store. Image rows reference the caption they
/// were generated for through caption_id; text rows carry the caption's id.
struct EmbeddingRecord {
  std::size_t row = 0;
  std::string id;
  Modality modality = Modality::text;
  std::string caption_id;
  std::string set_id;
  std::string subject;
  std::string prefix;
  std::vector<AttrValue> attr_values;
  std::map<std::string, double> aux_scores;

  bool operator==(const EmbeddingRecord&) const = default;

  /// Value of attribute `type`, or nullptr when the row does not carry it.
  const std::string* attr(std::string_view type) const;
};

struct StoreManifest {
  int version = 1;
  std::size_t dim = 0;
  std::size_t count = 0;
  bool normalized = true;
};

inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kMetadataFile = "metadata.jsonl";
inline constexpr std::string_view kVectorsFile = "vectors.f32le";
inline constexpr double kNormTolerance = 1e-4;

/// Immutable in-memory view of an embedding store directory:
///
///   manifest.json    {"version","dim","count","dtype":"f32","endianness":"little","normalized"}
///   metadata.jsonl   one EmbeddingRecord per line, in row order
///   vectors.f32le    count x dim IEEE-754 binary32, row-major, little-endian
///
/// Loading validates structure (byte length, row numbering, id uniqueness)
/// but never touches vector values; see validate_normalization.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  /// Throws DataError (with the offending row where applicable).
  static EmbeddingStore open(const std::filesystem::path& dir);

  /// Builds a store from parts with the same checks as open(). Record
  /// `row` fields must equal their position.
  static EmbeddingStore from_parts(std::vector<EmbeddingRecord> records, std::vector<float> vectors,
                                   std::size_t dim, bool normalized = true);

  const StoreManifest& manifest() const { return manifest_; }
  std::size_t size() const { return records_.size(); }
  std::size_t dim() const { return manifest_.dim; }

  const EmbeddingRecord& record(std::size_t row) const { return records_.at(row); }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  std::span<const float> vector(std::size_t row) const;
  std::span<const float> raw_vectors() const { return vectors_; }

  std::optional<std::size_t> find_id(std::string_view id) const;
  /// The text row embedding caption `caption_id`, if any.
  std::optional<std::size_t> find_text(std::string_view caption_id) const;

 private:
  void build_indexes();

  StoreManifest manifest_;
  std::vector<EmbeddingRecord> records_;
  std::vector<float> vectors_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> text_by_caption_;
};

/// Writes a store atomically (sibling temp directory, then rename). An
/// existing store at `dir` is replaced; any other non-empty directory is
/// refused.
void write_store(const std::filesystem::path& dir, const std::vector<EmbeddingRecord>& records,
                 std::span<const float> vectors, std::size_t dim, bool normalized = true);
void write_store(const std::filesystem::path& dir, const EmbeddingStore& store);

struct NormDeviation {
  std::size_t row;
  double norm;
};

struct NormalizationReport {
  bool pass = true;
  std::vector<NormDeviation> deviations;
};

NormalizationReport validate_normalization(const EmbeddingStore& store,
                                           double tolerance = kNormTolerance);

double dot(std::span<const float> a, std::span<const float> b);
double dot(std::span<const double> a, std::span<const float> b);

}  // namespace skewprobe
