#include "skewprobe/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "skewprobe/errors.hpp"
#include "skewprobe/serialization.hpp"

namespace fs = std::filesystem;

namespace skewprobe {

namespace {

[[maybe_unused]] std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

void decode_f32le(const char* bytes, std::size_t n, float* out) {
  std::memcpy(out, bytes, n * sizeof(float));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n; ++i)
      out[i] = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(out[i])));
  }
}

std::string encode_f32le(std::span<const float> values) {
  std::string bytes(values.size() * sizeof(float), '\0');
  std::memcpy(bytes.data(), values.data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto swapped = byteswap32(std::bit_cast<std::uint32_t>(values[i]));
      std::memcpy(bytes.data() + i * sizeof(float), &swapped, sizeof swapped);
    }
  }
  return bytes;
}

StoreManifest parse_manifest(const json& j) {
  try {
    StoreManifest m;
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw DataError("manifest: unsupported version " + std::to_string(m.version));
    const auto dim = j.at("dim").get<std::int64_t>();
    const auto count = j.at("count").get<std::int64_t>();
    if (dim <= 0) throw DataError("manifest: dim must be positive");
    if (count < 0) throw DataError("manifest: count must be non-negative");
    m.dim = static_cast<std::size_t>(dim);
    m.count = static_cast<std::size_t>(count);
    if (j.at("dtype").get<std::string>() != "f32") throw DataError("manifest: dtype must be \"f32\"");
    if (j.at("endianness").get<std::string>() != "little")
      throw DataError("manifest: endianness must be \"little\"");
    m.normalized = j.at("normalized").get<bool>();
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

json manifest_json(const StoreManifest& m) {
  return {{"version", m.version}, {"dim", m.dim},           {"count", m.count},
          {"dtype", "f32"},       {"endianness", "little"}, {"normalized", m.normalized}};
}

}  // namespace

std::string_view to_string(Modality m) { return m == Modality::text ? "text" : "image"; }

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::text;
  if (s == "image") return Modality::image;
  throw DataError("unknown modality '" + std::string(s) + "'");
}

const std::string* EmbeddingRecord::attr(std::string_view type) const {
  for (const auto& av : attr_values)
    if (av.type == type) return &av.value;
  return nullptr;
}

std::span<const float> EmbeddingStore::vector(std::size_t row) const {
  if (row >= records_.size()) throw std::out_of_range("store row out of range");
  return std::span<const float>(vectors_).subspan(row * manifest_.dim, manifest_.dim);
}

std::optional<std::size_t> EmbeddingStore::find_id(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> EmbeddingStore::find_text(std::string_view caption_id) const {
  auto it = text_by_caption_.find(std::string(caption_id));
  if (it == text_by_caption_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingStore::build_indexes() {
  by_id_.clear();
  text_by_caption_.clear();
  by_id_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    const auto where = "row " + std::to_string(i) + ": ";
    if (r.row != i)
      throw DataError(where + "row field is " + std::to_string(r.row) + ", expected " + std::to_string(i));
    if (r.id.empty()) throw DataError(where + "empty id");
    if (!by_id_.emplace(r.id, i).second) throw DataError(where + "duplicate id '" + r.id + "'");
    if (r.modality == Modality::text && !r.caption_id.empty() &&
        !text_by_caption_.emplace(r.caption_id, i).second)
      throw DataError(where + "second text row for caption '" + r.caption_id + "'");
  }
}

EmbeddingStore EmbeddingStore::from_parts(std::vector<EmbeddingRecord> records,
                                          std::vector<float> vectors, std::size_t dim,
                                          bool normalized) {
  if (dim == 0) throw DataError("store: dim must be positive");
  if (vectors.size() != records.size() * dim)
    throw DataError("store: " + std::to_string(vectors.size()) + " vector components for " +
                    std::to_string(records.size()) + " rows of dim " + std::to_string(dim));
  EmbeddingStore store;
  store.manifest_ = {1, dim, records.size(), normalized};
  store.records_ = std::move(records);
  store.vectors_ = std::move(vectors);
  store.build_indexes();
  return store;
}

EmbeddingStore EmbeddingStore::open(const fs::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  const auto metadata_path = dir / kMetadataFile;
  const auto vectors_path = dir / kVectorsFile;
  for (const auto& p : {manifest_path, metadata_path, vectors_path})
    if (!fs::is_regular_file(p)) throw DataError("store: missing " + p.string());

  json manifest_doc;
  {
    std::ifstream in(manifest_path, std::ios::binary);
    try {
      manifest_doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw DataError(std::string("manifest: ") + e.what());
    }
  }
  const StoreManifest manifest = parse_manifest(manifest_doc);

  const auto expected_bytes = manifest.count * manifest.dim * sizeof(float);
  const auto actual_bytes = fs::file_size(vectors_path);
  if (actual_bytes != expected_bytes)
    throw DataError("store: length mismatch, " + vectors_path.string() + " has " +
                    std::to_string(actual_bytes) + " bytes, expected " +
                    std::to_string(expected_bytes) + " (count " + std::to_string(manifest.count) +
                    " x dim " + std::to_string(manifest.dim) + " x 4)");

  std::vector<EmbeddingRecord> records;
  records.reserve(manifest.count);
  {
    std::ifstream in(metadata_path, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto row = records.size();
      if (row >= manifest.count)
        throw DataError("metadata row " + std::to_string(row) + ": more rows than manifest count " +
                        std::to_string(manifest.count));
      try {
        records.push_back(json::parse(line).get<EmbeddingRecord>());
      } catch (const json::exception& e) {
        throw DataError("metadata row " + std::to_string(row) + ": " + e.what());
      } catch (const DataError& e) {
        throw DataError("metadata row " + std::to_string(row) + ": " + e.what());
      }
    }
  }
  if (records.size() != manifest.count)
    throw DataError("metadata: " + std::to_string(records.size()) + " rows, manifest count " +
                    std::to_string(manifest.count));

  std::vector<float> vectors(manifest.count * manifest.dim);
  if (!vectors.empty()) {
    std::string bytes(expected_bytes, '\0');
    std::ifstream in(vectors_path, std::ios::binary);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw DataError("store: short read on " + vectors_path.string());
    decode_f32le(bytes.data(), vectors.size(), vectors.data());
  }
  return from_parts(std::move(records), std::move(vectors), manifest.dim, manifest.normalized);
}

void write_store(const fs::path& dir, const std::vector<EmbeddingRecord>& records,
                 std::span<const float> vectors, std::size_t dim, bool normalized) {
  // Validates ids, rows and shape before anything touches disk.
  const auto store = EmbeddingStore::from_parts(records, {vectors.begin(), vectors.end()}, dim, normalized);

  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw DataError("store: " + dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !fs::exists(dir / kManifestFile))
      throw DataError("store: refusing to replace non-store directory " + dir.string());
  }

  auto tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  std::string metadata;
  for (const auto& r : store.records()) {
    metadata += dump_json(json(r));
    metadata += '\n';
  }
  const std::pair<std::string_view, std::string> files[] = {
      {kManifestFile, dump_json(manifest_json(store.manifest()), 2) + "\n"},
      {kMetadataFile, std::move(metadata)},
      {kVectorsFile, encode_f32le(store.raw_vectors())},
  };
  for (const auto& [name, content] : files) {
    std::ofstream out(tmp / name, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("store: write failed for " + (tmp / name).string());
  }

  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

void write_store(const fs::path& dir, const EmbeddingStore& store) {
  write_store(dir, store.records(), store.raw_vectors(), store.dim(), store.manifest().normalized);
}

NormalizationReport validate_normalization(const EmbeddingStore& store, double tolerance) {
  NormalizationReport report;
  for (std::size_t row = 0; row < store.size(); ++row) {
    const double norm = std::sqrt(dot(store.vector(row), store.vector(row)));
    if (!(std::abs(norm - 1.0) <= tolerance)) report.deviations.push_back({row, norm});
  }
  report.pass = report.deviations.empty();
  return report;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double dot(std::span<const double> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace skewprobe
