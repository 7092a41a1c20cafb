#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace skewprobe {

using json = nlohmann::json;

/// Deterministic JSON text: object keys sorted, floats printed with 17
/// significant digits (round-trip exact), integral floats keep a ".0".
/// indent < 0 gives the compact single-line form.
std::string dump_json(const json& value, int indent = -1);

json read_json_file(const std::filesystem::path& path);
std::vector<json> read_jsonl_file(const std::filesystem::path& path);

/// Writes text to path via a temp file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// JSON number formatter shared with CSV output.
std::string format_double(double v);

}  // namespace skewprobe
