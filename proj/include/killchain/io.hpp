#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace killchain {

using Json = nlohmann::json;

/// Whole-file read. Throws IoError naming the path.
std::string read_text_file(const std::filesystem::path& path);

/// Truncating write. Throws IoError naming the path.
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Parses a JSON document; syntax errors become ParseError with the failing line.
Json parse_json(std::string_view text, const std::string& source);

/// 1-based line number containing byte offset `byte` of `text`.
std::size_t line_of_offset(std::string_view text, std::size_t byte);

/// Stable pretty serialization used for every JSON file the tools write.
std::string dump_json(const Json& j);

}  // namespace killchain
