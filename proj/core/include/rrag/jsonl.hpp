#pragma once

#include <cstddef>
#include <fstream>
#include <functional>
#include <istream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace rrag {

/// Calls `on_line(line_number, text)` for every non-blank line (1-based).
void for_each_line(std::istream& in,
                   const std::function<void(std::size_t, std::string_view)>& on_line);

/// Opens `path` for reading; throws Error(Io) on failure.
std::ifstream open_input(const std::string& path);
/// Opens `path` for writing (binary, truncating); throws Error(Io) on failure.
std::ofstream open_output(const std::string& path);

/// Parses one JSON object; throws Error(MalformedRecord) naming `line`.
nlohmann::json parse_json_record(std::string_view text, std::size_t line);

/// Required string field; throws Error(MissingField).
std::string require_string(const nlohmann::json& j, std::string_view key);
/// Optional string field, empty when absent or null.
std::string optional_string(const nlohmann::json& j, std::string_view key);

/// One compact JSON document followed by '\n'.
void write_json_line(std::ostream& out, const nlohmann::ordered_json& j);

/// Whole-file read (binary); throws Error(Io).
std::string read_file(const std::string& path);

}  // namespace rrag
