#include "rrag/jsonl.hpp"

#include <sstream>

#include "rrag/error.hpp"
#include "text_util.hpp"

namespace rrag {

void for_each_line(std::istream& in,
                   const std::function<void(std::size_t, std::string_view)>& on_line) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    on_line(number, line);
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  return out;
}

nlohmann::json parse_json_record(std::string_view text, std::size_t line) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::MalformedRecord,
                "line " + std::to_string(line) + ": not a JSON object");
  }
  return j;
}

std::string require_string(const nlohmann::json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw Error(ErrorCode::MissingField, "missing string field '" + std::string(key) + "'");
  }
  return it->get<std::string>();
}

std::string optional_string(const nlohmann::json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) {
    throw Error(ErrorCode::MalformedRecord, "field '" + std::string(key) + "' is not a string");
  }
  return it->get<std::string>();
}

void write_json_line(std::ostream& out, const nlohmann::ordered_json& j) {
  out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict) << '\n';
}

std::string read_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace rrag
