#include "skillrouter/corpus/jsonl.hpp"

namespace skillrouter::corpus {

SchemaError::SchemaError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
      file_(file),
      line_(line) {}

std::string schema_header(std::string_view name) {
  return nlohmann::json{{"schema", std::string(name)}}.dump();
}

std::vector<JsonlRecord> read_jsonl_records(const std::filesystem::path& path,
                                            std::string_view schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError(path.string(), 0, "cannot open file");
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  std::vector<JsonlRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(path.string(), lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!header_seen) {
      if (!value.is_object() || !value.contains("schema") ||
          value["schema"] != std::string(schema)) {
        throw SchemaError(path.string(), lineno,
                          "expected header " + schema_header(schema) + ", got " + value.dump());
      }
      header_seen = true;
      continue;
    }
    if (!value.is_object()) throw SchemaError(path.string(), lineno, "record is not an object");
    out.push_back({lineno, std::move(value)});
  }
  if (!header_seen) throw SchemaError(path.string(), 1, "missing schema header");
  return out;
}

void write_jsonl_records(const std::filesystem::path& path, std::string_view schema,
                         const std::vector<nlohmann::json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << schema_header(schema) << '\n';
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(path.string(), 0, "cannot open file");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace skillrouter::corpus
