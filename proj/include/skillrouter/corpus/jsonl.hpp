#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace skillrouter::corpus {

class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& file, std::size_t line, const std::string& what);
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

std::string schema_header(std::string_view name);

struct JsonlRecord {
  std::size_t line = 0;  // 1-based line in the source file
  nlohmann::json value;
};

// Reads a JSON-lines file whose first line is {"schema":"<name>"}. Blank
// lines are skipped. Every failure names the file and 1-based line.
std::vector<JsonlRecord> read_jsonl_records(const std::filesystem::path& path,
                                               std::string_view schema);
void write_jsonl_records(const std::filesystem::path& path, std::string_view schema,
                         const std::vector<nlohmann::json>& records);

template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path, std::string_view schema) {
  auto records = read_jsonl_records(path, schema);
  std::vector<T> out;
  out.reserve(records.size());
  for (const JsonlRecord& r : records) {
    try {
      out.push_back(r.value.get<T>());
    } catch (const std::exception& e) {
      throw SchemaError(path.string(), r.line, e.what());
    }
  }
  return out;
}

template <class T>
void write_jsonl(const std::filesystem::path& path, std::string_view schema,
                 const std::vector<T>& items) {
  std::vector<nlohmann::json> records;
  records.reserve(items.size());
  for (const T& item : items) records.emplace_back(item);
  write_jsonl_records(path, schema, records);
}

// Plain text list, one entry per line; blank lines and '#' comments skipped.
std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

}  // namespace skillrouter::corpus
