#include "biaslab/io.h"

#include <fstream>
#include <sstream>

#include "biaslab/common.h"

namespace biaslab::io {

namespace fs = std::filesystem;

int Table::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

const std::string& Table::cell(std::size_t row, int col) const {
  static const std::string empty;
  if (col < 0) return empty;
  const auto& r = rows.at(row);
  if (static_cast<std::size_t>(col) >= r.size()) return empty;
  return r[static_cast<std::size_t>(col)];
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << content;
  if (!out) throw DataError("write failed: " + path.string());
}

Table read_tsv(const fs::path& path) {
  std::string text = read_file(path);
  Table table;
  bool header_seen = false;
  std::size_t line_no = 0;
  for (const std::string& raw : split_on(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen && line[0] == '#') {
      auto parts = split_on(line.substr(1), '\t');
      if (parts.size() >= 2) table.meta[trim(parts[0])] = trim(parts[1]);
      continue;
    }
    auto fields = split_on(line, '\t');
    if (!header_seen) {
      table.columns = fields;
      header_seen = true;
    } else {
      if (fields.size() != table.columns.size()) {
        throw ShapeError(path.string() + ":" + std::to_string(line_no) +
                         ": expected " + std::to_string(table.columns.size()) +
                         " fields, got " + std::to_string(fields.size()));
      }
      table.rows.push_back(std::move(fields));
    }
  }
  if (!header_seen) throw DataError("no header line in " + path.string());
  return table;
}

void write_tsv(const fs::path& path, const Table& table) {
  std::string out;
  for (const auto& [k, v] : table.meta) {
    out += "# " + k + "\t" + v + "\n";
  }
  out += join(table.columns, "\t") + "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) {
      throw ShapeError("write_tsv: row width mismatch in " + path.string());
    }
    for (const auto& field : row) {
      if (field.find('\t') != std::string::npos ||
          field.find('\n') != std::string::npos) {
        throw DataError("write_tsv: field contains tab/newline in " +
                        path.string());
      }
    }
    out += join(row, "\t") + "\n";
  }
  write_file(path, out);
}

Table read_csv(const fs::path& path) {
  std::string text = read_file(path);
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // Skip fully empty lines.
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(record);
    }
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() || field_started || !record.empty()) end_record();
    } else if (c == '\r') {
      // swallowed; \r\n handled at \n
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quote in " + path.string());
  if (!field.empty() || field_started || !record.empty()) end_record();

  if (records.empty()) throw DataError("empty csv: " + path.string());
  Table table;
  table.columns = records.front();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.columns.size()) {
      throw ShapeError(path.string() + ": csv row " + std::to_string(r) +
                       " has " + std::to_string(records[r].size()) +
                       " fields, header has " +
                       std::to_string(table.columns.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

}  // namespace biaslab::io
