#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

// File-format plumbing: TSV with header (the canonical dataset style),
// RFC-4180-ish CSV for CrowS-Pairs-like sources, whole-file slurp/write.

namespace biaslab::io {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  // Comment lines ("# key<TAB>value") found before the header.
  std::map<std::string, std::string> meta;

  int column_index(const std::string& name) const;  // -1 when absent
  const std::string& cell(std::size_t row, int col) const;
};

// TSV with a header line. Lines starting with '#' before the header are
// parsed as metadata; fields must not contain tabs or newlines.
Table read_tsv(const std::filesystem::path& path);
void write_tsv(const std::filesystem::path& path, const Table& table);

// Minimal RFC-4180 CSV reader: quoted fields, embedded commas/quotes/newlines.
Table read_csv(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace biaslab::io
