#pragma once

#include "hspca/basis.hpp"
#include "hspca/simgen.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hspca::io {

// ---------------------------------------------------------------------------
// HSG1 grid files: "HSG1", u8 version (1), u8 ndim, ndim x u64 dims, f64 payload,
// all little-endian, row-major.

struct GridData {
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

std::string encode_grid(const std::vector<std::size_t>& dims, const double* values);
GridData decode_grid(const std::string& bytes);

void write_grid(const std::string& path, const std::vector<std::size_t>& dims, const double* values);
GridData read_grid(const std::string& path);

/// Single element on a grid.
void write_element(const std::string& path, const std::vector<std::size_t>& grid_dims, const Vec<double>& v);
/// Sample of n elements: stored with leading dimension n.
void write_sample(const std::string& path, const std::vector<std::size_t>& grid_dims, const RowMat<double>& s);
/// Interprets the leading dimension as the sample size; the rest is the grid.
RowMat<double> read_sample(const std::string& path, std::vector<std::size_t>& grid_dims);

// ---------------------------------------------------------------------------
// CSV tables with a header row. Cells are kept as text; numeric accessors parse
// with the C locale.

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  std::vector<double> numeric(const std::string& name) const;
  /// Columns in order as an n x k matrix; empty `names` selects every column.
  Mat<double> numeric_matrix(std::vector<std::string> names = {}) const;
  void add_row(std::vector<std::string> cells);
};

/// Shortest representation that reads back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& column, std::size_t row);

std::string table_to_csv(const Table& t);
Table parse_csv(const std::string& text);
void write_table(const std::string& path, const Table& t);
Table read_table(const std::string& path);

// ---------------------------------------------------------------------------
// Triangulation text files: "TRI <ndim> <nvert> <ncell>", vertex lines, cell lines.

Triangulation parse_triangulation(std::istream& in);
Triangulation read_triangulation(const std::string& path);
std::string format_triangulation(const Triangulation& t);

// ---------------------------------------------------------------------------
// Files, configs, manifests

std::string read_file(const std::string& path);
/// Writes to a temporary sibling and renames it over `path`.
void atomic_write(const std::string& path, const std::string& bytes);
/// FNV-1a 64-bit digest as 16 hex digits.
std::string checksum(const std::string& bytes);

nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const nlohmann::json& j);
ScenarioConfig read_scenario(const std::string& path);

/// Serialized with sorted keys and 2-space indent, newline-terminated.
std::string dump_json(const nlohmann::json& j);
void write_manifest(const std::string& path, const nlohmann::json& manifest);
nlohmann::json read_manifest(const std::string& path);

inline constexpr const char* kVersion = "1.0.0";

}  // namespace hspca::io
