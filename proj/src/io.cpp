#include "hspca/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

namespace hspca::io {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'G', '1'};
constexpr std::uint8_t kGridVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(char((v >> (8 * b)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= std::uint64_t(std::uint8_t(in[at + std::size_t(b)])) << (8 * b);
  return v;
}

FormatError format_error(const std::string& what, std::size_t offset) {
  return FormatError("grid file: " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace

std::string encode_grid(const std::vector<std::size_t>& dims, const double* values) {
  if (dims.empty() || dims.size() > 255) throw ConfigError("grid: need between 1 and 255 dimensions");
  std::string out(kMagic, 4);
  out.push_back(char(kGridVersion));
  out.push_back(char(std::uint8_t(dims.size())));
  std::size_t count = 1;
  for (auto d : dims) {
    put_u64(out, d);
    count *= d;
  }
  out.reserve(out.size() + 8 * count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(values[i])) throw ConformanceError("grid: value " + std::to_string(i) + " is not finite");
    std::uint64_t bits;
    std::memcpy(&bits, &values[i], 8);
    put_u64(out, bits);
  }
  return out;
}

GridData decode_grid(const std::string& bytes) {
  if (bytes.size() < 4) throw format_error("file shorter than the magic number", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw format_error("bad magic (expected HSG1)", 0);
  if (bytes.size() < 6) throw format_error("truncated header", bytes.size());
  if (std::uint8_t(bytes[4]) != kGridVersion)
    throw format_error("unsupported version " + std::to_string(int(std::uint8_t(bytes[4]))), 4);
  const std::size_t ndim = std::uint8_t(bytes[5]);
  if (ndim == 0) throw format_error("ndim must be positive", 5);
  std::size_t at = 6;
  GridData g;
  std::size_t count = 1;
  for (std::size_t a = 0; a < ndim; ++a) {
    if (bytes.size() < at + 8) throw format_error("truncated dimension " + std::to_string(a), bytes.size());
    const std::uint64_t d = get_u64(bytes, at);
    if (d == 0) throw format_error("dimension " + std::to_string(a) + " is zero", at);
    if (count > (std::uint64_t(1) << 40) / d) throw format_error("dimensions too large", at);
    g.dims.push_back(std::size_t(d));
    count *= std::size_t(d);
    at += 8;
  }
  const std::size_t expected = at + 8 * count;
  if (bytes.size() < expected)
    throw format_error("truncated payload (expected " + std::to_string(expected) + " bytes, found " +
                           std::to_string(bytes.size()) + ")",
                       bytes.size());
  if (bytes.size() > expected)
    throw format_error("trailing bytes after payload (" + std::to_string(bytes.size() - expected) + " extra)",
                       expected);
  g.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t bits = get_u64(bytes, at + 8 * i);
    std::memcpy(&g.values[i], &bits, 8);
    if (!std::isfinite(g.values[i])) throw format_error("non-finite value", at + 8 * i);
  }
  return g;
}

void write_grid(const std::string& path, const std::vector<std::size_t>& dims, const double* values) {
  atomic_write(path, encode_grid(dims, values));
}

GridData read_grid(const std::string& path) {
  try {
    return decode_grid(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_element(const std::string& path, const std::vector<std::size_t>& grid_dims, const Vec<double>& v) {
  if (std::size_t(v.size()) != AmbientSpace<double>::count(grid_dims))
    throw ConformanceError("write_element: length does not match grid");
  write_grid(path, grid_dims, v.data());
}

void write_sample(const std::string& path, const std::vector<std::size_t>& grid_dims, const RowMat<double>& s) {
  if (std::size_t(s.cols()) != AmbientSpace<double>::count(grid_dims))
    throw ConformanceError("write_sample: row length does not match grid");
  std::vector<std::size_t> dims{std::size_t(s.rows())};
  dims.insert(dims.end(), grid_dims.begin(), grid_dims.end());
  write_grid(path, dims, s.data());
}

RowMat<double> read_sample(const std::string& path, std::vector<std::size_t>& grid_dims) {
  const GridData g = read_grid(path);
  if (g.dims.size() < 2)
    throw FormatError(path + ": a sample file needs a leading sample dimension and at least one grid axis");
  grid_dims.assign(g.dims.begin() + 1, g.dims.end());
  const auto n = Index(g.dims[0]);
  const auto v = Index(AmbientSpace<double>::count(grid_dims));
  return Eigen::Map<const RowMat<double>>(g.values.data(), n, v);
}

// ---------------------------------------------------------------------------

std::size_t Table::column(const std::string& name) const {
  for (std::size_t c = 0; c < columns.size(); ++c)
    if (columns[c] == name) return c;
  throw SchemaError("table has no column '" + name + "'");
}

bool Table::has_column(const std::string& name) const {
  for (const auto& c : columns)
    if (c == name) return true;
  return false;
}

std::vector<double> Table::numeric(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out.push_back(parse_double(rows[r][c], name, r + 1));
  return out;
}

Mat<double> Table::numeric_matrix(std::vector<std::string> names) const {
  if (names.empty()) names = columns;
  Mat<double> m(Index(rows.size()), Index(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto col = numeric(names[k]);
    for (std::size_t r = 0; r < col.size(); ++r) m(Index(r), Index(k)) = col[r];
  }
  return m;
}

void Table::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns.size())
    throw SchemaError("row " + std::to_string(rows.size() + 1) + " has " + std::to_string(cells.size()) +
                      " cells, table has " + std::to_string(columns.size()) + " columns");
  rows.push_back(std::move(cells));
}

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& column, std::size_t row) {
  double v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != e || !std::isfinite(v))
    throw SchemaError("column '" + column + "', row " + std::to_string(row) + ": '" + s +
                      "' is not a finite number");
  return v;
}

namespace {
bool needs_quotes(const std::string& s) { return s.find_first_of(",\"\n") != std::string::npos; }

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw SchemaError("line " + std::to_string(lineno) + ": unterminated quoted cell");
  cells.push_back(std::move(cur));
  return cells;
}
}  // namespace

std::string table_to_csv(const Table& t) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out.push_back(',');
      if (needs_quotes(cells[c])) {
        out.push_back('"');
        for (char ch : cells[c]) {
          if (ch == '"') out.push_back('"');
          out.push_back(ch);
        }
        out.push_back('"');
      } else {
        out += cells[c];
      }
    }
    out.push_back('\n');
  };
  emit(t.columns);
  for (const auto& r : t.rows) emit(r);
  return out;
}

Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      if (line.empty()) throw SchemaError("table: missing header row");
      t.columns = split_csv_line(line, lineno);
      for (std::size_t c = 0; c < t.columns.size(); ++c) {
        if (t.columns[c].empty()) throw SchemaError("table: column " + std::to_string(c + 1) + " has an empty name");
        for (std::size_t k = 0; k < c; ++k)
          if (t.columns[k] == t.columns[c]) throw SchemaError("table: duplicate column '" + t.columns[c] + "'");
      }
      header = false;
      continue;
    }
    if (line.empty()) {
      // only a final trailing newline may produce an empty line
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw SchemaError("table: row " + std::to_string(t.rows.size() + 1) + " is empty");
    }
    auto cells = split_csv_line(line, lineno);
    const std::size_t row = t.rows.size() + 1;
    if (cells.size() != t.columns.size())
      throw SchemaError("table: row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(t.columns.size()));
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (cells[c].empty())
        throw SchemaError("table: column '" + t.columns[c] + "', row " + std::to_string(row) + " is missing");
    t.rows.push_back(std::move(cells));
  }
  if (header) throw SchemaError("table: missing header row");
  return t;
}

void write_table(const std::string& path, const Table& t) { atomic_write(path, table_to_csv(t)); }

Table read_table(const std::string& path) {
  try {
    return parse_csv(read_file(path));
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

Triangulation parse_triangulation(std::istream& in) {
  std::string tag;
  int ndim = 0;
  long nvert = -1, ncell = -1;
  if (!(in >> tag >> ndim >> nvert >> ncell) || tag != "TRI")
    throw MeshError("triangulation: expected header 'TRI <ndim> <nvert> <ncell>'");
  if (ndim != 2 && ndim != 3) throw MeshError("triangulation: ndim must be 2 or 3");
  if (nvert < 1 || ncell < 1) throw MeshError("triangulation: need at least one vertex and one cell");
  Triangulation t;
  t.ndim = ndim;
  for (long v = 0; v < nvert; ++v) {
    std::array<double, 3> p{0, 0, 0};
    for (int a = 0; a < ndim; ++a)
      if (!(in >> p[std::size_t(a)])) throw MeshError("triangulation: could not read vertex " + std::to_string(v));
    t.vertices.push_back(p);
  }
  for (long c = 0; c < ncell; ++c) {
    std::array<int, 4> cell{0, 0, 0, 0};
    for (int k = 0; k <= ndim; ++k)
      if (!(in >> cell[std::size_t(k)])) throw MeshError("triangulation: could not read cell " + std::to_string(c));
    t.cells.push_back(cell);
  }
  std::string extra;
  if (in >> extra) throw MeshError("triangulation: unexpected content after the last cell");
  return t;
}

Triangulation read_triangulation(const std::string& path) {
  std::istringstream in(read_file(path));
  try {
    return parse_triangulation(in);
  } catch (const MeshError& e) {
    throw MeshError(path + ": " + e.what());
  }
}

std::string format_triangulation(const Triangulation& t) {
  std::string out = "TRI " + std::to_string(t.ndim) + " " + std::to_string(t.vertices.size()) + " " +
                    std::to_string(t.cells.size()) + "\n";
  for (const auto& v : t.vertices) {
    for (int a = 0; a < t.ndim; ++a) out += (a ? " " : "") + format_double(v[std::size_t(a)]);
    out += "\n";
  }
  for (const auto& c : t.cells) {
    for (int k = 0; k <= t.ndim; ++k) out += (k ? " " : "") + std::to_string(c[std::size_t(k)]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void atomic_write(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write '" + tmp.string() + "'");
    f.write(bytes.data(), std::streamsize(bytes.size()));
    f.flush();
    if (!f) throw FormatError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw FormatError("cannot move output into place at '" + path + "'");
  }
}

std::string checksum(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {
std::vector<double> to_std(const Vec<double>& v) { return {v.data(), v.data() + v.size()}; }
Vec<double> to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec<double>>(v.data(), Index(v.size())); }
}  // namespace

nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["dims"] = c.dims;
  j["family"] = to_string(c.family);
  j["lambdas"] = to_std(c.lambdas);
  j["alpha0"] = c.alpha0;
  j["beta0"] = to_std(c.beta0);
  j["gamma0_scores"] = to_std(c.gamma0_scores);
  j["d"] = c.d;
  j["r"] = c.r;
  j["n"] = c.n;
  j["noise_sd"] = c.noise_sd;
  j["seed"] = c.seed;
  j["basis"] = {{"kind", c.basis.kind}, {"degree", c.basis.degree}, {"knots", c.basis.knots}, {"drop", c.basis.drop}};
  j["m"] = c.m;
  j["tau"] = c.tau;
  j["diagnose"] = c.diagnose;
  j["alpha_level"] = c.alpha_level;
  j["inference"] = to_string(c.inference);
  j["bootstrap_kind"] = to_string(c.bootstrap_kind);
  j["B"] = c.b_reps;
  j["jackknife_r"] = c.jackknife_r;
  j["level"] = c.level;
  return j;
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
  static const std::vector<std::string> known{"dims", "family", "lambdas", "alpha0", "beta0", "gamma0_scores",
                                              "d", "r", "n", "noise_sd", "seed", "basis", "m", "tau",
                                              "diagnose", "alpha_level", "inference", "bootstrap_kind", "B",
                                              "jackknife_r", "level", "preset"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("scenario config: unknown key '" + key + "'");
  try {
    ScenarioConfig c;
    const std::string preset = j.value("preset", std::string("2d"));
    const Index n = j.value("n", Index(500));
    const double r = j.value("r", 0.0);
    if (preset == "2d") c = scenario_2d(n, r);
    else if (preset == "3d") c = scenario_3d(n, r);
    else throw ConfigError("scenario config: preset must be '2d' or '3d'");
    if (j.contains("dims")) c.dims = j["dims"].get<std::vector<std::size_t>>();
    if (j.contains("family")) c.family = parse_family_kind(j["family"].get<std::string>());
    if (j.contains("lambdas")) c.lambdas = to_vec(j["lambdas"].get<std::vector<double>>());
    c.alpha0 = j.value("alpha0", c.alpha0);
    if (j.contains("beta0")) c.beta0 = to_vec(j["beta0"].get<std::vector<double>>());
    if (j.contains("gamma0_scores")) c.gamma0_scores = to_vec(j["gamma0_scores"].get<std::vector<double>>());
    c.d = j.value("d", c.d);
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    c.seed = j.value("seed", c.seed);
    if (j.contains("basis")) {
      const auto& b = j["basis"];
      for (const auto& [key, _] : b.items())
        if (key != "kind" && key != "degree" && key != "knots" && key != "drop")
          throw ConfigError("scenario config: unknown basis key '" + key + "'");
      c.basis.kind = b.value("kind", c.basis.kind);
      c.basis.degree = b.value("degree", c.basis.degree);
      c.basis.knots = b.value("knots", c.basis.knots);
      c.basis.drop = b.value("drop", c.basis.drop);
    }
    c.m = j.value("m", c.m);
    c.tau = j.value("tau", c.tau);
    c.diagnose = j.value("diagnose", c.diagnose);
    c.alpha_level = j.value("alpha_level", c.alpha_level);
    if (j.contains("inference")) c.inference = parse_inference_kind(j["inference"].get<std::string>());
    if (j.contains("bootstrap_kind")) c.bootstrap_kind = parse_bootstrap_kind(j["bootstrap_kind"].get<std::string>());
    c.b_reps = j.value("B", c.b_reps);
    c.jackknife_r = j.value("jackknife_r", c.jackknife_r);
    c.level = j.value("level", c.level);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario config: ") + e.what());
  }
}

ScenarioConfig read_scenario(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  return scenario_from_json(j);
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
  atomic_write(path, dump_json(manifest));
}

nlohmann::json read_manifest(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace hspca::io
