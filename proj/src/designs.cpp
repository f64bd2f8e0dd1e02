#include "tabdiff/designs.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tabdiff/error.hpp"
#include "tabdiff/rng.hpp"

namespace tabdiff {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string slurp(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(std::string(what) + " not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ParseError("not a number: '" + std::string(text) + "'");
  return v;
}

void DesignSchema::validate() const {
  if (names.size() != bounds.size()) throw DataError("schema names and bounds differ in length");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!seen.insert(names[i]).second) throw DataError("duplicate parameter name '" + names[i] + "'");
    if (!(bounds[i].first < bounds[i].second))
      throw DataError("parameter '" + names[i] + "' needs lo < hi");
  }
  for (const auto& e : environment)
    if (seen.count(e) || e == "perf" || e == "feasible")
      throw DataError("environment column '" + e + "' clashes with another column");
}

bool DesignSchema::in_bounds(std::span<const double> x) const {
  if (x.size() != dim()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] >= bounds[i].first && x[i] <= bounds[i].second)) return false;
  return true;
}

DesignSchema DesignSchema::uniform(std::string name, std::size_t dim, double lo, double hi) {
  DesignSchema s;
  s.name = std::move(name);
  for (std::size_t i = 0; i < dim; ++i) {
    s.names.push_back("x" + std::to_string(i));
    s.bounds.emplace_back(lo, hi);
  }
  return s;
}

json DesignSchema::to_json() const {
  json b = json::array();
  for (const auto& [lo, hi] : bounds) b.push_back({lo, hi});
  return {{"name", name}, {"kind", kind}, {"names", names}, {"bounds", b}, {"environment", environment}};
}

DesignSchema DesignSchema::from_json(const json& j) {
  DesignSchema s;
  try {
    s.name = j.value("name", "");
    s.kind = j.value("kind", "tabular");
    s.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& b : j.at("bounds")) s.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    if (j.contains("environment")) s.environment = j.at("environment").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed schema: ") + e.what());
  }
  s.validate();
  return s;
}

DesignSchema DesignSchema::load(const std::filesystem::path& path) {
  const std::string text = slurp(path, "schema");
  try {
    return from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ParseError("schema " + path.string() + " is not valid JSON: " + e.what());
  }
}

Vector ConditionVector::to_vector(const std::vector<std::string>& order) const {
  if (!std::isfinite(performance_target)) throw ConfigError("performance target must be finite");
  Vector out{performance_target};
  for (const auto& name : order) {
    auto it = std::find_if(environment.begin(), environment.end(),
                           [&](const auto& kv) { return kv.first == name; });
    if (it == environment.end()) throw ConfigError("condition is missing environment value '" + name + "'");
    if (!std::isfinite(it->second)) throw ConfigError("environment value '" + name + "' is not finite");
    out.push_back(it->second);
  }
  for (const auto& [name, value] : environment)
    if (std::find(order.begin(), order.end(), name) == order.end())
      throw ConfigError("unknown environment variable '" + name + "'");
  return out;
}

std::vector<Vector> TabularDataset::conditions() const {
  std::vector<Vector> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    Vector c{performance[i]};
    if (i < environment.size()) c.insert(c.end(), environment[i].begin(), environment[i].end());
    out.push_back(std::move(c));
  }
  return out;
}

TabularDataset parse_tabular(const std::string& text, const DesignSchema& schema) {
  schema.validate();
  const auto lines = read_lines(text);
  std::size_t header_line = 0;
  while (header_line < lines.size() && trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) throw IngestError("file has no header row", 1);

  const auto header = split_csv(lines[header_line]);
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!column.emplace(std::string(header[c]), c).second)
      throw IngestError("duplicate column '" + std::string(header[c]) + "'", header_line + 1);
  }
  auto require = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw IngestError("missing column '" + name + "'", header_line + 1);
    return it->second;
  };
  std::vector<std::size_t> design_cols;
  for (const auto& n : schema.names) design_cols.push_back(require(n));
  const std::size_t perf_col = require("perf");
  std::vector<std::size_t> env_cols;
  for (const auto& n : schema.environment) env_cols.push_back(require(n));
  const auto feas_it = column.find("feasible");
  const bool has_feasible = feas_it != column.end();

  TabularDataset data;
  data.schema = schema;
  for (std::size_t li = header_line + 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto cells = split_csv(lines[li]);
    const std::size_t line_no = li + 1;
    if (cells.size() != header.size())
      throw IngestError("expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(cells.size()),
                        line_no);
    auto number = [&](std::size_t c) {
      try {
        const double v = parse_double(cells[c]);
        if (!std::isfinite(v)) throw ParseError("non-finite");
        return v;
      } catch (const ParseError&) {
        throw IngestError("unparseable value '" + std::string(cells[c]) + "' in column '" +
                              std::string(header[c]) + "'",
                          line_no);
      }
    };
    Vector x;
    x.reserve(design_cols.size());
    for (std::size_t c : design_cols) x.push_back(number(c));
    if (!schema.in_bounds(x)) data.out_of_bounds_rows.push_back(data.designs.size());
    data.designs.push_back(std::move(x));
    data.performance.push_back(number(perf_col));
    Vector env;
    for (std::size_t c : env_cols) env.push_back(number(c));
    data.environment.push_back(std::move(env));
    if (has_feasible) {
      const double f = number(feas_it->second);
      if (f != 0.0 && f != 1.0) throw IngestError("feasible must be 0 or 1", line_no);
      data.feasible.push_back(static_cast<int>(f));
    }
  }
  return data;
}

TabularDataset load_tabular(const std::filesystem::path& path, const DesignSchema& schema) {
  if (!std::filesystem::exists(path)) throw IngestError("dataset not found: " + path.string());
  return parse_tabular(slurp(path, "dataset"), schema);
}

void write_tabular(const std::filesystem::path& path, const TabularDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const auto& s = data.schema;
  for (const auto& n : s.names) out << n << ',';
  out << "perf";
  for (const auto& e : s.environment) out << ',' << e;
  if (data.has_feasibility()) out << ",feasible";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.designs[i]) out << format_double(v) << ',';
    out << format_double(data.performance[i]);
    if (i < data.environment.size())
      for (double v : data.environment[i]) out << ',' << format_double(v);
    if (data.has_feasibility()) out << ',' << data.feasible[i];
    out << '\n';
  }
}

void write_designs_csv(const std::filesystem::path& path, const DesignSchema& schema,
                       const std::vector<Vector>& designs,
                       const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < schema.names.size(); ++i) out << (i ? "," : "") << schema.names[i];
  for (const auto& [name, col] : extra) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < designs.size(); ++r) {
    for (std::size_t i = 0; i < designs[r].size(); ++i) out << (i ? "," : "") << format_double(designs[r][i]);
    for (const auto& [name, col] : extra) out << ',' << format_double(col.at(r));
    out << '\n';
  }
}

std::pair<std::vector<std::string>, std::vector<Vector>> read_numeric_csv(
    const std::filesystem::path& path) {
  const auto lines = read_lines(slurp(path, "csv file"));
  std::pair<std::vector<std::string>, std::vector<Vector>> out;
  std::size_t li = 0;
  while (li < lines.size() && trim(lines[li]).empty()) ++li;
  if (li == lines.size()) throw IngestError("file has no header row: " + path.string(), 1);
  for (auto h : split_csv(lines[li])) out.first.emplace_back(h);
  for (++li; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto cells = split_csv(lines[li]);
    if (cells.size() != out.first.size()) throw IngestError("ragged row", li + 1);
    Vector row;
    for (auto c : cells) {
      try {
        row.push_back(parse_double(c));
      } catch (const ParseError&) {
        throw IngestError("unparseable value '" + std::string(c) + "'", li + 1);
      }
    }
    out.second.push_back(std::move(row));
  }
  return out;
}

std::vector<Vector> read_designs_csv(const std::filesystem::path& path, const DesignSchema& schema) {
  const auto [header, rows] = read_numeric_csv(path);
  std::vector<std::size_t> cols;
  for (const auto& n : schema.names) {
    auto it = std::find(header.begin(), header.end(), n);
    if (it == header.end()) throw IngestError("missing column '" + n + "' in " + path.string(), 1);
    cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<Vector> out;
  for (const auto& r : rows) {
    Vector x;
    for (std::size_t c : cols) x.push_back(r[c]);
    out.push_back(std::move(x));
  }
  return out;
}

FeasibilityReport BoundsOracle::check(std::span<const double> design) const {
  FeasibilityReport rep;
  if (design.size() != schema_.dim()) throw ShapeError("design length does not match schema");
  for (std::size_t i = 0; i < design.size(); ++i)
    if (!(design[i] >= schema_.bounds[i].first && design[i] <= schema_.bounds[i].second))
      rep.violations.push_back("bounds:" + schema_.names[i]);
  rep.feasible = rep.violations.empty();
  return rep;
}

DesignSchema SyntheticProblem::schema() const {
  DesignSchema s = DesignSchema::uniform(kName, kDim, 0.0, 1.0);
  return s;
}

double SyntheticProblem::performance(std::span<const double> x) const {
  if (x.size() != kDim) throw ShapeError("synthetic problem expects 16 parameters");
  double tail = 0.0;
  for (std::size_t i = 4; i < kDim; ++i) tail += x[i];
  return 0.05 + 0.3 * x[0] * x[0] + 0.2 * x[1] * x[2] - 0.1 * x[3] + 0.05 * tail / 12.0;
}

std::vector<double> SyntheticProblem::constraints(std::span<const double> x) const {
  if (x.size() != kDim) throw ShapeError("synthetic problem expects 16 parameters");
  return {x[0] + x[1] - 1.2, 0.1 - x[2]};
}

FeasibilityReport SyntheticProblem::check(std::span<const double> design) const {
  static const char* names[] = {"x1+x2<=1.2", "x3>=0.1"};
  FeasibilityReport rep;
  const auto g = constraints(design);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (!(g[k] <= 0.0)) rep.violations.emplace_back(names[k]);
  for (std::size_t i = 0; i < design.size(); ++i)
    if (!(design[i] >= 0.0 && design[i] <= 1.0)) rep.violations.push_back("bounds:x" + std::to_string(i));
  rep.feasible = rep.violations.empty();
  return rep;
}

TabularDataset synth_generate(const SyntheticProblem& problem, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DesignError("synth_generate needs n >= 1");
  TabularDataset data;
  data.schema = problem.schema();
  Rng rng(seed);
  std::size_t attempts = 0;
  while (data.size() < n) {
    Vector x(SyntheticProblem::kDim);
    for (double& v : x) v = rng.uniform();
    ++attempts;
    if (problem.check(x).feasible) {
      data.performance.push_back(problem.performance(x));
      data.designs.push_back(std::move(x));
      data.environment.emplace_back();
      data.feasible.push_back(1);
    }
    if (attempts >= 10000 && static_cast<double>(data.size()) / static_cast<double>(attempts) < 1e-3)
      throw DesignError("feasible region too small: acceptance rate below 1e-3");
  }
  return data;
}

TabularDataset synth_generate_mixed(const SyntheticProblem& problem, std::size_t n,
                                    std::uint64_t seed) {
  TabularDataset data;
  data.schema = problem.schema();
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(SyntheticProblem::kDim);
    for (double& v : x) v = rng.uniform();
    data.performance.push_back(problem.performance(x));
    data.feasible.push_back(problem.check(x).feasible ? 1 : 0);
    data.designs.push_back(std::move(x));
    data.environment.emplace_back();
  }
  return data;
}

Normalizer Normalizer::fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw DataError("cannot fit normalization on an empty dataset");
  const std::size_t d = rows.front().size();
  Normalizer n;
  n.mean.assign(d, 0.0);
  n.std.assign(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw ShapeError("ragged rows in normalization fit");
    for (std::size_t i = 0; i < d; ++i) n.mean[i] += r[i];
  }
  for (double& m : n.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i) n.std[i] += (r[i] - n.mean[i]) * (r[i] - n.mean[i]);
  for (double& s : n.std) {
    s = std::sqrt(s / static_cast<double>(rows.size()));
    if (!(s > 0.0)) s = 1.0;
  }
  return n;
}

Normalizer Normalizer::identity(std::size_t dim) {
  Normalizer n;
  n.mean.assign(dim, 0.0);
  n.std.assign(dim, 1.0);
  return n;
}

std::vector<double> Normalizer::normalize(std::span<const double> x) const {
  if (x.size() != dim()) throw ShapeError("normalize: length mismatch");
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / std[i];
  return z;
}

std::vector<double> Normalizer::denormalize(std::span<const double> z) const {
  if (z.size() != dim()) throw ShapeError("denormalize: length mismatch");
  std::vector<double> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] * std[i] + mean[i];
  return x;
}

std::vector<std::vector<double>> Normalizer::normalize_all(
    const std::vector<std::vector<double>>& rows) const {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(normalize(r));
  return out;
}

}  // namespace tabdiff
