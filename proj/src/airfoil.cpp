#include "tabdiff/airfoil.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tabdiff/error.hpp"
#include "tabdiff/rng.hpp"

namespace tabdiff {

namespace {

double interpolate(const std::vector<Point2>& surface, double x) {
  if (x <= surface.front().x) return surface.front().y;
  if (x >= surface.back().x) return surface.back().y;
  auto hi = std::upper_bound(surface.begin(), surface.end(), x,
                             [](double v, const Point2& p) { return v < p.x; });
  auto lo = hi - 1;
  if (hi->x == lo->x) return hi->y;
  const double w = (x - lo->x) / (hi->x - lo->x);
  return lo->y + w * (hi->y - lo->y);
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

}  // namespace

std::size_t AirfoilGeometry::point_count() const {
  return upper.size() + lower.size() - (upper.empty() || lower.empty() ? 0 : 1);
}

AirfoilGeometry parse_selig_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  AirfoilGeometry geom;
  if (!std::getline(in, line)) throw ParseError("empty airfoil file");
  geom.name = line;
  while (!geom.name.empty() && std::isspace(static_cast<unsigned char>(geom.name.back()))) geom.name.pop_back();

  std::vector<Point2> pts;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream row(line);
    std::string xs, ys, extra;
    if (!(row >> xs)) continue;
    if (!(row >> ys) || (row >> extra))
      throw ParseError("line " + std::to_string(line_no) + ": expected an 'x y' pair");
    try {
      pts.push_back({parse_double(xs), parse_double(ys)});
    } catch (const ParseError&) {
      throw ParseError("line " + std::to_string(line_no) + ": non-numeric coordinate");
    }
  }
  if (pts.size() < 3) throw ParseError("airfoil needs at least 3 points");

  const auto le = static_cast<std::size_t>(
      std::min_element(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a.x < b.x; }) -
      pts.begin());
  if (le == 0 || le + 1 == pts.size())
    throw ParseError("leading edge at the end of the traversal; not a Selig-ordered file");
  for (std::size_t i = 1; i <= le; ++i)
    if (pts[i].x > pts[i - 1].x) throw ParseError("upper surface x is not monotone toward the leading edge");
  for (std::size_t i = le + 1; i < pts.size(); ++i)
    if (pts[i].x < pts[i - 1].x) throw ParseError("lower surface x is not monotone toward the trailing edge");

  double xmin = pts[le].x, xmax = xmin;
  for (const auto& p : pts) xmax = std::max(xmax, p.x);
  const double chord = xmax - xmin;
  if (!(chord > 0.0)) throw ParseError("airfoil has zero chord");
  auto scale = [&](const Point2& p) { return Point2{(p.x - xmin) / chord, p.y / chord}; };
  for (std::size_t i = le + 1; i-- > 0;) geom.upper.push_back(scale(pts[i]));
  for (std::size_t i = le; i < pts.size(); ++i) geom.lower.push_back(scale(pts[i]));
  return geom;
}

AirfoilGeometry parse_selig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("airfoil file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_selig_text(ss.str());
}

std::string to_selig_text(const AirfoilGeometry& geom) {
  std::ostringstream out;
  out << (geom.name.empty() ? "airfoil" : geom.name) << '\n';
  for (std::size_t i = geom.upper.size(); i-- > 0;)
    out << format_double(geom.upper[i].x) << ' ' << format_double(geom.upper[i].y) << '\n';
  for (std::size_t i = 1; i < geom.lower.size(); ++i)
    out << format_double(geom.lower[i].x) << ' ' << format_double(geom.lower[i].y) << '\n';
  return out.str();
}

std::vector<double> cosine_stations(std::size_t n) {
  if (n < 2) throw GeometryError("need at least 2 stations");
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j)
    x[j] = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(j) / static_cast<double>(n - 1)));
  x.front() = 0.0;
  x.back() = 1.0;
  return x;
}

Vector resample_airfoil(const AirfoilGeometry& geom, std::size_t n_stations) {
  if (n_stations < 3) throw GeometryError("resampling needs at least 3 stations");
  for (const auto* s : {&geom.upper, &geom.lower}) {
    if (s->size() < 2 || s->front().x == s->back().x)
      throw GeometryError("degenerate airfoil surface: single x station");
  }
  const auto stations = cosine_stations(n_stations);
  Vector out;
  out.reserve(2 * n_stations);
  for (double x : stations) out.push_back(interpolate(geom.upper, x));
  for (double x : stations) out.push_back(interpolate(geom.lower, x));
  return out;
}

AirfoilGeometry airfoil_from_vector(std::span<const double> v) {
  if (v.size() % 2 != 0 || v.size() < 6) throw ShapeError("airfoil vector must hold 2n entries, n >= 3");
  const std::size_t n = v.size() / 2;
  const auto x = cosine_stations(n);
  AirfoilGeometry g;
  for (std::size_t j = 0; j < n; ++j) {
    g.upper.push_back({x[j], v[j]});
    g.lower.push_back({x[j], v[n + j]});
  }
  return g;
}

std::string naca4_selig(double camber, double camber_pos, double thickness, std::size_t n_side,
                        const std::string& name) {
  if (n_side < 3) throw GeometryError("NACA generator needs at least 3 points per side");
  const auto xs = cosine_stations(n_side);
  std::vector<Point2> upper, lower;
  for (double x : xs) {
    const double yt = 5.0 * thickness *
                      (0.2969 * std::sqrt(x) - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x -
                       0.1036 * x * x * x * x);
    // Thickness is applied vertically so x stays monotone on both surfaces.
    double yc = 0.0;
    if (camber > 0.0 && camber_pos > 0.0 && camber_pos < 1.0) {
      if (x < camber_pos) {
        yc = camber / (camber_pos * camber_pos) * (2.0 * camber_pos * x - x * x);
      } else {
        const double q = 1.0 - camber_pos;
        yc = camber / (q * q) * (1.0 - 2.0 * camber_pos + 2.0 * camber_pos * x - x * x);
      }
    }
    upper.push_back({x, yc + yt});
    lower.push_back({x, yc - yt});
  }
  AirfoilGeometry g{name, upper, lower};
  return to_selig_text(g);
}

DesignSchema AirfoilProxy::schema() const {
  DesignSchema s;
  s.name = kName;
  s.kind = "airfoil";
  const std::size_t n = stations_.size();
  for (std::size_t j = 0; j < n; ++j) {
    s.names.push_back("yu" + std::to_string(j));
    s.bounds.emplace_back(-0.3, 0.3);
  }
  for (std::size_t j = 0; j < n; ++j) {
    s.names.push_back("yl" + std::to_string(j));
    s.bounds.emplace_back(-0.3, 0.3);
  }
  return s;
}

double AirfoilProxy::performance(std::span<const double> v) const {
  const std::size_t n = stations_.size();
  if (v.size() != 2 * n) throw ShapeError("airfoil vector length does not match the proxy");
  std::vector<double> camber(n), thick(n);
  for (std::size_t j = 0; j < n; ++j) {
    camber[j] = 0.5 * (v[j] + v[n + j]);
    thick[j] = v[j] - v[n + j];
  }
  const double c = trapezoid(stations_, camber);
  const double h = trapezoid(stations_, thick);
  const double cl = 2.0 * std::numbers::pi * (0.05 + 4.0 * c);
  const double cd = 0.006 + 0.5 * h * h;
  return cl / cd;
}

TabularDataset naca_dataset(std::size_t n, std::size_t n_stations, std::uint64_t seed) {
  AirfoilProxy proxy(n_stations);
  TabularDataset data;
  data.schema = proxy.schema();
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = rng.uniform(0.0, 0.06);
    const double p = rng.uniform(0.2, 0.6);
    const double t = rng.uniform(0.06, 0.18);
    const auto geom = parse_selig_text(naca4_selig(m, p, t, 41));
    Vector v = resample_airfoil(geom, n_stations);
    data.performance.push_back(proxy.performance(v));
    if (!data.schema.in_bounds(v)) data.out_of_bounds_rows.push_back(data.designs.size());
    data.designs.push_back(std::move(v));
    data.environment.emplace_back();
  }
  return data;
}

}  // namespace tabdiff
