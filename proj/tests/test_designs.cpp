#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "support.hpp"
#include "tabdiff/airfoil.hpp"
#include "tabdiff/designs.hpp"
#include "tabdiff/error.hpp"
#include "tabdiff/mask.hpp"
#include "tabdiff/normalizer.hpp"

using namespace tabdiff;

namespace {

DesignSchema three_param_schema() {
  DesignSchema s;
  s.name = "toy";
  s.names = {"a", "b", "c"};
  s.bounds = {{0, 1}, {0, 10}, {-1, 1}};
  return s;
}

std::size_t ones(const Mask& m) { return m.count(); }

}  // namespace

TEST_CASE("mask specs") {
  const Mask mid = mask_from_spec(45, "6-9");
  CHECK(ones(mid) == 4);
  for (std::size_t i = 0; i < 45; ++i) CHECK(mid[i] == (i >= 6 && i <= 9));
  CHECK(ones(mask_from_spec(128, "first-2/8")) == 32);
  CHECK(ones(mask_from_spec(16, "")) == 0);
  CHECK(mask_from_spec(45, "midship") == mid);
  CHECK(mask_from_spec(10, "1,3-4,first-1/8") == Mask{{1, 1, 0, 1, 1, 0, 0, 0, 0, 0}});
  CHECK(mask_to_spec(mask_from_spec(45, "6-9,30-43")) == "6-9,30-43");
  CHECK_THROWS_AS(mask_from_spec(16, "16"), SpecError);
  CHECK_THROWS_AS(mask_from_spec(16, "5-2"), SpecError);
  CHECK_THROWS_AS(mask_from_spec(16, "x"), SpecError);
  CHECK_THROWS_AS(mask_from_spec(16, "first-9/8"), SpecError);
  CHECK_THROWS_AS(mask_from_spec(16, "bulb"), SpecError);  // component past the end of dim 16
}

TEST_CASE("hull component ranges partition cleanly") {
  const Mask a = mask_from_spec(45, "6-9");
  const Mask b = mask_from_spec(45, "10-18");
  const Mask joined = mask_from_spec(45, "6-18");
  for (std::size_t i = 0; i < 45; ++i) {
    CHECK_FALSE((a[i] && b[i]));
    CHECK((a[i] || b[i]) == joined[i]);
  }
  std::size_t total = 0;
  for (const auto& c : hull_components()) total += c.last - c.first + 1;
  CHECK(ones(mask_from_spec(45, "midship,bow,stern,bulb")) == total);
}

TEST_CASE("prefix masks grow strictly with k") {
  const AirfoilGeometry g = parse_selig_text(naca4_selig(0.02, 0.4, 0.12, 40));
  const Vector v = resample_airfoil(g, 64);
  std::size_t prev = 0;
  for (int k = 1; k <= 7; ++k) {
    const std::size_t c = ones(mask_from_spec(v.size(), "first-" + std::to_string(k) + "/8"));
    CHECK(c > prev);
    prev = c;
  }
}

TEST_CASE("tabular ingestion") {
  const DesignSchema s = three_param_schema();
  const TabularDataset empty = parse_tabular("a,b,c,perf\n", s);
  CHECK(empty.size() == 0);
  CHECK(empty.out_of_bounds_rows.empty());

  const TabularDataset d = parse_tabular("a,b,c,perf,feasible\n0.5,2,0.25,1.5,1\n0.1,3,-0.5,2.5,0\n1,10,1,0.25,1\n", s);
  REQUIRE(d.size() == 3);
  CHECK(d.designs[0] == Vector{0.5, 2, 0.25});
  CHECK(d.designs[2] == Vector{1, 10, 1});
  CHECK(d.performance == std::vector<double>{1.5, 2.5, 0.25});
  CHECK(d.feasible == std::vector<int>{1, 0, 1});

  const TabularDataset oob = parse_tabular("c,b,a,perf\n0,1,0.5,1\n0,11,0.5,1\n", s);  // columns in any order
  CHECK(oob.designs[0] == Vector{0.5, 1, 0});
  CHECK(oob.out_of_bounds_rows == std::vector<std::size_t>{1});

  CHECK_THROWS_AS(parse_tabular("a,b,perf\n1,2,3\n", s), IngestError);
  try {
    parse_tabular("a,b,c,perf\n1,2,3,4\n1,oops,3,4\n", s);
    FAIL("expected an ingestion error");
  } catch (const IngestError& e) {
    CHECK(e.row() == 3);
  }
  CHECK_THROWS_AS(load_tabular("/nonexistent/data.csv", s), IngestError);
}

TEST_CASE("tabular round trip through files") {
  testing::ScratchDir dir("designs");
  const TabularDataset d = synth_generate(SyntheticProblem{}, 20, 3);
  write_tabular(dir / "d.csv", d);
  const TabularDataset back = load_tabular(dir / "d.csv", d.schema);
  CHECK(back.designs == d.designs);
  CHECK(back.performance == d.performance);

  const std::string j = d.schema.to_json().dump();
  const DesignSchema s2 = DesignSchema::from_json(nlohmann::json::parse(j));
  CHECK(s2.names == d.schema.names);
  CHECK(s2.bounds == d.schema.bounds);
}

TEST_CASE("decimal formatting round-trips bit-exactly") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.gaussian() * std::pow(10.0, rng.integer(-8, 8));
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK_THROWS_AS(parse_double("1.2.3"), ParseError);
}

TEST_CASE("schema validation") {
  DesignSchema s = three_param_schema();
  s.names[1] = "a";
  CHECK_THROWS_AS(s.validate(), DataError);
  s = three_param_schema();
  s.bounds[0] = {1, 1};
  CHECK_THROWS_AS(s.validate(), DataError);
}

TEST_CASE("normalization round trip") {
  Rng rng(5);
  std::vector<Vector> rows;
  for (int i = 0; i < 200; ++i) rows.push_back({rng.uniform(0, 333), rng.uniform(0, 1e-3), rng.gaussian()});
  const Normalizer n = Normalizer::fit(rows);
  for (const auto& r : rows) {
    const Vector back = n.denormalize(n.normalize(r));
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(back[k] - r[k]) <= 1e-12 * std::max(1.0, std::abs(r[k])));
  }
  // Constant columns keep a unit scale instead of dividing by zero.
  const Normalizer c = Normalizer::fit({{2.0}, {2.0}});
  CHECK(std::isfinite(c.normalize(Vector{3.0})[0]));
}

TEST_CASE("synthetic problem") {
  const SyntheticProblem p;
  const TabularDataset one_a = synth_generate(p, 1, 99);
  const TabularDataset one_b = synth_generate(p, 1, 99);
  CHECK(one_a.designs == one_b.designs);

  const TabularDataset d = synth_generate(p, 500, 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector& x = d.designs[i];
    for (double g : p.constraints(x)) CHECK(g <= 0.0);
    // Independent re-evaluation of f in a different summation order.
    double tail = 0.0;
    for (std::size_t k = 15; k >= 4; --k) tail += x[k] / 12.0;
    const double f = 0.05 + 0.3 * std::pow(x[0], 2) + 0.2 * x[1] * x[2] - 0.1 * x[3] + 0.05 * tail;
    CHECK(std::abs(d.performance[i] - f) < 1e-12);
  }
  CHECK(p.check(Vector(16, 0.0)).violations == std::vector<std::string>{"x3>=0.1"});
  CHECK_THROWS_AS(synth_generate(p, 0, 1), DesignError);
}

TEST_CASE("selig parsing") {
  const std::string sym = "sym\n1 0\n0.5 0.1\n0 0\n0.5 -0.1\n1 0\n";
  const AirfoilGeometry g = parse_selig_text(sym);
  REQUIRE(g.upper.size() == g.lower.size());
  for (std::size_t i = 0; i < g.upper.size(); ++i) {
    CHECK(std::abs(g.upper[i].x - g.lower[i].x) < 1e-12);
    CHECK(std::abs(g.upper[i].y + g.lower[i].y) < 1e-12);
  }
  const AirfoilGeometry wide = parse_selig_text("wide\n2 0\n1 0.2\n0 0\n1 -0.2\n2 0\n");
  double xmax = 0;
  for (const auto& p : wide.upper) xmax = std::max(xmax, p.x);
  CHECK(xmax == 1.0);

  const std::string naca = naca4_selig(0.0, 0.0, 0.12, 31, "NACA 0012");
  const AirfoilGeometry n = parse_selig_text(naca);
  CHECK(n.point_count() == 61);
  for (const auto& p : n.upper) CHECK((p.x >= 0.0 && p.x <= 1.0));
  CHECK_THROWS_AS(parse_selig_text("bad\n0 0\n1 0\n0.5 0.1\n0.2 0\n"), ParseError);
  CHECK_THROWS_AS(parse_selig_text(""), ParseError);
}

TEST_CASE("airfoil resampling") {
  const std::vector<double> st = cosine_stations(3);
  CHECK(st[0] == 0.0);
  CHECK(st[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(st[2] == 1.0);
  for (std::size_t j = 0; j < 9; ++j)
    CHECK(cosine_stations(9)[j] == doctest::Approx((1 - std::cos(std::numbers::pi * j / 8.0)) / 2).epsilon(1e-15));

  const AirfoilGeometry flat = parse_selig_text("flat\n1 0\n0.5 0\n0 0\n0.5 0\n1 0\n");
  for (double y : resample_airfoil(flat, 8)) CHECK(y == 0.0);

  const AirfoilGeometry foil = parse_selig_text(naca4_selig(0.02, 0.4, 0.12, 50));
  const Vector v = resample_airfoil(foil, 16);
  CHECK(v.size() == 32);
  const AirfoilGeometry again = airfoil_from_vector(v);
  const Vector w = resample_airfoil(again, 16);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i] - w[i]) < 1e-12);
  CHECK_THROWS_AS(resample_airfoil(foil, 2), GeometryError);
}
