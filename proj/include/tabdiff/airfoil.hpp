#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tabdiff/designs.hpp"

namespace tabdiff {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Chord-normalized profile; both surfaces run leading edge -> trailing edge.
struct AirfoilGeometry {
  std::string name;
  std::vector<Point2> upper;
  std::vector<Point2> lower;

  /// Points in the original Selig traversal (upper TE -> LE -> lower TE).
  std::size_t point_count() const;
};

/// Selig .dat: a name line, then whitespace-separated "x y" pairs running from the
/// trailing edge over the upper surface to the leading edge and back along the lower
/// surface. Splits at the minimum-x point and scales the chord to [0, 1].
/// Throws ParseError on non-numeric rows or a non-monotone traversal.
AirfoilGeometry parse_selig(const std::filesystem::path& path);
AirfoilGeometry parse_selig_text(const std::string& text);
std::string to_selig_text(const AirfoilGeometry& geom);

/// x_j = (1 - cos(pi j / (n - 1))) / 2.
std::vector<double> cosine_stations(std::size_t n);

/// [upper y at stations | lower y at stations], length 2n. Throws GeometryError
/// when a surface spans a single x.
Vector resample_airfoil(const AirfoilGeometry& geom, std::size_t n_stations);
/// Inverse view of a resampled vector, for plotting.
AirfoilGeometry airfoil_from_vector(std::span<const double> v);

/// NACA 4-digit profile in Selig order with `n_side` cosine-spaced points per surface
/// (2 n_side - 1 points in total). camber, camber_pos and thickness are chord fractions.
std::string naca4_selig(double camber, double camber_pos, double thickness, std::size_t n_side,
                        const std::string& name = "NACA");

/// Closed-form lift/drag stand-in evaluated directly on a resampled vector:
///   Cl = 2 pi (0.05 + 4 c), Cd = 0.006 + 0.5 h^2, perf = Cl / Cd
/// with c and h the chordwise means of camber and thickness.
class AirfoilProxy {
 public:
  static constexpr const char* kName = "naca-proxy";
  explicit AirfoilProxy(std::size_t n_stations) : stations_(cosine_stations(n_stations)) {}

  std::size_t n_stations() const { return stations_.size(); }
  DesignSchema schema() const;
  double performance(std::span<const double> v) const;

 private:
  std::vector<double> stations_;
};

/// Random NACA 4-digit foils pushed through Selig text -> parse -> resample, with
/// proxy performance labels.
TabularDataset naca_dataset(std::size_t n, std::size_t n_stations, std::uint64_t seed);

}  // namespace tabdiff
