#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tabdiff {

/// bits[i] == 1 marks a known (kept) coordinate, 0 a generated one.
struct Mask {
  std::vector<std::uint8_t> bits;

  static Mask zeros(std::size_t dim) { return Mask{std::vector<std::uint8_t>(dim, 0)}; }
  static Mask ones(std::size_t dim) { return Mask{std::vector<std::uint8_t>(dim, 1)}; }

  std::size_t size() const { return bits.size(); }
  std::size_t count() const;
  bool any() const { return count() > 0; }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  bool operator==(const Mask&) const = default;
};

struct NamedRange {
  const char* name;
  std::size_t first;
  std::size_t last;  // inclusive
};

/// Hull component groups: midship 6-9, bow 10-18, stern 19-29, bulb 30-43.
const std::vector<NamedRange>& hull_components();

inline constexpr const char* kMaskGrammar =
    "comma-separated items: an index 'i', an inclusive range 'a-b', a prefix 'first-k/8', "
    "or a hull component (midship, bow, stern, bulb); empty string fixes nothing";

/// Parses the mask grammar. "first-k/n" sets the first floor(dim*k/n) coordinates.
/// Throws SpecError on malformed items or out-of-range indices.
Mask mask_from_spec(std::size_t dim, std::string_view spec);

/// Canonical spec: sorted, merged inclusive ranges ("6-9,12"). Round-trips through
/// mask_from_spec.
std::string mask_to_spec(const Mask& mask);

}  // namespace tabdiff
