#include "tabdiff/mask.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "tabdiff/error.hpp"

namespace tabdiff {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(std::string_view item, const std::string& why) {
  throw SpecError("bad mask item '" + std::string(item) + "': " + why + " (grammar: " + kMaskGrammar + ")");
}

std::size_t parse_index(std::string_view text, std::string_view item) {
  text = trim(text);
  std::size_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(item, "expected a non-negative integer");
  return v;
}

void set_range(Mask& m, std::size_t first, std::size_t last, std::string_view item) {
  if (first > last) fail(item, "range start exceeds range end");
  if (last >= m.size())
    fail(item, "index " + std::to_string(last) + " out of range for dimension " + std::to_string(m.size()));
  for (std::size_t i = first; i <= last; ++i) m.bits[i] = 1;
}

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

const std::vector<NamedRange>& hull_components() {
  static const std::vector<NamedRange> ranges = {
      {"midship", 6, 9}, {"bow", 10, 18}, {"stern", 19, 29}, {"bulb", 30, 43}};
  return ranges;
}

Mask mask_from_spec(std::size_t dim, std::string_view spec) {
  Mask m = Mask::zeros(dim);
  if (trim(spec).empty()) return m;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t comma = spec.find(',', start);
    const std::string_view item =
        trim(spec.substr(start, comma == std::string_view::npos ? spec.npos : comma - start));
    if (item.empty()) fail(item, "empty item");

    if (item.starts_with("first-")) {
      const std::string_view frac = item.substr(6);
      const std::size_t slash = frac.find('/');
      if (slash == std::string_view::npos) fail(item, "expected first-k/n");
      const std::size_t k = parse_index(frac.substr(0, slash), item);
      const std::size_t n = parse_index(frac.substr(slash + 1), item);
      if (n == 0 || k > n) fail(item, "fraction must satisfy 0 <= k <= n, n > 0");
      const std::size_t count = dim * k / n;
      for (std::size_t i = 0; i < count; ++i) m.bits[i] = 1;
    } else if (std::isalpha(static_cast<unsigned char>(item.front()))) {
      const auto& comps = hull_components();
      auto it = std::find_if(comps.begin(), comps.end(), [&](const NamedRange& r) { return item == r.name; });
      if (it == comps.end()) fail(item, "unknown component name");
      set_range(m, it->first, it->last, item);
    } else if (const std::size_t dash = item.find('-'); dash != std::string_view::npos) {
      set_range(m, parse_index(item.substr(0, dash), item), parse_index(item.substr(dash + 1), item), item);
    } else {
      const std::size_t i = parse_index(item, item);
      set_range(m, i, i, item);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return m;
}

std::string mask_to_spec(const Mask& mask) {
  std::string out;
  std::size_t i = 0;
  while (i < mask.size()) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < mask.size() && mask[j + 1]) ++j;
    if (!out.empty()) out += ',';
    out += std::to_string(i);
    if (j > i) out += "-" + std::to_string(j);
    i = j + 1;
  }
  return out;
}

}  // namespace tabdiff
