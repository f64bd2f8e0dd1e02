#include "tabdiff/rng.hpp"

namespace tabdiff {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
  return mix64(mix64(mix64(seed) ^ index) ^ (tag * 0xd1b54a32d192ed03ULL));
}

std::vector<double> Rng::gaussian_vector(std::size_t n) {
  std::vector<double> out(n);
  fill_gaussian(out);
  return out;
}

void Rng::fill_gaussian(std::span<double> out) {
  for (double& v : out) v = normal_(engine_);
}

}  // namespace tabdiff
