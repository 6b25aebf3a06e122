#include "hsde/random.hpp"

#include <random>

namespace hsde {

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  std::normal_distribution<double> dist;
  return dist(*this);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ (a + 0x632BE59BD9B4E019ull));
  h = mix64(h ^ (b + 0x8CB92BA72F3D8DD7ull));
  h = mix64(h ^ (c + 0xC2B2AE3D27D4EB4Full));
  return h;
}

}  // namespace hsde
