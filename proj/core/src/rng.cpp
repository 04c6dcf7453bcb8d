#include "vibspk/rng.hpp"

#include <cmath>
#include <numbers>

namespace vibspk {

namespace {

// splitmix64 finalizer
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t key, std::uint64_t counter) const {
  std::uint64_t h = mix(seed_ ^ 0x6a09e667f3bcc908ULL);
  h = mix(h ^ key);
  h = mix(h ^ counter);
  return h;
}

double CounterRng::uniform(std::uint64_t key, std::uint64_t counter) const {
  // 53 mantissa bits, shifted into (0,1) so log() is always finite.
  const std::uint64_t b = bits(key, counter) >> 11;
  return (static_cast<double>(b) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t key, std::uint64_t counter) const {
  // Box-Muller on two dedicated uniforms per counter.
  const double u1 = uniform(key, 2 * counter);
  const double u2 = uniform(key, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::derive_key(std::uint64_t a, std::uint64_t b,
                                     std::uint64_t c) {
  return mix(mix(mix(a) ^ b) ^ c);
}

}  // namespace vibspk
