#pragma once

#include <cstdint>

namespace vibspk {

// Counter-based generator: every value is a pure function of
// (seed, key, counter), so generation order and parallel scheduling
// never affect the stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // 64 mixed bits for (key, counter).
  std::uint64_t bits(std::uint64_t key, std::uint64_t counter) const;

  // Uniform in the open interval (0, 1).
  double uniform(std::uint64_t key, std::uint64_t counter) const;

  // Standard normal draw; independent across (key, counter).
  double normal(std::uint64_t key, std::uint64_t counter) const;

  // Derive a sub-stream key from up to three indices.
  static std::uint64_t derive_key(std::uint64_t a, std::uint64_t b = 0,
                                  std::uint64_t c = 0);

 private:
  std::uint64_t seed_;
};

}  // namespace vibspk
