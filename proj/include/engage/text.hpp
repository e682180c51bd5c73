#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace engage {

/// Lowercased word tokens. ASCII letters, digits and inner apostrophes form
/// words; bytes >= 0x80 are kept so UTF-8 words survive as single tokens.
std::vector<std::string> tokenize(std::string_view text);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

/// 64-bit FNV-1a, with the seed folded into the offset basis.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0);

std::uint64_t splitmix64(std::uint64_t x);

/// Child seed for a named sub-stream: splitmix64(root ^ fnv1a64(label)).
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// Platform-stable RNG. mt19937_64's output sequence is fixed by the
/// standard; distributions are not, so conversions are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
};

std::string hex64(std::uint64_t value);

}  // namespace engage
