#ifndef ATTRBENCH_COMMON_HPP
#define ATTRBENCH_COMMON_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace atb {

// Error hierarchy. The CLI maps these onto exit codes, so every throw site
// below picks the most specific class.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed configuration or arguments (exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// NaN/Inf produced from finite inputs, divergence, etc. (exit code 3).
struct NumericFault : Error {
  using Error::Error;
};

// Tensor shape mismatch; message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Broken file containers (idx, ATB1).
struct FormatError : Error {
  using Error::Error;
};

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// splitmix64; used both as a seed mixer and inside the FNV fingerprint salt.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Key-derived stream seeds. Streams keyed by (seed, purpose, indices...) are
// what keeps parallel evaluation order-insensitive: a worker never consumes
// another worker's draws.
inline uint64_t mix_seed(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x8a5cd789635d2dffULL;
  for (uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v);

// Deterministic RNG stream. All distributions are implemented by hand on top
// of mt19937_64 raw draws because the std::*_distribution algorithms are
// implementation-defined and would break seed portability across toolchains.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : eng_(splitmix64(seed)) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  uint64_t uniform_int(uint64_t n);

  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace atb

#endif
