#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Shared plumbing: error taxonomy, deterministic hashing/RNG, string helpers.

namespace biaslab {

// Error taxonomy. The CLI maps these onto distinct exit codes
// (config=2, data=3, divergence=4, alignment=5).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct ShapeError : DataError {
  using DataError::DataError;
};
struct NumericError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};
struct AlignmentError : Error {
  using Error::Error;
};
// Raised by majority voting on an even split; callers route the item to
// out-of-band review instead of guessing a label.
struct TieError : DataError {
  using DataError::DataError;
};

// ---------------------------------------------------------------------------
// Hashing / deterministic RNG.
// All randomness in the project flows through these so that runs are
// bit-reproducible for a fixed seed, independent of the standard library's
// distribution implementations.

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Mixes two seeds into one stream id.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2));
  return splitmix64(s);
}

// Deterministic RNG with explicit uniform/normal implementations.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Unbiased via rejection.
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal via Box-Muller (one value per call; pairs not cached so
  // the stream stays position-independent).
  double next_normal();

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // k distinct indices from [0, n), in sampled order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// String helpers.

std::string trim(std::string_view s);
// Collapses all runs of whitespace to single spaces and trims the ends.
std::string collapse_whitespace(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split_on(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Fixed-width hex rendering of a hash, used in run ids and fingerprints.
std::string hex64(std::uint64_t h);

}  // namespace biaslab
