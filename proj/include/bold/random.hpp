#pragma once

// Seed derivation, engines and the scrambled Sobol generator.
//
// All randomness in the engine is derived from an explicit 64-bit seed plus a
// stream tag and counter; there is no global generator.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/sobol.hpp>
#include <boost/random/uniform_01.hpp>

namespace bold {

using Engine = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Child seed for stream `tag`, element `counter` of `seed`.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                           std::uint64_t counter = 0) {
  return splitmix64(splitmix64(seed ^ hash_tag(tag)) + splitmix64(counter + 0x632BE59BD9B4E019ULL));
}

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

inline double uniform01(Engine& eng) {
  boost::random::uniform_01<double> u;
  return u(eng);
}

inline double standard_normal(Engine& eng) {
  boost::random::normal_distribution<double> n(0.0, 1.0);
  return n(eng);
}

/// Sobol points in [0,1)^d, randomized by a per-dimension XOR digital shift.
class ScrambledSobol {
 public:
  ScrambledSobol(std::size_t dim, std::uint64_t seed) : dim_(dim), engine_(dim), shift_(dim) {
    Engine eng(derive_seed(seed, "sobol-shift"));
    for (auto& s : shift_) s = eng();
  }

  std::size_t dim() const { return dim_; }

  std::vector<double> next() {
    std::vector<double> p(dim_);
    for (std::size_t j = 0; j < dim_; ++j) {
      std::uint64_t v = static_cast<std::uint64_t>(engine_()) ^ shift_[j];
      p[j] = static_cast<double>(v >> 11) * 0x1.0p-53;
    }
    return p;
  }

 private:
  std::size_t dim_;
  boost::random::sobol_engine<std::uint64_t, 64> engine_;
  std::vector<std::uint64_t> shift_;
};

}  // namespace bold
