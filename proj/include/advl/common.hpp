#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace advl {

inline constexpr const char* kVersion = "1.0.0";

// Error categories. Every error the library throws carries one so the CLI can
// emit a single machine-parseable line and pick the right exit code.
enum class errc {
  config,    // bad parameters, shape mismatches, invalid combinations
  ingest,    // malformed input data (IDX/CSV/binary batches)
  io,        // filesystem failures
  numeric,   // divergence, domain violations at runtime
  internal,  // broken invariants; indicates a bug
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::config: return "config";
    case errc::ingest: return "ingest";
    case errc::io: return "io";
    case errc::numeric: return "numeric";
    case errc::internal: return "internal";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc cat, const std::string& msg) : std::runtime_error(msg), cat_(cat) {}
  errc category() const { return cat_; }
  const char* category_name() const { return errc_name(cat_); }

 private:
  errc cat_;
};

[[noreturn]] inline void fail(errc cat, const std::string& msg) { throw error(cat, msg); }

inline void require(bool cond, errc cat, const std::string& msg) {
  if (!cond) fail(cat, msg);
}

// Deterministic RNG. mt19937_64 output is fully specified by the standard, but
// the standard *distributions* are not, so uniform/normal are derived here by
// hand: identical streams on every platform and compiler.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t raw() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) fail(errc::internal, "Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = raw();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;  // keep log() finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; used to derive independent per-item seeds from a base
// seed without consuming the base stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace advl
