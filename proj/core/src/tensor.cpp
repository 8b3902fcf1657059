#include "rehit/tensor.hpp"

#include <algorithm>
#include <numeric>

namespace rehit {

std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.n) + "," + std::to_string(d.c) + "," + std::to_string(d.h) + "," +
         std::to_string(d.w) + ")";
}

Permutation identity_permutation(std::int64_t len) {
  Permutation p;
  p.forward.resize(size_t(len));
  std::iota(p.forward.begin(), p.forward.end(), 0);
  p.inverse = p.forward;
  return p;
}

Permutation argsort_stable(const double* values, std::int64_t len, bool descending) {
  for (std::int64_t i = 0; i < len; ++i) {
    if (std::isnan(values[i])) {
      throw NumericError("argsort_stable: NaN at index " + std::to_string(i));
    }
  }
  Permutation p;
  p.forward.resize(size_t(len));
  std::iota(p.forward.begin(), p.forward.end(), 0);
  if (descending) {
    std::stable_sort(p.forward.begin(), p.forward.end(),
                     [&](std::int32_t a, std::int32_t b) { return values[a] > values[b]; });
  } else {
    std::stable_sort(p.forward.begin(), p.forward.end(),
                     [&](std::int32_t a, std::int32_t b) { return values[a] < values[b]; });
  }
  p.inverse.resize(size_t(len));
  for (std::int64_t r = 0; r < len; ++r) p.inverse[size_t(p.forward[size_t(r)])] = std::int32_t(r);
  return p;
}

Permutation argsort_stable(const std::vector<double>& values, bool descending) {
  return argsort_stable(values.data(), std::int64_t(values.size()), descending);
}

Rng::Rng(std::uint64_t seed) : eng_(seed) {}

std::uint64_t Rng::next_u64() { return eng_(); }

double Rng::uniform() {
  return double(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  // Rejection-free modulo is biased for huge ranges; ranges here are tiny.
  const std::uint64_t span = std::uint64_t(hi - lo + 1);
  return lo + std::int64_t(eng_() % span);
}

double Rng::normal() {
  if (have_cached_normal_) {
    have_cached_normal_ = false;
    return cached_normal_;
  }
  // Box-Muller on (0,1] uniforms.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  cached_normal_ = r * std::sin(theta);
  have_cached_normal_ = true;
  return r * std::cos(theta);
}

Rng Rng::fork(std::uint64_t tag) {
  // splitmix64 of (fresh draw ^ tag) decouples child streams.
  std::uint64_t z = next_u64() ^ (tag * 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z = z ^ (z >> 31);
  return Rng(z);
}

}  // namespace rehit
