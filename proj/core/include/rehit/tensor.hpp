#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rehit/errors.hpp"

namespace rehit {

// Dense NCHW dims. Row-major layout: index = ((n*C + c)*H + y)*W + x.
struct Dims {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t numel() const {
    return std::int64_t(n) * c * h * w;
  }
  std::int64_t spatial() const { return std::int64_t(h) * w; }
  bool operator==(const Dims&) const = default;
};

std::string to_string(const Dims& d);

template <typename S>
struct Tensor4 {
  Dims dims;
  std::vector<S> data;

  Tensor4() = default;
  explicit Tensor4(Dims d, S fill = S(0)) : dims(d), data(size_t(check(d).numel()), fill) {}

  static Tensor4 zeros(Dims d) { return Tensor4(d); }
  static Tensor4 full(Dims d, S v) { return Tensor4(d, v); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  std::int64_t idx(int in, int ic, int iy, int ix) const {
    return ((std::int64_t(in) * dims.c + ic) * dims.h + iy) * dims.w + ix;
  }
  S& at(int in, int ic, int iy, int ix) { return data[size_t(idx(in, ic, iy, ix))]; }
  S at(int in, int ic, int iy, int ix) const { return data[size_t(idx(in, ic, iy, ix))]; }

  std::int64_t numel() const { return dims.numel(); }
  bool same_dims(const Tensor4& o) const { return dims == o.dims; }

  bool all_finite() const {
    for (S v : data) {
      if (!std::isfinite(double(v))) return false;
    }
    return true;
  }

  template <typename T>
  Tensor4<T> cast() const {
    Tensor4<T> out;
    out.dims = dims;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = T(data[i]);
    return out;
  }

 private:
  static Dims check(Dims d) {
    if (d.n < 1 || d.c < 1 || d.h < 1 || d.w < 1) {
      throw ShapeError("Tensor4 dims must all be >= 1, got " + rehit::to_string(d));
    }
    return d;
  }
};

// Bijection on [0, L). forward[rank] = original index of the element at
// sorted rank; inverse[forward[i]] == i.
struct Permutation {
  std::vector<std::int32_t> forward;
  std::vector<std::int32_t> inverse;

  std::size_t size() const { return forward.size(); }
};

Permutation identity_permutation(std::int64_t len);

// Stable argsort, ascending by default. Equal values keep their original
// index order either way. Throws NumericError if any value is NaN.
Permutation argsort_stable(const double* values, std::int64_t len, bool descending = false);
Permutation argsort_stable(const std::vector<double>& values, bool descending = false);

enum class PermDirection { Forward, Inverse };

// out[i] = x[forward[i]] (Forward) or out[forward[i]] = x[i] (Inverse).
template <typename S>
std::vector<S> permute_apply(const std::vector<S>& x, const Permutation& p, PermDirection dir) {
  if (x.size() != p.size()) {
    throw ShapeError("permute_apply: length " + std::to_string(x.size()) +
                     " does not match permutation length " + std::to_string(p.size()));
  }
  std::vector<S> out(x.size());
  if (dir == PermDirection::Forward) {
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[size_t(p.forward[i])];
  } else {
    for (size_t i = 0; i < x.size(); ++i) out[size_t(p.forward[i])] = x[i];
  }
  return out;
}

// Deterministic RNG. The mt19937_64 engine sequence is pinned by the C++
// standard; the value helpers below avoid std::*_distribution, whose output
// is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

  // Independent child stream; distinct tags give decoupled sequences.
  Rng fork(std::uint64_t tag);

 private:
  std::mt19937_64 eng_;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace rehit
