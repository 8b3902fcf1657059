#pragma once

#include <utility>
#include <vector>

#include "rehit/nn.hpp"

namespace rehit {

// Ground-truth decomposition of a synthetic pair: the clean image factors
// and the perturbations that produced the shadowed input.
struct GroundTruthDecomposition {
  Tensor4<double> r_gt;
  Tensor4<double> l_gt;
  Tensor4<double> r_hat;
  Tensor4<double> l_hat;
};

// i_sh = clamp01((r_gt + r_hat) * (l_gt + l_hat)). Both factors must be
// nonnegative before the clamp; a negative factor is an invalid synthesis
// config and throws NumericError.
Tensor4<double> apply_perturbation_model(const GroundTruthDecomposition& g);

template <typename S>
Tensor4<S> clamp01(const Tensor4<S>& t);

// Estimator outputs on a tape: reciprocal reflectance/illumination maps and
// per-level guidance features (spatial dims halve per level).
template <typename S>
struct RetinexDecompositionIds {
  Id<S> r_bar = -1;
  Id<S> l_bar = -1;
  std::vector<Id<S>> guidance;
};

// Lightweight estimator: concat(input, channel mean) -> 1x1 conv -> depthwise
// 5x5 -> two softplus heads, plus a strided-conv guidance chain. Heads are
// zero-weight initialized with bias softplus^-1(1), so a fresh estimator maps
// everything to exactly 1.
template <typename S>
struct RetinexEstimator {
  Conv2dLayer<S> in_proj;
  Conv2dLayer<S> trunk_dw;
  Conv2dLayer<S> head_r;
  Conv2dLayer<S> head_l;
  std::vector<Conv2dLayer<S>> guide;  // guide[0] full-res, then stride-2 chain
  int levels = 3;
  int base_channels = 0;

  static RetinexEstimator build(ParamStore<S>& store, const std::string& prefix, int base_channels,
                                int levels, Rng& rng);

  RetinexDecompositionIds<S> operator()(Tape<S>& t, Id<S> i_sh) const;

  // Guidance channel count at a level.
  int guidance_channels(int level) const { return base_channels << level; }
};

// Eq.-algebra of the dual-branch pipeline: r' = i_sh * l_bar, l' = i_sh * r_bar.
template <typename S>
std::pair<Id<S>, Id<S>> compose_branches(Tape<S>& t, Id<S> i_sh, const RetinexDecompositionIds<S>& d);

// i_out = r_out * l_out. Losses consume this unclamped; clamp01 only when
// emitting images.
template <typename S>
Id<S> recombine(Tape<S>& t, Id<S> r_out, Id<S> l_out);

inline double softplus_inverse_one() { return std::log(std::exp(1.0) - 1.0); }

constexpr double kReciprocalFloor = 1e-3;

}  // namespace rehit
