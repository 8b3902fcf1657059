#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "rehit/tape.hpp"

namespace rehit {

// Forward operators with reverse-mode gradient rules. All are deterministic:
// fixed inputs give bit-identical outputs within a floating-point mode.

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int pad_h = 0;
  int pad_w = 0;

  static ConvSpec padded(int pad, int stride = 1, int dilation = 1) {
    return ConvSpec{stride, dilation, pad, pad};
  }
};

template <typename S>
using Id = typename Tape<S>::Id;

// -- elementwise --------------------------------------------------------
template <typename S> Id<S> add(Tape<S>& t, Id<S> a, Id<S> b);
template <typename S> Id<S> sub(Tape<S>& t, Id<S> a, Id<S> b);
template <typename S> Id<S> mul(Tape<S>& t, Id<S> a, Id<S> b);
template <typename S> Id<S> div(Tape<S>& t, Id<S> a, Id<S> b);
template <typename S> Id<S> add_scalar(Tape<S>& t, Id<S> a, double v);
template <typename S> Id<S> mul_scalar(Tape<S>& t, Id<S> a, double v);
template <typename S> Id<S> relu(Tape<S>& t, Id<S> a);
template <typename S> Id<S> gelu(Tape<S>& t, Id<S> a);
template <typename S> Id<S> sigmoid(Tape<S>& t, Id<S> a);
// max(softplus(x), floor); keeps outputs strictly positive.
template <typename S> Id<S> softplus_floor(Tape<S>& t, Id<S> a, double floor);
template <typename S> Id<S> abs_val(Tape<S>& t, Id<S> a);
template <typename S> Id<S> clamp_min(Tape<S>& t, Id<S> a, double lo);
template <typename S> Id<S> pow_scalar(Tape<S>& t, Id<S> a, double p);

// -- reductions ----------------------------------------------------------
template <typename S> Id<S> sum_all(Tape<S>& t, Id<S> a);
template <typename S> Id<S> mean_all(Tape<S>& t, Id<S> a);

// -- shape ----------------------------------------------------------------
template <typename S> Id<S> reshape(Tape<S>& t, Id<S> a, Dims d);
template <typename S> Id<S> concat_channels(Tape<S>& t, const std::vector<Id<S>>& parts);
template <typename S> Id<S> slice_channels(Tape<S>& t, Id<S> a, int c0, int c1);
template <typename S> Id<S> channel_mean(Tape<S>& t, Id<S> a);

// -- structured operators --------------------------------------------------
// weight dims (c_out, c_in/groups, kh, kw); bias (1, c_out, 1, 1) or kNoId.
template <typename S>
Id<S> conv2d(Tape<S>& t, Id<S> x, Id<S> w, Id<S> b, ConvSpec spec, int groups = 1);

// Normalizes over the channel axis per spatial location. gamma/beta (1,c,1,1).
template <typename S>
Id<S> layer_norm(Tape<S>& t, Id<S> x, Id<S> gamma, Id<S> beta, double eps);

template <typename S> Id<S> pixel_shuffle(Tape<S>& t, Id<S> x, int r);

template <typename S>
Id<S> bilinear_resize(Tape<S>& t, Id<S> x, int out_h, int out_w, bool align_corners = false);

// 2x2 stride-2 mean; odd trailing row/col dropped.
template <typename S> Id<S> avg_pool2(Tape<S>& t, Id<S> x);

// -- batched matrices: tensors shaped (G, 1, R, C) --------------------------
template <typename S> Id<S> bmm(Tape<S>& t, Id<S> a, Id<S> b, bool transpose_b);

// Row softmax over the last axis, max-subtracted for stability.
template <typename S> Id<S> softmax_rows(Tape<S>& t, Id<S> x);

// Masked variant for (G,1,R,C) groups: mask has G*C entries, nonzero = valid
// key. Rows whose group mask is all zero produce all-zero rows.
template <typename S>
Id<S> softmax_rows_masked(Tape<S>& t, Id<S> x, std::shared_ptr<const std::vector<std::uint8_t>> mask);

// Softmax over the channel axis per (n, y, x) location.
template <typename S> Id<S> softmax_channels(Tape<S>& t, Id<S> x);

// out[n,c,y,x] = x[n,c,y,x] * s[n,0,y,x]; s must be single-channel.
template <typename S> Id<S> mul_broadcast_channel(Tape<S>& t, Id<S> x, Id<S> s);

// Convolution output extent for one axis.
int conv_out_extent(int in, int k, int stride, int dilation, int pad);

}  // namespace rehit
