#pragma once

#include <vector>

#include "rehit/nn.hpp"

namespace rehit {

struct AttentionConfig {
  int heads = 1;
  int bins = 64;
  int channels = 0;
  double ffn_expansion = 2.0;
  bool illumination_mod = true;
  Activation ffn_act = Activation::GELU;

  void validate() const;
  int head_dim() const { return channels / heads; }
};

// Equal-count partition of L spatial positions into `bins` contiguous slices
// of the stable-sorted order. When L is not divisible, the padded tail
// repeats the last sorted index; pad slots are masked out of attention.
struct BinPartition {
  Permutation perm;
  int bins = 0;
  int bin_size = 0;
  int pad_count = 0;

  std::int64_t length() const { return std::int64_t(perm.size()); }
  std::int64_t padded_length() const { return std::int64_t(bins) * bin_size; }
  // Original position for padded slot j.
  std::int32_t slot_index(std::int64_t j) const {
    const std::int64_t L = length();
    return perm.forward[size_t(j < L ? j : L - 1)];
  }
  bool slot_is_pad(std::int64_t j) const { return j >= length(); }
};

BinPartition histogram_partition(const double* keys, std::int64_t len, int bins);
BinPartition histogram_partition(const std::vector<double>& keys, int bins);

// Depthwise 3x3 convolution evaluated in value-sorted spatial order, one sort
// key per head group (channel mean). The first half of each group's channels
// is laid out ascending, the second half descending; the inverse permutation
// restores the original layout.
template <typename S>
Id<S> dynamic_range_conv(Tape<S>& t, Id<S> x, Id<S> w, Id<S> b, int heads);

template <typename S>
struct DrConvLayer {
  ParamTensor<S>* w = nullptr;  // (c,1,3,3)
  ParamTensor<S>* b = nullptr;  // (1,c,1,1)
  int heads = 1;

  Id<S> operator()(Tape<S>& t, Id<S> x) const {
    return dynamic_range_conv(t, x, t.param(*w), t.param(*b), heads);
  }
};

template <typename S>
DrConvLayer<S> make_dr_conv(ParamStore<S>& store, const std::string& name, int c, int heads,
                            Rng& rng);

// Illumination-guided histogram self-attention.
template <typename S>
struct HistAttention {
  AttentionConfig cfg;
  Conv2dLayer<S> q_proj, k_proj, v_proj;
  DrConvLayer<S> q_dr, k_dr, v_dr;
  Conv2dLayer<S> illum_proj;  // only when illumination_mod
  Conv2dLayer<S> out_proj;    // zero-init: fresh blocks are residual no-ops

  static HistAttention build(ParamStore<S>& store, const std::string& prefix,
                             const AttentionConfig& cfg, int illum_channels, Rng& rng);

  Id<S> operator()(Tape<S>& t, Id<S> x, Id<S> illum) const;
};

// 1x1 expand to round(expansion*c) channels, gated half-split, 1x1 project
// back (zero-init).
template <typename S>
struct GatedFfn {
  Conv2dLayer<S> expand;
  Conv2dLayer<S> project;
  Activation act = Activation::GELU;

  static GatedFfn build(ParamStore<S>& store, const std::string& prefix, int c, double expansion,
                        Activation act, Rng& rng);

  Id<S> operator()(Tape<S>& t, Id<S> x) const;
};

// The transformer block: x + IG-HSA(LN(x)), then + FFN(LN(.)).
template <typename S>
struct HtbBlock {
  LayerNorm2d<S> ln1, ln2;
  HistAttention<S> attn;
  GatedFfn<S> ffn;

  static HtbBlock build(ParamStore<S>& store, const std::string& prefix, const AttentionConfig& cfg,
                        int illum_channels, Rng& rng);

  Id<S> operator()(Tape<S>& t, Id<S> x, Id<S> illum) const;
};

}  // namespace rehit
