#pragma once

#include <vector>

#include "rehit/hist_attention.hpp"

namespace rehit {

struct DrdbConfig {
  int growth_channels = 0;  // 0 = c/2
  int layers = 4;
  std::vector<int> dilations = {1, 2, 3, 2};

  void validate() const {
    if (layers != int(dilations.size())) {
      throw ShapeError("DrdbConfig: layers must equal |dilations|");
    }
  }
};

struct SamConfig {
  int scales = 3;  // pyramid ratios 1, 1/2, 1/4, ...
  static constexpr int kBranchConvs = 5;

  void validate() const {
    if (scales < 1) throw ShapeError("SamConfig: scales must be >= 1");
  }
};

// Dilated residual dense block: layer j convolves concat(x, out_1..out_{j-1})
// with dilation dilations[j]; a zero-init 1x1 fusion conv plus the residual
// makes a fresh block an exact identity.
template <typename S>
struct Drdb {
  DrdbConfig cfg;
  std::vector<Conv2dLayer<S>> dense;
  Conv2dLayer<S> fusion;
  Activation act = Activation::ReLU;

  static Drdb build(ParamStore<S>& store, const std::string& prefix, int c, DrdbConfig cfg,
                    Activation act, Rng& rng);
  Id<S> operator()(Tape<S>& t, Id<S> x) const;
};

// Semantic-aligned multi-scale module: shared five-conv branch over a bilinear
// pyramid (residual, last conv zero-init), fused with per-pixel softmax
// weights from a zero-init 1x1 conv.
template <typename S>
struct Sam {
  SamConfig cfg;
  std::vector<Conv2dLayer<S>> branch;  // kBranchConvs shared convs
  Conv2dLayer<S> fuse_logits;
  Activation act = Activation::ReLU;

  static Sam build(ParamStore<S>& store, const std::string& prefix, int c, SamConfig cfg,
                   Activation act, Rng& rng);

  std::vector<Id<S>> pyramid_extract(Tape<S>& t, Id<S> x) const;
  Id<S> cross_scale_fuse(Tape<S>& t, const std::vector<Id<S>>& pyramid) const;
  Id<S> operator()(Tape<S>& t, Id<S> x) const {
    return cross_scale_fuse(t, pyramid_extract(t, x));
  }
};

// One encoder/decoder block: DRDB -> IG-HTB -> SAM.
template <typename S>
struct HctbBlock {
  Drdb<S> drdb;
  HtbBlock<S> htb;
  Sam<S> sam;
  bool use_htb = true;

  static HctbBlock build(ParamStore<S>& store, const std::string& prefix,
                         const AttentionConfig& attn_cfg, int illum_channels, DrdbConfig drdb_cfg,
                         SamConfig sam_cfg, Activation cnn_act, bool use_htb, Rng& rng);

  Id<S> operator()(Tape<S>& t, Id<S> x, Id<S> illum) const;
};

}  // namespace rehit
