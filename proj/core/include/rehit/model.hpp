#pragma once

#include <array>
#include <string>
#include <vector>

#include "rehit/blocks.hpp"
#include "rehit/retinex.hpp"

namespace rehit {

struct ModelFlags {
  bool dual_branch = true;
  bool use_ig_htb = true;
  bool illumination_mod = true;
};

struct ModelConfig {
  int base_channels = 48;
  int levels = 3;  // fixed: three levels, channel schedule base*(1,2,4)
  int bins = 64;
  std::vector<int> heads = {1, 2, 4};
  double ffn_expansion = 2.0;
  ModelFlags flags;
  Activation cnn_act = Activation::ReLU;
  Activation ffn_act = Activation::GELU;
  DrdbConfig drdb;
  SamConfig sam;

  void validate() const;
  int channels_at(int level) const { return base_channels << level; }
};

// One encoder-decoder restoration network: three levels of IG-HCTB blocks,
// stride-2 conv downsampling, pixel-shuffle upsampling, additive skips, and
// a deep-supervision head per decoder level.
template <typename S>
struct UNet {
  Conv2dLayer<S> stem;
  std::vector<Conv2dLayer<S>> guide_enc, guide_dec;  // 1x1 guidance injections
  HctbBlock<S> enc1, enc2, enc3, dec3, dec2, dec1;
  Conv2dLayer<S> down1, down2;
  Conv2dLayer<S> up2, up1;  // 1x1 channel expansion before pixel_shuffle
  Conv2dLayer<S> final_conv;
  std::vector<Conv2dLayer<S>> deep_heads;  // index = level (0 full res)

  struct Result {
    Id<S> out;                 // full-res 3-channel residual prediction
    std::array<Id<S>, 3> deep;  // full-res 3-channel residuals per level
  };

  static UNet build(ParamStore<S>& store, const std::string& prefix, const ModelConfig& cfg,
                    const std::vector<int>& guide_channels, Rng& rng);

  Result operator()(Tape<S>& t, Id<S> input, const std::vector<Id<S>>& guidance) const;
};

template <typename S>
struct ReHiTModel {
  ModelConfig config;
  ParamStore<S> store;
  RetinexEstimator<S> estimator;
  UNet<S> m_r, m_l;  // m_l unused when !flags.dual_branch

  ReHiTModel() = default;
  ReHiTModel(const ReHiTModel&) = delete;
  ReHiTModel& operator=(const ReHiTModel&) = delete;
  ReHiTModel(ReHiTModel&&) = default;
  ReHiTModel& operator=(ReHiTModel&&) = default;
};

template <typename S>
ReHiTModel<S> build_model(const ModelConfig& cfg, std::uint64_t seed);

template <typename S>
struct ModelForwardIds {
  Id<S> i_out = -1;
  Id<S> r_prime = -1, l_prime = -1, r_out = -1, l_out = -1;
  std::vector<Id<S>> deep_r, deep_l;    // per-branch predictions per level
  std::vector<Id<S>> deep_images;       // combined per-level predictions, loss targets
};

// Full Eq.-pipeline forward. Input dims must be divisible by 4; the CLI pads
// reflectively before calling this.
template <typename S>
ModelForwardIds<S> model_forward(const ReHiTModel<S>& m, Tape<S>& t, Id<S> i_sh);

template <typename S>
struct BranchState {
  Tensor4<S> r_prime, l_prime, r_out, l_out, i_out;
};

template <typename S>
struct ForwardOutputs {
  Tensor4<S> i_out;  // unclamped product; clamp01 on emission
  BranchState<S> branch;
  std::vector<Tensor4<S>> deep_outputs_r, deep_outputs_l;
};

// Convenience no-grad forward returning value snapshots.
template <typename S>
ForwardOutputs<S> infer(const ReHiTModel<S>& m, const Tensor4<S>& i_sh);

template <typename S>
std::int64_t count_params(const ReHiTModel<S>& m);

// name-prefix -> element count, insertion-ordered by first occurrence.
template <typename S>
std::vector<std::pair<std::string, std::int64_t>> param_breakdown(const ReHiTModel<S>& m);

// Analytic operation count of one forward pass at (1,3,h,w), counted while
// executing the op graph: conv contributes 2*k^2*c_in*c_out*h_out*w_out,
// each attention matmul 2*G*R*K*C.
template <typename S>
std::int64_t estimate_flops(const ReHiTModel<S>& m, int h, int w);

}  // namespace rehit
