#include "rehit/blocks.hpp"

namespace rehit {

template <typename S>
Drdb<S> Drdb<S>::build(ParamStore<S>& store, const std::string& prefix, int c, DrdbConfig cfg,
                       Activation act, Rng& rng) {
  cfg.validate();
  if (cfg.growth_channels == 0) cfg.growth_channels = std::max(1, c / 2);
  Drdb<S> blk;
  blk.cfg = cfg;
  blk.act = act;
  const int g = cfg.growth_channels;
  for (int j = 0; j < cfg.layers; ++j) {
    const int dil = cfg.dilations[size_t(j)];
    blk.dense.push_back(make_conv(store, prefix + ".dense" + std::to_string(j), c + j * g, g, 3,
                                  ConvSpec::padded(dil, 1, dil), rng));
  }
  blk.fusion = make_conv(store, prefix + ".fusion", c + cfg.layers * g, c, 1, ConvSpec{}, rng,
                         Init::Zero);
  return blk;
}

template <typename S>
Id<S> Drdb<S>::operator()(Tape<S>& t, Id<S> x) const {
  std::vector<Id<S>> feats = {x};
  for (size_t j = 0; j < dense.size(); ++j) {
    auto in = feats.size() == 1 ? x : concat_channels(t, feats);
    feats.push_back(activate(t, dense[j](t, in), act));
  }
  auto fused = fusion(t, concat_channels(t, feats));
  return add(t, x, fused);
}

template <typename S>
Sam<S> Sam<S>::build(ParamStore<S>& store, const std::string& prefix, int c, SamConfig cfg,
                     Activation act, Rng& rng) {
  cfg.validate();
  Sam<S> blk;
  blk.cfg = cfg;
  blk.act = act;
  for (int i = 0; i < SamConfig::kBranchConvs; ++i) {
    const bool last = i == SamConfig::kBranchConvs - 1;
    blk.branch.push_back(make_conv(store, prefix + ".branch" + std::to_string(i), c, c, 3,
                                   ConvSpec::padded(1), rng, last ? Init::Zero : Init::Uniform));
  }
  blk.fuse_logits = make_conv(store, prefix + ".fuse_logits", c * cfg.scales, cfg.scales, 1,
                              ConvSpec{}, rng, Init::Zero);
  return blk;
}

template <typename S>
std::vector<Id<S>> Sam<S>::pyramid_extract(Tape<S>& t, Id<S> x) const {
  const Dims d = t.val(x).dims;
  const int min_extent = 1 << (cfg.scales - 1);
  if (d.h < min_extent || d.w < min_extent) {
    throw ShapeError("Sam: spatial dims " + to_string(d) + " too small for " +
                     std::to_string(cfg.scales) + " scales");
  }
  std::vector<Id<S>> pyramid;
  for (int s = 0; s < cfg.scales; ++s) {
    auto r = s == 0 ? x : bilinear_resize(t, x, std::max(1, d.h >> s), std::max(1, d.w >> s));
    auto y = r;
    for (int i = 0; i < SamConfig::kBranchConvs; ++i) {
      y = branch[size_t(i)](t, y);
      if (i + 1 < SamConfig::kBranchConvs) y = activate(t, y, act);
    }
    pyramid.push_back(add(t, r, y));
  }
  return pyramid;
}

template <typename S>
Id<S> Sam<S>::cross_scale_fuse(Tape<S>& t, const std::vector<Id<S>>& pyramid) const {
  if (pyramid.empty()) throw ShapeError("Sam: empty pyramid");
  const Dims d0 = t.val(pyramid[0]).dims;
  std::vector<Id<S>> ups;
  for (size_t s = 0; s < pyramid.size(); ++s) {
    const Dims ds = t.val(pyramid[s]).dims;
    ups.push_back(ds.h == d0.h && ds.w == d0.w ? pyramid[s]
                                               : bilinear_resize(t, pyramid[s], d0.h, d0.w));
  }
  auto logits = fuse_logits(t, concat_channels(t, ups));
  auto weights = softmax_channels(t, logits);
  Id<S> out = -1;
  for (size_t s = 0; s < ups.size(); ++s) {
    auto ws = slice_channels(t, weights, int(s), int(s) + 1);
    auto term = mul_broadcast_channel(t, ups[s], ws);
    out = s == 0 ? term : add(t, out, term);
  }
  return out;
}

template <typename S>
HctbBlock<S> HctbBlock<S>::build(ParamStore<S>& store, const std::string& prefix,
                                 const AttentionConfig& attn_cfg, int illum_channels,
                                 DrdbConfig drdb_cfg, SamConfig sam_cfg, Activation cnn_act,
                                 bool use_htb, Rng& rng) {
  HctbBlock<S> blk;
  blk.use_htb = use_htb;
  blk.drdb = Drdb<S>::build(store, prefix + ".drdb", attn_cfg.channels, drdb_cfg, cnn_act, rng);
  if (use_htb) {
    blk.htb = HtbBlock<S>::build(store, prefix + ".htb", attn_cfg, illum_channels, rng);
  }
  blk.sam = Sam<S>::build(store, prefix + ".sam", attn_cfg.channels, sam_cfg, cnn_act, rng);
  return blk;
}

template <typename S>
Id<S> HctbBlock<S>::operator()(Tape<S>& t, Id<S> x, Id<S> illum) const {
  auto y = drdb(t, x);
  if (use_htb) y = htb(t, y, illum);
  return sam(t, y);
}

template struct Drdb<float>;
template struct Drdb<double>;
template struct Sam<float>;
template struct Sam<double>;
template struct HctbBlock<float>;
template struct HctbBlock<double>;

}  // namespace rehit
