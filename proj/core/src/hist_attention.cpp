#include "rehit/hist_attention.hpp"

#include <algorithm>
#include <cmath>

namespace rehit {

void AttentionConfig::validate() const {
  if (channels < 1 || heads < 1 || channels % heads != 0) {
    throw ShapeError("AttentionConfig: channels=" + std::to_string(channels) +
                     " must be divisible by heads=" + std::to_string(heads));
  }
  if (bins < 1) throw ShapeError("AttentionConfig: bins must be >= 1");
}

BinPartition histogram_partition(const double* keys, std::int64_t len, int bins) {
  if (len == 0) throw ShapeError("histogram_partition: empty key array");
  if (bins < 1) throw ShapeError("histogram_partition: bins must be >= 1");
  BinPartition part;
  part.perm = argsort_stable(keys, len);
  part.bins = bins;
  part.bin_size = int((len + bins - 1) / bins);
  part.pad_count = int(std::int64_t(part.bin_size) * bins - len);
  return part;
}

BinPartition histogram_partition(const std::vector<double>& keys, int bins) {
  return histogram_partition(keys.data(), std::int64_t(keys.size()), bins);
}

// ---------------------------------------------------------------------------
// dynamic-range convolution
// ---------------------------------------------------------------------------

namespace {

// Plain 3x3 depthwise conv on one (h,w) plane, zero padding 1.
template <typename S>
void dw3_forward(const S* src, S* dst, const S* k9, S bias, int h, int w) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = double(bias);
      for (int ky = -1; ky <= 1; ++ky) {
        const int yy = y + ky;
        if (yy < 0 || yy >= h) continue;
        for (int kx = -1; kx <= 1; ++kx) {
          const int xx = x + kx;
          if (xx < 0 || xx >= w) continue;
          acc += double(k9[(ky + 1) * 3 + (kx + 1)]) * double(src[yy * w + xx]);
        }
      }
      dst[y * w + x] = S(acc);
    }
  }
}

template <typename S>
void dw3_backward(const S* gout, const S* src, const S* k9, S* dsrc, double* dk9, double* dbias,
                  int h, int w) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = double(gout[y * w + x]);
      *dbias += g;
      for (int ky = -1; ky <= 1; ++ky) {
        const int yy = y + ky;
        if (yy < 0 || yy >= h) continue;
        for (int kx = -1; kx <= 1; ++kx) {
          const int xx = x + kx;
          if (xx < 0 || xx >= w) continue;
          dk9[(ky + 1) * 3 + (kx + 1)] += g * double(src[yy * w + xx]);
          dsrc[yy * w + xx] += S(double(k9[(ky + 1) * 3 + (kx + 1)]) * g);
        }
      }
    }
  }
}

// Channel layout rule: within each head group the first ceil(g/2) channels
// use the ascending order, the rest the descending one.
inline bool channel_descends(int ch_in_group, int group_size) {
  return ch_in_group >= (group_size + 1) / 2;
}

}  // namespace

template <typename S>
Id<S> dynamic_range_conv(Tape<S>& t, Id<S> x, Id<S> w, Id<S> b, int heads) {
  const Tensor4<S>& xv = t.val(x);
  const Tensor4<S>& wv = t.val(w);
  const Dims d = xv.dims;
  if (heads < 1 || d.c % heads != 0) {
    throw ShapeError("dynamic_range_conv: c=" + std::to_string(d.c) + " not divisible by heads=" +
                     std::to_string(heads));
  }
  if (!(wv.dims == Dims{d.c, 1, 3, 3})) {
    throw ShapeError("dynamic_range_conv: weight must be (c,1,3,3), got " + to_string(wv.dims));
  }
  const Tensor4<S>& bv = t.val(b);
  if (bv.numel() != d.c) throw ShapeError("dynamic_range_conv: bias must have c elements");
  const int group = d.c / heads;
  const std::int64_t L = d.spatial();

  // Sort decisions are data-dependent constants: one ascending and one
  // stable-descending order per head group, shared with the backward pass.
  auto perms = std::make_shared<std::vector<Permutation>>();
  perms->reserve(size_t(d.n) * heads * 2);
  std::vector<double> key(static_cast<size_t>(L));
  for (int in = 0; in < d.n; ++in) {
    for (int hd = 0; hd < heads; ++hd) {
      std::fill(key.begin(), key.end(), 0.0);
      for (int c = 0; c < group; ++c) {
        const S* plane = xv.ptr() + (std::int64_t(in) * d.c + hd * group + c) * L;
        for (std::int64_t p = 0; p < L; ++p) key[size_t(p)] += double(plane[p]);
      }
      perms->push_back(argsort_stable(key.data(), L, false));
      perms->push_back(argsort_stable(key.data(), L, true));
    }
  }

  Tensor4<S> out(d);
  std::vector<S> grid(static_cast<size_t>(L)), conv(static_cast<size_t>(L));
  for (int in = 0; in < d.n; ++in) {
    for (int c = 0; c < d.c; ++c) {
      const int hd = c / group;
      const bool desc = channel_descends(c % group, group);
      const Permutation& perm = (*perms)[(size_t(in) * heads + hd) * 2 + (desc ? 1 : 0)];
      const S* plane = xv.ptr() + (std::int64_t(in) * d.c + c) * L;
      S* oplane = out.ptr() + (std::int64_t(in) * d.c + c) * L;
      for (std::int64_t r = 0; r < L; ++r) {
        grid[size_t(r)] = plane[perm.forward[size_t(r)]];
      }
      dw3_forward(grid.data(), conv.data(), wv.ptr() + std::int64_t(c) * 9, bv.data[size_t(c)],
                  d.h, d.w);
      for (std::int64_t r = 0; r < L; ++r) {
        oplane[perm.forward[size_t(r)]] = conv[size_t(r)];
      }
    }
  }
  t.add_flops(2ll * 9 * d.numel());

  return t.emit("dynamic_range_conv", std::move(out), [x, w, b, heads, perms, d, group, L](
                                                          Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    const Tensor4<S>& xv = tp.val(x);
    const Tensor4<S>& wv = tp.val(w);
    Tensor4<S>& dx = tp.grad(x);
    Tensor4<S>& dw = tp.grad(w);
    Tensor4<S>& db = tp.grad(b);
    std::vector<S> grid(static_cast<size_t>(L)), gout(static_cast<size_t>(L)), dgrid(static_cast<size_t>(L));
    for (int in = 0; in < d.n; ++in) {
      for (int c = 0; c < d.c; ++c) {
        const int hd = c / group;
        const bool desc = channel_descends(c % group, group);
        const Permutation& perm = (*perms)[(size_t(in) * heads + hd) * 2 + (desc ? 1 : 0)];
        const S* plane = xv.ptr() + (std::int64_t(in) * d.c + c) * L;
        const S* gplane = g.ptr() + (std::int64_t(in) * d.c + c) * L;
        S* dxplane = dx.ptr() + (std::int64_t(in) * d.c + c) * L;
        for (std::int64_t r = 0; r < L; ++r) {
          grid[size_t(r)] = plane[perm.forward[size_t(r)]];
          gout[size_t(r)] = gplane[perm.forward[size_t(r)]];
        }
        std::fill(dgrid.begin(), dgrid.end(), S(0));
        double dk9[9] = {0};
        double dbias = 0;
        dw3_backward(gout.data(), grid.data(), wv.ptr() + std::int64_t(c) * 9, dgrid.data(), dk9,
                     &dbias, d.h, d.w);
        for (int k = 0; k < 9; ++k) dw.data[size_t(c) * 9 + k] += S(dk9[k]);
        db.data[size_t(c)] += S(dbias);
        for (std::int64_t r = 0; r < L; ++r) {
          dxplane[perm.forward[size_t(r)]] += dgrid[size_t(r)];
        }
      }
    }
  });
}

template <typename S>
DrConvLayer<S> make_dr_conv(ParamStore<S>& store, const std::string& name, int c, int heads,
                            Rng& rng) {
  DrConvLayer<S> layer;
  layer.heads = heads;
  layer.w = &store.create(name + ".w", Dims{c, 1, 3, 3});
  const double bound = 1.0 / 3.0;  // 1/sqrt(9)
  for (auto& v : layer.w->value.data) v = S(rng.uniform(-bound, bound));
  layer.b = &store.create(name + ".b", Dims{1, c, 1, 1});
  return layer;
}

// ---------------------------------------------------------------------------
// token rearrangement
// ---------------------------------------------------------------------------

namespace {

struct TokenPlan {
  int n = 0, heads = 0, head_dim = 0, bins = 0, bin_size = 0, h = 0, w = 0;
  std::int64_t L = 0;
  std::vector<std::int32_t> idx;  // (n*heads*bins*bin_size) -> original position
  std::shared_ptr<std::vector<std::uint8_t>> mask_a;  // (n*heads*bins) x bin_size
  std::shared_ptr<std::vector<std::uint8_t>> mask_b;  // (n*heads*bin_size) x bins
};

using TokenPlanPtr = std::shared_ptr<const TokenPlan>;

// tokens (n*heads*bins, 1, bin_size, head_dim) gathered from (n,c,h,w).
template <typename S>
Id<S> gather_tokens(Tape<S>& t, Id<S> x, const TokenPlanPtr& plan) {
  const Tensor4<S>& xv = t.val(x);
  const auto& pl = *plan;
  const std::int64_t slots = std::int64_t(pl.bins) * pl.bin_size;
  Tensor4<S> out(Dims{pl.n * pl.heads * pl.bins, 1, pl.bin_size, pl.head_dim});
  for (int in = 0; in < pl.n; ++in) {
    for (int hd = 0; hd < pl.heads; ++hd) {
      const std::int32_t* idx = pl.idx.data() + (std::int64_t(in) * pl.heads + hd) * slots;
      for (std::int64_t j = 0; j < slots; ++j) {
        const std::int64_t pos = idx[j];
        S* orow = out.ptr() + ((std::int64_t(in) * pl.heads + hd) * slots + j) * pl.head_dim;
        for (int c = 0; c < pl.head_dim; ++c) {
          orow[c] = xv.data[(std::int64_t(in) * xv.dims.c + hd * pl.head_dim + c) * pl.L + pos];
        }
      }
    }
  }
  return t.emit("gather_tokens", std::move(out), [x, plan](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& dx = tp.grad(x);
    const auto& pl = *plan;
    const std::int64_t slots = std::int64_t(pl.bins) * pl.bin_size;
    for (int in = 0; in < pl.n; ++in) {
      for (int hd = 0; hd < pl.heads; ++hd) {
        const std::int32_t* idx = pl.idx.data() + (std::int64_t(in) * pl.heads + hd) * slots;
        for (std::int64_t j = 0; j < slots; ++j) {
          const std::int64_t pos = idx[j];
          const S* grow = g.ptr() + ((std::int64_t(in) * pl.heads + hd) * slots + j) * pl.head_dim;
          for (int c = 0; c < pl.head_dim; ++c) {
            dx.data[(std::int64_t(in) * dx.dims.c + hd * pl.head_dim + c) * pl.L + pos] += grow[c];
          }
        }
      }
    }
  });
}

// Non-pad slots written back to their original positions; pads dropped.
template <typename S>
Id<S> scatter_tokens(Tape<S>& t, Id<S> tok, const TokenPlanPtr& plan) {
  const Tensor4<S>& tv = t.val(tok);
  const auto& pl = *plan;
  const std::int64_t slots = std::int64_t(pl.bins) * pl.bin_size;
  Tensor4<S> out(Dims{pl.n, pl.heads * pl.head_dim, pl.h, pl.w});
  for (int in = 0; in < pl.n; ++in) {
    for (int hd = 0; hd < pl.heads; ++hd) {
      const std::int32_t* idx = pl.idx.data() + (std::int64_t(in) * pl.heads + hd) * slots;
      for (std::int64_t j = 0; j < pl.L; ++j) {  // j >= L are pads
        const std::int64_t pos = idx[j];
        const S* trow = tv.ptr() + ((std::int64_t(in) * pl.heads + hd) * slots + j) * pl.head_dim;
        for (int c = 0; c < pl.head_dim; ++c) {
          out.data[(std::int64_t(in) * out.dims.c + hd * pl.head_dim + c) * pl.L + pos] = trow[c];
        }
      }
    }
  }
  return t.emit("scatter_tokens", std::move(out), [tok, plan](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& dt = tp.grad(tok);
    const auto& pl = *plan;
    const std::int64_t slots = std::int64_t(pl.bins) * pl.bin_size;
    for (int in = 0; in < pl.n; ++in) {
      for (int hd = 0; hd < pl.heads; ++hd) {
        const std::int32_t* idx = pl.idx.data() + (std::int64_t(in) * pl.heads + hd) * slots;
        for (std::int64_t j = 0; j < pl.L; ++j) {
          const std::int64_t pos = idx[j];
          S* drow = dt.ptr() + ((std::int64_t(in) * pl.heads + hd) * slots + j) * pl.head_dim;
          for (int c = 0; c < pl.head_dim; ++c) {
            drow[c] += g.data[(std::int64_t(in) * g.dims.c + hd * pl.head_dim + c) * pl.L + pos];
          }
        }
      }
    }
  });
}

// (m*R, 1, C, d) -> (m*C, 1, R, d): out[(mi,c)][r] = in[(mi,r)][c].
template <typename S>
Id<S> bin_transpose(Tape<S>& t, Id<S> x, int m, int R, int C) {
  const Tensor4<S>& xv = t.val(x);
  const int d = xv.dims.w;
  if (xv.dims.n != m * R || xv.dims.h != C) {
    throw ShapeError("bin_transpose: dims " + to_string(xv.dims) + " inconsistent with m=" +
                     std::to_string(m) + " R=" + std::to_string(R) + " C=" + std::to_string(C));
  }
  Tensor4<S> out(Dims{m * C, 1, R, d});
  for (int mi = 0; mi < m; ++mi) {
    for (int r = 0; r < R; ++r) {
      for (int c = 0; c < C; ++c) {
        const S* src = xv.ptr() + ((std::int64_t(mi) * R + r) * C + c) * d;
        S* dst = out.ptr() + ((std::int64_t(mi) * C + c) * R + r) * d;
        std::copy_n(src, d, dst);
      }
    }
  }
  return t.emit("bin_transpose", std::move(out), [x, m, R, C, d](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& dx = tp.grad(x);
    for (int mi = 0; mi < m; ++mi) {
      for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
          const S* src = g.ptr() + ((std::int64_t(mi) * C + c) * R + r) * d;
          S* dst = dx.ptr() + ((std::int64_t(mi) * R + r) * C + c) * d;
          for (int i = 0; i < d; ++i) dst[i] += src[i];
        }
      }
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// IG-HSA
// ---------------------------------------------------------------------------

template <typename S>
HistAttention<S> HistAttention<S>::build(ParamStore<S>& store, const std::string& prefix,
                                         const AttentionConfig& cfg, int illum_channels, Rng& rng) {
  cfg.validate();
  HistAttention<S> a;
  a.cfg = cfg;
  const int c = cfg.channels;
  a.q_proj = make_conv(store, prefix + ".q_proj", c, c, 1, ConvSpec{}, rng);
  a.k_proj = make_conv(store, prefix + ".k_proj", c, c, 1, ConvSpec{}, rng);
  a.v_proj = make_conv(store, prefix + ".v_proj", c, c, 1, ConvSpec{}, rng);
  a.q_dr = make_dr_conv(store, prefix + ".q_dr", c, cfg.heads, rng);
  a.k_dr = make_dr_conv(store, prefix + ".k_dr", c, cfg.heads, rng);
  a.v_dr = make_dr_conv(store, prefix + ".v_dr", c, cfg.heads, rng);
  if (cfg.illumination_mod) {
    a.illum_proj = make_conv(store, prefix + ".illum_proj", illum_channels, c, 1, ConvSpec{}, rng);
  }
  a.out_proj = make_conv(store, prefix + ".out_proj", c, c, 1, ConvSpec{}, rng, Init::Zero);
  return a;
}

template <typename S>
Id<S> HistAttention<S>::operator()(Tape<S>& t, Id<S> x, Id<S> illum) const {
  const Dims d = t.val(x).dims;
  if (d.c != cfg.channels) {
    throw ShapeError("HistAttention: input c=" + std::to_string(d.c) + " != configured " +
                     std::to_string(cfg.channels));
  }
  t.note("ig_hsa");
  auto q = q_dr(t, q_proj(t, x));
  auto k = k_dr(t, k_proj(t, x));
  auto v = v_dr(t, v_proj(t, x));
  if (cfg.illumination_mod) {
    const Dims id = t.val(illum).dims;
    if (id.h != d.h || id.w != d.w || id.n != d.n) {
      throw ShapeError("HistAttention: illum dims " + to_string(id) + " do not match input " +
                       to_string(d));
    }
    auto gate = mul_scalar(t, sigmoid(t, illum_proj(t, illum)), 2.0);
    k = mul(t, k, gate);
    v = mul(t, v, gate);
  }

  // Equal-count binning keyed on the value path (per-head channel mean).
  const int heads = cfg.heads;
  const int hdim = cfg.head_dim();
  const std::int64_t L = d.spatial();
  auto plan = std::make_shared<TokenPlan>();
  plan->n = d.n;
  plan->heads = heads;
  plan->head_dim = hdim;
  plan->h = d.h;
  plan->w = d.w;
  plan->L = L;
  {
    const Tensor4<S>& vv = t.val(v);
    std::vector<double> key(static_cast<size_t>(L));
    int bin_size = 0;
    for (int in = 0; in < d.n; ++in) {
      for (int hd = 0; hd < heads; ++hd) {
        std::fill(key.begin(), key.end(), 0.0);
        for (int c = 0; c < hdim; ++c) {
          const S* plane = vv.ptr() + (std::int64_t(in) * d.c + hd * hdim + c) * L;
          for (std::int64_t p = 0; p < L; ++p) key[size_t(p)] += double(plane[p]);
        }
        BinPartition part = histogram_partition(key.data(), L, cfg.bins);
        bin_size = part.bin_size;
        const std::int64_t slots = part.padded_length();
        for (std::int64_t j = 0; j < slots; ++j) plan->idx.push_back(part.slot_index(j));
      }
    }
    plan->bins = cfg.bins;
    plan->bin_size = bin_size;
    const std::int64_t slots = std::int64_t(cfg.bins) * bin_size;
    plan->mask_a = std::make_shared<std::vector<std::uint8_t>>();
    plan->mask_a->resize(size_t(d.n) * heads * slots);
    plan->mask_b = std::make_shared<std::vector<std::uint8_t>>();
    plan->mask_b->resize(size_t(d.n) * heads * slots);
    for (std::int64_t nh = 0; nh < std::int64_t(d.n) * heads; ++nh) {
      for (int b = 0; b < cfg.bins; ++b) {
        for (int r = 0; r < bin_size; ++r) {
          const bool valid = std::int64_t(b) * bin_size + r < L;
          (*plan->mask_a)[size_t(nh * slots + std::int64_t(b) * bin_size + r)] = valid;
          (*plan->mask_b)[size_t(nh * slots + std::int64_t(r) * cfg.bins + b)] = valid;
        }
      }
    }
  }
  TokenPlanPtr cplan = plan;

  const double scale = 1.0 / std::sqrt(double(hdim));
  auto qa = gather_tokens(t, q, cplan);
  auto ka = gather_tokens(t, k, cplan);
  auto va = gather_tokens(t, v, cplan);

  // Branch A: attention within each bin.
  auto scores_a = mul_scalar(t, bmm(t, qa, ka, true), scale);
  auto probs_a = softmax_rows_masked(t, scores_a, plan->mask_a);
  auto out_a = bmm(t, probs_a, va, false);

  Id<S> fused = out_a;
  if (cfg.bins > 1) {
    // Branch B: attention across bins at fixed rank.
    const int m = d.n * heads;
    auto qb = bin_transpose(t, qa, m, cfg.bins, plan->bin_size);
    auto kb = bin_transpose(t, ka, m, cfg.bins, plan->bin_size);
    auto vb = bin_transpose(t, va, m, cfg.bins, plan->bin_size);
    auto scores_b = mul_scalar(t, bmm(t, qb, kb, true), scale);
    auto probs_b = softmax_rows_masked(t, scores_b, plan->mask_b);
    auto out_b = bin_transpose(t, bmm(t, probs_b, vb, false), m, plan->bin_size, cfg.bins);
    fused = mul_scalar(t, add(t, out_a, out_b), 0.5);
  }

  auto y = scatter_tokens(t, fused, cplan);
  return out_proj(t, y);
}

// ---------------------------------------------------------------------------
// FFN and the block
// ---------------------------------------------------------------------------

template <typename S>
GatedFfn<S> GatedFfn<S>::build(ParamStore<S>& store, const std::string& prefix, int c,
                               double expansion, Activation act, Rng& rng) {
  if (expansion < 1.0) throw ShapeError("GatedFfn: expansion must be >= 1");
  GatedFfn<S> f;
  f.act = act;
  int hidden = int(std::lround(expansion * c));
  hidden = std::max(2, hidden + (hidden % 2));  // gated half-split needs even
  f.expand = make_conv(store, prefix + ".expand", c, hidden, 1, ConvSpec{}, rng);
  f.project = make_conv(store, prefix + ".project", hidden / 2, c, 1, ConvSpec{}, rng, Init::Zero);
  return f;
}

template <typename S>
Id<S> GatedFfn<S>::operator()(Tape<S>& t, Id<S> x) const {
  auto e = expand(t, x);
  const int hidden = t.val(e).dims.c;
  auto h1 = slice_channels(t, e, 0, hidden / 2);
  auto h2 = slice_channels(t, e, hidden / 2, hidden);
  auto gated = mul(t, activate(t, h1, act), h2);
  return project(t, gated);
}

template <typename S>
HtbBlock<S> HtbBlock<S>::build(ParamStore<S>& store, const std::string& prefix,
                               const AttentionConfig& cfg, int illum_channels, Rng& rng) {
  HtbBlock<S> blk;
  blk.ln1 = make_layer_norm(store, prefix + ".ln1", cfg.channels);
  blk.ln2 = make_layer_norm(store, prefix + ".ln2", cfg.channels);
  blk.attn = HistAttention<S>::build(store, prefix + ".attn", cfg, illum_channels, rng);
  blk.ffn = GatedFfn<S>::build(store, prefix + ".ffn", cfg.channels, cfg.ffn_expansion,
                               cfg.ffn_act, rng);
  return blk;
}

template <typename S>
Id<S> HtbBlock<S>::operator()(Tape<S>& t, Id<S> x, Id<S> illum) const {
  auto y = add(t, x, attn(t, ln1(t, x), illum));
  return add(t, y, ffn(t, ln2(t, y)));
}

// ---------------------------------------------------------------------------

#define REHIT_INSTANTIATE_HIST(S)                                                       \
  template Id<S> dynamic_range_conv<S>(Tape<S>&, Id<S>, Id<S>, Id<S>, int);             \
  template DrConvLayer<S> make_dr_conv<S>(ParamStore<S>&, const std::string&, int, int, \
                                          Rng&);                                        \
  template struct HistAttention<S>;                                                     \
  template struct GatedFfn<S>;                                                          \
  template struct HtbBlock<S>;

REHIT_INSTANTIATE_HIST(float)
REHIT_INSTANTIATE_HIST(double)

}  // namespace rehit
