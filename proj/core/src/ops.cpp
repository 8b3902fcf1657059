#include "rehit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rehit/parallel.hpp"

namespace rehit {

namespace {

int ceil_div(int a, int b) {
  // b > 0; correct for negative a.
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

template <typename S>
void check_same(const Tensor4<S>& a, const Tensor4<S>& b, const char* op) {
  if (!(a.dims == b.dims)) {
    throw ShapeError(std::string(op) + ": dims mismatch " + to_string(a.dims) + " vs " +
                     to_string(b.dims));
  }
}

template <typename S, typename Fwd, typename Grad>
Id<S> unary_op(Tape<S>& t, const char* name, Id<S> a, Fwd fwd, Grad dgrad) {
  const Tensor4<S>& xa = t.val(a);
  Tensor4<S> out(xa.dims);
  const std::int64_t n = out.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data[i] = S(fwd(double(xa.data[i])));
  return t.emit(name, std::move(out), [a, dgrad](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    const Tensor4<S>& x = tp.val(a);
    Tensor4<S>& da = tp.grad(a);
    const std::int64_t m = g.numel();
    for (std::int64_t i = 0; i < m; ++i) {
      da.data[i] += S(double(g.data[i]) * dgrad(double(x.data[i])));
    }
  });
}

}  // namespace

int conv_out_extent(int in, int k, int stride, int dilation, int pad) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Id<S> add(Tape<S>& t, Id<S> a, Id<S> b) {
  const Tensor4<S>& xa = t.val(a);
  const Tensor4<S>& xb = t.val(b);
  check_same(xa, xb, "add");
  Tensor4<S> out(xa.dims);
  for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = xa.data[i] + xb.data[i];
  return t.emit("add", std::move(out), [a, b](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& da = tp.grad(a);
    for (std::int64_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i];
    Tensor4<S>& db = tp.grad(b);
    for (std::int64_t i = 0; i < g.numel(); ++i) db.data[i] += g.data[i];
  });
}

template <typename S>
Id<S> sub(Tape<S>& t, Id<S> a, Id<S> b) {
  const Tensor4<S>& xa = t.val(a);
  const Tensor4<S>& xb = t.val(b);
  check_same(xa, xb, "sub");
  Tensor4<S> out(xa.dims);
  for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = xa.data[i] - xb.data[i];
  return t.emit("sub", std::move(out), [a, b](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& da = tp.grad(a);
    for (std::int64_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i];
    Tensor4<S>& db = tp.grad(b);
    for (std::int64_t i = 0; i < g.numel(); ++i) db.data[i] -= g.data[i];
  });
}

template <typename S>
Id<S> mul(Tape<S>& t, Id<S> a, Id<S> b) {
  const Tensor4<S>& xa = t.val(a);
  const Tensor4<S>& xb = t.val(b);
  check_same(xa, xb, "mul");
  Tensor4<S> out(xa.dims);
  for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = xa.data[i] * xb.data[i];
  t.add_flops(out.numel());
  return t.emit("mul", std::move(out), [a, b](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    {
      const Tensor4<S>& vb = tp.val(b);
      Tensor4<S>& da = tp.grad(a);
      for (std::int64_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i] * vb.data[i];
    }
    {
      const Tensor4<S>& va = tp.val(a);
      Tensor4<S>& db = tp.grad(b);
      for (std::int64_t i = 0; i < g.numel(); ++i) db.data[i] += g.data[i] * va.data[i];
    }
  });
}

template <typename S>
Id<S> div(Tape<S>& t, Id<S> a, Id<S> b) {
  const Tensor4<S>& xa = t.val(a);
  const Tensor4<S>& xb = t.val(b);
  check_same(xa, xb, "div");
  Tensor4<S> out(xa.dims);
  for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = xa.data[i] / xb.data[i];
  t.add_flops(out.numel());
  return t.emit("div", std::move(out), [a, b](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    const Tensor4<S>& va = tp.val(a);
    const Tensor4<S>& vb = tp.val(b);
    {
      Tensor4<S>& da = tp.grad(a);
      for (std::int64_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i] / vb.data[i];
    }
    {
      Tensor4<S>& db = tp.grad(b);
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        db.data[i] -= g.data[i] * va.data[i] / (vb.data[i] * vb.data[i]);
      }
    }
  });
}

template <typename S>
Id<S> add_scalar(Tape<S>& t, Id<S> a, double v) {
  return unary_op(
      t, "add_scalar", a, [v](double x) { return x + v; }, [](double) { return 1.0; });
}

template <typename S>
Id<S> mul_scalar(Tape<S>& t, Id<S> a, double v) {
  return unary_op(
      t, "mul_scalar", a, [v](double x) { return x * v; }, [v](double) { return v; });
}

template <typename S>
Id<S> relu(Tape<S>& t, Id<S> a) {
  return unary_op(
      t, "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x) { return x > 0 ? 1.0 : 0.0; });
}

template <typename S>
Id<S> gelu(Tape<S>& t, Id<S> a) {
  static constexpr double kInvSqrt2 = 0.70710678118654752440;
  static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_op(
      t, "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

template <typename S>
Id<S> sigmoid(Tape<S>& t, Id<S> a) {
  auto sig = [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); };
  return unary_op(
      t, "sigmoid", a, sig,
      [sig](double x) {
        const double s = sig(x);
        return s * (1.0 - s);
      });
}

template <typename S>
Id<S> softplus_floor(Tape<S>& t, Id<S> a, double floor) {
  auto sp = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  auto sig = [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); };
  return unary_op(
      t, "softplus_floor", a,
      [sp, floor](double x) { return std::max(sp(x), floor); },
      [sp, sig, floor](double x) { return sp(x) > floor ? sig(x) : 0.0; });
}

template <typename S>
Id<S> abs_val(Tape<S>& t, Id<S> a) {
  return unary_op(
      t, "abs", a, [](double x) { return std::fabs(x); },
      [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

template <typename S>
Id<S> clamp_min(Tape<S>& t, Id<S> a, double lo) {
  return unary_op(
      t, "clamp_min", a, [lo](double x) { return x > lo ? x : lo; },
      [lo](double x) { return x > lo ? 1.0 : 0.0; });
}

template <typename S>
Id<S> pow_scalar(Tape<S>& t, Id<S> a, double p) {
  return unary_op(
      t, "pow_scalar", a, [p](double x) { return std::pow(x, p); },
      [p](double x) { return p * std::pow(x, p - 1.0); });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Id<S> sum_all(Tape<S>& t, Id<S> a) {
  const Tensor4<S>& xa = t.val(a);
  Tensor4<S> out(Dims{1, 1, 1, 1});
  double acc = 0;
  for (std::int64_t i = 0; i < xa.numel(); ++i) acc += double(xa.data[i]);
  out.data[0] = S(acc);
  return t.emit("sum_all", std::move(out), [a](Tape<S>& tp, Id<S> o) {
    const S g = tp.grad(o).data[0];
    Tensor4<S>& da = tp.grad(a);
    for (std::int64_t i = 0; i < da.numel(); ++i) da.data[i] += g;
  });
}

template <typename S>
Id<S> mean_all(Tape<S>& t, Id<S> a) {
  const Tensor4<S>& xa = t.val(a);
  const std::int64_t n = xa.numel();
  Tensor4<S> out(Dims{1, 1, 1, 1});
  double acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += double(xa.data[i]);
  out.data[0] = S(acc / double(n));
  return t.emit("mean_all", std::move(out), [a, n](Tape<S>& tp, Id<S> o) {
    const S g = S(double(tp.grad(o).data[0]) / double(n));
    Tensor4<S>& da = tp.grad(a);
    for (std::int64_t i = 0; i < n; ++i) da.data[i] += g;
  });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

template <typename S>
Id<S> reshape(Tape<S>& t, Id<S> a, Dims d) {
  const Tensor4<S>& xa = t.val(a);
  if (xa.numel() != d.numel()) {
    throw ShapeError("reshape: numel mismatch " + to_string(xa.dims) + " -> " + to_string(d));
  }
  Tensor4<S> out(d);
  out.data = xa.data;
  return t.emit("reshape", std::move(out), [a](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& da = tp.grad(a);
    for (std::int64_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i];
  });
}

template <typename S>
Id<S> concat_channels(Tape<S>& t, const std::vector<Id<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: empty input list");
  const Dims d0 = t.val(parts[0]).dims;
  int ctotal = 0;
  for (Id<S> p : parts) {
    const Dims d = t.val(p).dims;
    if (d.n != d0.n || d.h != d0.h || d.w != d0.w) {
      throw ShapeError("concat_channels: dims mismatch " + to_string(d) + " vs " + to_string(d0));
    }
    ctotal += d.c;
  }
  Tensor4<S> out(Dims{d0.n, ctotal, d0.h, d0.w});
  const std::int64_t plane = d0.spatial();
  std::int64_t coff = 0;
  for (Id<S> p : parts) {
    const Tensor4<S>& x = t.val(p);
    for (int in = 0; in < d0.n; ++in) {
      std::copy_n(x.ptr() + std::int64_t(in) * x.dims.c * plane, std::int64_t(x.dims.c) * plane,
                  out.ptr() + (std::int64_t(in) * ctotal + coff) * plane);
    }
    coff += x.dims.c;
  }
  std::vector<Id<S>> ids(parts);
  return t.emit("concat_channels", std::move(out), [ids, ctotal, plane, d0](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    std::int64_t coff = 0;
    for (Id<S> p : ids) {
      Tensor4<S>& dp = tp.grad(p);
      const int pc = dp.dims.c;
      for (int in = 0; in < d0.n; ++in) {
        const S* src = g.ptr() + (std::int64_t(in) * ctotal + coff) * plane;
        S* dst = dp.ptr() + std::int64_t(in) * pc * plane;
        for (std::int64_t i = 0; i < std::int64_t(pc) * plane; ++i) dst[i] += src[i];
      }
      coff += pc;
    }
  });
}

template <typename S>
Id<S> slice_channels(Tape<S>& t, Id<S> a, int c0, int c1) {
  const Tensor4<S>& xa = t.val(a);
  if (c0 < 0 || c1 <= c0 || c1 > xa.dims.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") out of bounds for c=" + std::to_string(xa.dims.c));
  }
  const std::int64_t plane = xa.dims.spatial();
  const int nc = c1 - c0;
  Tensor4<S> out(Dims{xa.dims.n, nc, xa.dims.h, xa.dims.w});
  for (int in = 0; in < xa.dims.n; ++in) {
    std::copy_n(xa.ptr() + (std::int64_t(in) * xa.dims.c + c0) * plane, std::int64_t(nc) * plane,
                out.ptr() + std::int64_t(in) * nc * plane);
  }
  const int ctotal = xa.dims.c;
  return t.emit("slice_channels", std::move(out), [a, c0, nc, ctotal, plane](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& da = tp.grad(a);
    for (int in = 0; in < g.dims.n; ++in) {
      const S* src = g.ptr() + std::int64_t(in) * nc * plane;
      S* dst = da.ptr() + (std::int64_t(in) * ctotal + c0) * plane;
      for (std::int64_t i = 0; i < std::int64_t(nc) * plane; ++i) dst[i] += src[i];
    }
  });
}

template <typename S>
Id<S> channel_mean(Tape<S>& t, Id<S> a) {
  const Tensor4<S>& xa = t.val(a);
  const Dims d = xa.dims;
  Tensor4<S> out(Dims{d.n, 1, d.h, d.w});
  const std::int64_t plane = d.spatial();
  const double inv = 1.0 / d.c;
  for (int in = 0; in < d.n; ++in) {
    for (std::int64_t p = 0; p < plane; ++p) {
      double acc = 0;
      for (int c = 0; c < d.c; ++c) acc += double(xa.data[(std::int64_t(in) * d.c + c) * plane + p]);
      out.data[std::int64_t(in) * plane + p] = S(acc * inv);
    }
  }
  return t.emit("channel_mean", std::move(out), [a, d, plane, inv](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& da = tp.grad(a);
    for (int in = 0; in < d.n; ++in) {
      for (int c = 0; c < d.c; ++c) {
        S* dst = da.ptr() + (std::int64_t(in) * d.c + c) * plane;
        const S* src = g.ptr() + std::int64_t(in) * plane;
        for (std::int64_t p = 0; p < plane; ++p) dst[p] += S(double(src[p]) * inv);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

// y[n,co] += sum_{ci,ky,kx} w[co,ci,ky,kx] * x[n, g*cig+ci, ...]
template <typename S>
void conv_forward_kernel(const Tensor4<S>& x, const Tensor4<S>& w, const S* bias, Tensor4<S>& out,
                         const ConvSpec& sp, int groups) {
  const Dims xd = x.dims, wd = w.dims, od = out.dims;
  const int cig = wd.c;               // c_in per group
  const int cog = wd.n / groups;      // c_out per group
  const int kh = wd.h, kw = wd.w;
  parallel_for(std::int64_t(xd.n) * od.c, [&](std::int64_t job) {
    const int in = int(job / od.c);
    const int co = int(job % od.c);
    const int g = co / cog;
    S* oplane = out.ptr() + (std::int64_t(in) * od.c + co) * od.spatial();
    const S bv = bias ? bias[co] : S(0);
    std::fill(oplane, oplane + od.spatial(), bv);
    for (int ci = 0; ci < cig; ++ci) {
      const S* xplane = x.ptr() + (std::int64_t(in) * xd.c + g * cig + ci) * xd.spatial();
      const S* wk = w.ptr() + ((std::int64_t(co) * cig + ci) * kh) * kw;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const S wv = wk[ky * kw + kx];
          const int yoff = ky * sp.dilation - sp.pad_h;
          const int xoff = kx * sp.dilation - sp.pad_w;
          const int yo0 = std::max(0, ceil_div(-yoff, sp.stride));
          const int yo1 = std::min(od.h, ceil_div(xd.h - yoff, sp.stride));
          const int xo0 = std::max(0, ceil_div(-xoff, sp.stride));
          const int xo1 = std::min(od.w, ceil_div(xd.w - xoff, sp.stride));
          for (int yo = yo0; yo < yo1; ++yo) {
            const S* xrow = xplane + std::int64_t(yo * sp.stride + yoff) * xd.w + xoff;
            S* orow = oplane + std::int64_t(yo) * od.w;
            if (sp.stride == 1) {
              for (int xo = xo0; xo < xo1; ++xo) orow[xo] += wv * xrow[xo];
            } else {
              for (int xo = xo0; xo < xo1; ++xo) orow[xo] += wv * xrow[std::int64_t(xo) * sp.stride];
            }
          }
        }
      }
    }
  });
}

}  // namespace

template <typename S>
Id<S> conv2d(Tape<S>& t, Id<S> x, Id<S> w, Id<S> b, ConvSpec sp, int groups) {
  const Tensor4<S>& xv = t.val(x);
  const Tensor4<S>& wv = t.val(w);
  const Dims xd = xv.dims, wd = wv.dims;
  if (groups < 1 || xd.c % groups != 0 || wd.n % groups != 0) {
    throw ShapeError("conv2d: groups=" + std::to_string(groups) + " incompatible with c_in=" +
                     std::to_string(xd.c) + " c_out=" + std::to_string(wd.n));
  }
  if (wd.c != xd.c / groups) {
    throw ShapeError("conv2d: weight c_in " + std::to_string(wd.c) + " != input c/groups " +
                     std::to_string(xd.c / groups));
  }
  if (sp.stride < 1 || sp.dilation < 1) {
    throw ShapeError("conv2d: stride and dilation must be >= 1");
  }
  const int oh = conv_out_extent(xd.h, wd.h, sp.stride, sp.dilation, sp.pad_h);
  const int ow = conv_out_extent(xd.w, wd.w, sp.stride, sp.dilation, sp.pad_w);
  if (oh < 1 || ow < 1) {
    throw ShapeError("conv2d: output extent " + std::to_string(oh) + "x" + std::to_string(ow) +
                     " from input " + to_string(xd));
  }
  const S* bias = nullptr;
  if (b != Tape<S>::kNoId) {
    const Tensor4<S>& bv = t.val(b);
    if (bv.numel() != wd.n) {
      throw ShapeError("conv2d: bias numel " + std::to_string(bv.numel()) + " != c_out " +
                       std::to_string(wd.n));
    }
    bias = bv.ptr();
  }
  Tensor4<S> out(Dims{xd.n, wd.n, oh, ow});
  conv_forward_kernel(xv, wv, bias, out, sp, groups);
  t.add_flops(2ll * wd.h * wd.w * wd.c * wd.n * oh * ow * xd.n);

  return t.emit("conv2d", std::move(out), [x, w, b, sp, groups](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    const Tensor4<S>& xv = tp.val(x);
    const Tensor4<S>& wv = tp.val(w);
    const Dims xd = xv.dims, wd = wv.dims, od = g.dims;
    const int cig = wd.c;
    const int cog = wd.n / groups;
    const int kh = wd.h, kw = wd.w;

    {  // dx: parallel over batch, disjoint writes per n
      Tensor4<S>& dx = tp.grad(x);
      parallel_for(xd.n, [&](std::int64_t in) {
        for (int co = 0; co < od.c; ++co) {
          const int grp = co / cog;
          const S* gplane = g.ptr() + (std::int64_t(in) * od.c + co) * od.spatial();
          for (int ci = 0; ci < cig; ++ci) {
            S* dxplane = dx.ptr() + (std::int64_t(in) * xd.c + grp * cig + ci) * xd.spatial();
            const S* wk = wv.ptr() + ((std::int64_t(co) * cig + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const S wgt = wk[ky * kw + kx];
                const int yoff = ky * sp.dilation - sp.pad_h;
                const int xoff = kx * sp.dilation - sp.pad_w;
                const int yo0 = std::max(0, ceil_div(-yoff, sp.stride));
                const int yo1 = std::min(od.h, ceil_div(xd.h - yoff, sp.stride));
                const int xo0 = std::max(0, ceil_div(-xoff, sp.stride));
                const int xo1 = std::min(od.w, ceil_div(xd.w - xoff, sp.stride));
                for (int yo = yo0; yo < yo1; ++yo) {
                  S* dxrow = dxplane + std::int64_t(yo * sp.stride + yoff) * xd.w + xoff;
                  const S* grow = gplane + std::int64_t(yo) * od.w;
                  if (sp.stride == 1) {
                    for (int xo = xo0; xo < xo1; ++xo) dxrow[xo] += wgt * grow[xo];
                  } else {
                    for (int xo = xo0; xo < xo1; ++xo) dxrow[std::int64_t(xo) * sp.stride] += wgt * grow[xo];
                  }
                }
              }
            }
          }
        }
      });
    }
    {  // dw: parallel over c_out, disjoint weight slices
      Tensor4<S>& dw = tp.grad(w);
      parallel_for(wd.n, [&](std::int64_t co64) {
        const int co = int(co64);
        const int grp = co / cog;
        for (int ci = 0; ci < cig; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              const int yoff = ky * sp.dilation - sp.pad_h;
              const int xoff = kx * sp.dilation - sp.pad_w;
              const int yo0 = std::max(0, ceil_div(-yoff, sp.stride));
              const int yo1 = std::min(od.h, ceil_div(xd.h - yoff, sp.stride));
              const int xo0 = std::max(0, ceil_div(-xoff, sp.stride));
              const int xo1 = std::min(od.w, ceil_div(xd.w - xoff, sp.stride));
              double acc = 0;
              for (int in = 0; in < xd.n; ++in) {
                const S* gplane = g.ptr() + (std::int64_t(in) * od.c + co) * od.spatial();
                const S* xplane = xv.ptr() + (std::int64_t(in) * xd.c + grp * cig + ci) * xd.spatial();
                for (int yo = yo0; yo < yo1; ++yo) {
                  const S* grow = gplane + std::int64_t(yo) * od.w;
                  const S* xrow = xplane + std::int64_t(yo * sp.stride + yoff) * xd.w + xoff;
                  if (sp.stride == 1) {
                    for (int xo = xo0; xo < xo1; ++xo) acc += double(grow[xo]) * double(xrow[xo]);
                  } else {
                    for (int xo = xo0; xo < xo1; ++xo) {
                      acc += double(grow[xo]) * double(xrow[std::int64_t(xo) * sp.stride]);
                    }
                  }
                }
              }
              dw.data[((std::int64_t(co) * cig + ci) * kh + ky) * kw + kx] += S(acc);
            }
          }
        }
      });
    }
    if (b != Tape<S>::kNoId) {  // db
      Tensor4<S>& db = tp.grad(b);
      parallel_for(od.c, [&](std::int64_t co) {
        double acc = 0;
        for (int in = 0; in < od.n; ++in) {
          const S* gplane = g.ptr() + (std::int64_t(in) * od.c + co) * od.spatial();
          for (std::int64_t i = 0; i < od.spatial(); ++i) acc += double(gplane[i]);
        }
        db.data[co] += S(acc);
      });
    }
  });
}

// ---------------------------------------------------------------------------
// layer_norm
// ---------------------------------------------------------------------------

template <typename S>
Id<S> layer_norm(Tape<S>& t, Id<S> x, Id<S> gamma, Id<S> beta, double eps) {
  if (!(eps > 0)) throw NumericError("layer_norm: eps must be > 0");
  const Tensor4<S>& xv = t.val(x);
  const Tensor4<S>& gv = t.val(gamma);
  const Tensor4<S>& bv = t.val(beta);
  const Dims d = xv.dims;
  if (gv.numel() != d.c || bv.numel() != d.c) {
    throw ShapeError("layer_norm: gamma/beta must have c=" + std::to_string(d.c) + " elements");
  }
  const std::int64_t plane = d.spatial();
  Tensor4<S> out(d);
  auto xhat = std::make_shared<Tensor4<S>>(d);
  auto inv_std = std::make_shared<Tensor4<S>>(Dims{d.n, 1, d.h, d.w});
  for (int in = 0; in < d.n; ++in) {
    for (std::int64_t p = 0; p < plane; ++p) {
      double mean = 0;
      for (int c = 0; c < d.c; ++c) mean += double(xv.data[(std::int64_t(in) * d.c + c) * plane + p]);
      mean /= d.c;
      double var = 0;
      for (int c = 0; c < d.c; ++c) {
        const double dv = double(xv.data[(std::int64_t(in) * d.c + c) * plane + p]) - mean;
        var += dv * dv;
      }
      var /= d.c;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std->data[std::int64_t(in) * plane + p] = S(inv);
      for (int c = 0; c < d.c; ++c) {
        const std::int64_t ix = (std::int64_t(in) * d.c + c) * plane + p;
        const double xh = (double(xv.data[ix]) - mean) * inv;
        xhat->data[ix] = S(xh);
        out.data[ix] = S(xh * double(gv.data[c]) + double(bv.data[c]));
      }
    }
  }
  t.add_flops(xv.numel() * 8);
  return t.emit("layer_norm", std::move(out), [x, gamma, beta, xhat, inv_std, d, plane](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    const Tensor4<S>& gam = tp.val(gamma);
    Tensor4<S>& dx = tp.grad(x);
    Tensor4<S>& dgam = tp.grad(gamma);
    Tensor4<S>& dbet = tp.grad(beta);
    for (int in = 0; in < d.n; ++in) {
      for (std::int64_t p = 0; p < plane; ++p) {
        const double inv = double(inv_std->data[std::int64_t(in) * plane + p]);
        double m1 = 0, m2 = 0;  // mean(dxhat), mean(dxhat*xhat)
        for (int c = 0; c < d.c; ++c) {
          const std::int64_t ix = (std::int64_t(in) * d.c + c) * plane + p;
          const double dxh = double(g.data[ix]) * double(gam.data[c]);
          m1 += dxh;
          m2 += dxh * double(xhat->data[ix]);
        }
        m1 /= d.c;
        m2 /= d.c;
        for (int c = 0; c < d.c; ++c) {
          const std::int64_t ix = (std::int64_t(in) * d.c + c) * plane + p;
          const double dxh = double(g.data[ix]) * double(gam.data[c]);
          dx.data[ix] += S(inv * (dxh - m1 - double(xhat->data[ix]) * m2));
          dgam.data[c] += S(double(g.data[ix]) * double(xhat->data[ix]));
          dbet.data[c] += S(double(g.data[ix]));
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// pixel_shuffle / resize / pooling
// ---------------------------------------------------------------------------

template <typename S>
Id<S> pixel_shuffle(Tape<S>& t, Id<S> x, int r) {
  const Tensor4<S>& xv = t.val(x);
  const Dims d = xv.dims;
  if (r < 1) throw ShapeError("pixel_shuffle: r must be >= 1");
  if (d.c % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: c=" + std::to_string(d.c) + " not divisible by r^2=" +
                     std::to_string(r * r));
  }
  const int co = d.c / (r * r);
  Tensor4<S> out(Dims{d.n, co, d.h * r, d.w * r});
  for (int in = 0; in < d.n; ++in) {
    for (int c = 0; c < co; ++c) {
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          const int ci = c * r * r + dy * r + dx;
          for (int y = 0; y < d.h; ++y) {
            for (int xw = 0; xw < d.w; ++xw) {
              out.at(in, c, y * r + dy, xw * r + dx) = xv.at(in, ci, y, xw);
            }
          }
        }
      }
    }
  }
  return t.emit("pixel_shuffle", std::move(out), [x, r, d, co](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& dx = tp.grad(x);
    for (int in = 0; in < d.n; ++in) {
      for (int c = 0; c < co; ++c) {
        for (int dy = 0; dy < r; ++dy) {
          for (int dxp = 0; dxp < r; ++dxp) {
            const int ci = c * r * r + dy * r + dxp;
            for (int y = 0; y < d.h; ++y) {
              for (int xw = 0; xw < d.w; ++xw) {
                dx.at(in, ci, y, xw) += g.at(in, c, y * r + dy, xw * r + dxp);
              }
            }
          }
        }
      }
    }
  });
}

namespace {

struct LerpAxis {
  int i0, i1;
  double f;
};

inline LerpAxis resize_coord(int dst, int in_extent, int out_extent, bool align_corners) {
  double src;
  if (align_corners) {
    src = out_extent == 1 ? 0.0 : double(dst) * double(in_extent - 1) / double(out_extent - 1);
  } else {
    src = (double(dst) + 0.5) * double(in_extent) / double(out_extent) - 0.5;
  }
  src = std::min(std::max(src, 0.0), double(in_extent - 1));
  const int i0 = int(std::floor(src));
  const int i1 = std::min(i0 + 1, in_extent - 1);
  return LerpAxis{i0, i1, src - double(i0)};
}

}  // namespace

template <typename S>
Id<S> bilinear_resize(Tape<S>& t, Id<S> x, int out_h, int out_w, bool align_corners) {
  const Tensor4<S>& xv = t.val(x);
  const Dims d = xv.dims;
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output dims must be >= 1");
  Tensor4<S> out(Dims{d.n, d.c, out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    const LerpAxis ay = resize_coord(y, d.h, out_h, align_corners);
    for (int xw = 0; xw < out_w; ++xw) {
      const LerpAxis ax = resize_coord(xw, d.w, out_w, align_corners);
      for (int in = 0; in < d.n; ++in) {
        for (int c = 0; c < d.c; ++c) {
          const double v00 = double(xv.at(in, c, ay.i0, ax.i0));
          const double v01 = double(xv.at(in, c, ay.i0, ax.i1));
          const double v10 = double(xv.at(in, c, ay.i1, ax.i0));
          const double v11 = double(xv.at(in, c, ay.i1, ax.i1));
          const double top = v00 + (v01 - v00) * ax.f;
          const double bot = v10 + (v11 - v10) * ax.f;
          out.at(in, c, y, xw) = S(top + (bot - top) * ay.f);
        }
      }
    }
  }
  return t.emit("bilinear_resize", std::move(out),
                [x, out_h, out_w, align_corners, d](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& dx = tp.grad(x);
    for (int y = 0; y < out_h; ++y) {
      const LerpAxis ay = resize_coord(y, d.h, out_h, align_corners);
      for (int xw = 0; xw < out_w; ++xw) {
        const LerpAxis ax = resize_coord(xw, d.w, out_w, align_corners);
        for (int in = 0; in < d.n; ++in) {
          for (int c = 0; c < d.c; ++c) {
            const double gv = double(g.at(in, c, y, xw));
            dx.at(in, c, ay.i0, ax.i0) += S(gv * (1 - ay.f) * (1 - ax.f));
            dx.at(in, c, ay.i0, ax.i1) += S(gv * (1 - ay.f) * ax.f);
            dx.at(in, c, ay.i1, ax.i0) += S(gv * ay.f * (1 - ax.f));
            dx.at(in, c, ay.i1, ax.i1) += S(gv * ay.f * ax.f);
          }
        }
      }
    }
  });
}

template <typename S>
Id<S> avg_pool2(Tape<S>& t, Id<S> x) {
  const Tensor4<S>& xv = t.val(x);
  const Dims d = xv.dims;
  if (d.h < 2 || d.w < 2) throw ShapeError("avg_pool2: spatial dims must be >= 2");
  const int oh = d.h / 2, ow = d.w / 2;
  Tensor4<S> out(Dims{d.n, d.c, oh, ow});
  for (int in = 0; in < d.n; ++in) {
    for (int c = 0; c < d.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xw = 0; xw < ow; ++xw) {
          const double s = double(xv.at(in, c, 2 * y, 2 * xw)) + double(xv.at(in, c, 2 * y, 2 * xw + 1)) +
                           double(xv.at(in, c, 2 * y + 1, 2 * xw)) +
                           double(xv.at(in, c, 2 * y + 1, 2 * xw + 1));
          out.at(in, c, y, xw) = S(s * 0.25);
        }
      }
    }
  }
  return t.emit("avg_pool2", std::move(out), [x, d, oh, ow](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& dx = tp.grad(x);
    for (int in = 0; in < d.n; ++in) {
      for (int c = 0; c < d.c; ++c) {
        for (int y = 0; y < oh; ++y) {
          for (int xw = 0; xw < ow; ++xw) {
            const S q = S(double(g.at(in, c, y, xw)) * 0.25);
            dx.at(in, c, 2 * y, 2 * xw) += q;
            dx.at(in, c, 2 * y, 2 * xw + 1) += q;
            dx.at(in, c, 2 * y + 1, 2 * xw) += q;
            dx.at(in, c, 2 * y + 1, 2 * xw + 1) += q;
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// batched matrices
// ---------------------------------------------------------------------------

namespace {

// c[R,C] (+)= a[R,K] * b[K,C] or a[R,K] * b[C,K]^T
template <typename S>
void matmul_acc(const S* a, const S* b, S* c, int R, int K, int C, bool transpose_b) {
  if (!transpose_b) {
    for (int r = 0; r < R; ++r) {
      S* crow = c + std::int64_t(r) * C;
      for (int k = 0; k < K; ++k) {
        const S av = a[std::int64_t(r) * K + k];
        const S* brow = b + std::int64_t(k) * C;
        for (int j = 0; j < C; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int r = 0; r < R; ++r) {
      const S* arow = a + std::int64_t(r) * K;
      S* crow = c + std::int64_t(r) * C;
      for (int j = 0; j < C; ++j) {
        const S* brow = b + std::int64_t(j) * K;
        double acc = 0;
        for (int k = 0; k < K; ++k) acc += double(arow[k]) * double(brow[k]);
        crow[j] += S(acc);
      }
    }
  }
}

}  // namespace

template <typename S>
Id<S> bmm(Tape<S>& t, Id<S> a, Id<S> b, bool transpose_b) {
  const Tensor4<S>& av = t.val(a);
  const Tensor4<S>& bv = t.val(b);
  const Dims ad = av.dims, bd = bv.dims;
  if (ad.c != 1 || bd.c != 1 || ad.n != bd.n) {
    throw ShapeError("bmm: expects (G,1,R,K) x (G,1,K,C), got " + to_string(ad) + " and " +
                     to_string(bd));
  }
  const int G = ad.n, R = ad.h, K = ad.w;
  const int C = transpose_b ? bd.h : bd.w;
  const int bk = transpose_b ? bd.w : bd.h;
  if (bk != K) throw ShapeError("bmm: inner dims mismatch " + to_string(ad) + " vs " + to_string(bd));
  Tensor4<S> out(Dims{G, 1, R, C});
  parallel_for(G, [&](std::int64_t g) {
    matmul_acc(av.ptr() + g * std::int64_t(R) * K, bv.ptr() + g * std::int64_t(bd.h) * bd.w,
               out.ptr() + g * std::int64_t(R) * C, R, K, C, transpose_b);
  });
  t.add_flops(2ll * G * R * K * C);
  return t.emit("bmm", std::move(out), [a, b, transpose_b, G, R, K, C](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    const Tensor4<S>& av = tp.val(a);
    const Tensor4<S>& bv = tp.val(b);
    {
      Tensor4<S>& da = tp.grad(a);
      // da = g * b^T (no trans) or g * b (trans)
      parallel_for(G, [&](std::int64_t gi) {
        const S* gp = g.ptr() + gi * std::int64_t(R) * C;
        const S* bp = bv.ptr() + gi * std::int64_t(bv.dims.h) * bv.dims.w;
        S* dap = da.ptr() + gi * std::int64_t(R) * K;
        if (!transpose_b) {
          matmul_acc(gp, bp, dap, R, C, K, true);  // (R,C) x (K,C)^T
        } else {
          matmul_acc(gp, bp, dap, R, C, K, false);  // (R,C) x (C,K)
        }
      });
    }
    {
      Tensor4<S>& db = tp.grad(b);
      parallel_for(G, [&](std::int64_t gi) {
        const S* gp = g.ptr() + gi * std::int64_t(R) * C;
        const S* ap = av.ptr() + gi * std::int64_t(R) * K;
        S* dbp = db.ptr() + gi * std::int64_t(bv.dims.h) * bv.dims.w;
        if (!transpose_b) {
          // db[K,C] = a^T[K,R] * g[R,C]
          for (int k = 0; k < K; ++k) {
            for (int r = 0; r < R; ++r) {
              const S avl = ap[std::int64_t(r) * K + k];
              const S* grow = gp + std::int64_t(r) * C;
              S* drow = dbp + std::int64_t(k) * C;
              for (int j = 0; j < C; ++j) drow[j] += avl * grow[j];
            }
          }
        } else {
          // db[C,K] = g^T[C,R] * a[R,K]
          for (int j = 0; j < C; ++j) {
            for (int r = 0; r < R; ++r) {
              const S gvl = gp[std::int64_t(r) * C + j];
              const S* arow = ap + std::int64_t(r) * K;
              S* drow = dbp + std::int64_t(j) * K;
              for (int k = 0; k < K; ++k) drow[k] += gvl * arow[k];
            }
          }
        }
      });
    }
  });
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

namespace {

template <typename S>
Id<S> softmax_impl(Tape<S>& t, Id<S> x, std::shared_ptr<const std::vector<std::uint8_t>> mask,
                   const char* name) {
  const Tensor4<S>& xv = t.val(x);
  const Dims d = xv.dims;
  const int cols = d.w;
  const std::int64_t rows = d.numel() / cols;
  const std::int64_t rows_per_group = std::int64_t(d.c) * d.h;
  if (mask && std::int64_t(mask->size()) != std::int64_t(d.n) * cols) {
    throw ShapeError("softmax_rows_masked: mask size must be G*C");
  }
  Tensor4<S> out(d);
  auto probs = std::make_shared<Tensor4<S>>(d);
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* xr = xv.ptr() + r * cols;
    S* pr = probs->ptr() + r * cols;
    const std::uint8_t* mrow = mask ? mask->data() + (r / rows_per_group) * cols : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cols; ++j) {
      if (mrow && !mrow[j]) continue;
      mx = std::max(mx, double(xr[j]));
    }
    if (!std::isfinite(mx)) {  // fully masked row
      std::fill(pr, pr + cols, S(0));
      continue;
    }
    double z = 0;
    for (int j = 0; j < cols; ++j) {
      if (mrow && !mrow[j]) {
        pr[j] = S(0);
        continue;
      }
      const double e = std::exp(double(xr[j]) - mx);
      pr[j] = S(e);
      z += e;
    }
    const double inv = 1.0 / z;
    for (int j = 0; j < cols; ++j) pr[j] = S(double(pr[j]) * inv);
  }
  out.data = probs->data;
  t.add_flops(rows * cols * 4);
  return t.emit(name, std::move(out), [x, probs, cols, rows](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& dx = tp.grad(x);
    for (std::int64_t r = 0; r < rows; ++r) {
      const S* pr = probs->ptr() + r * cols;
      const S* gr = g.ptr() + r * cols;
      S* dr = dx.ptr() + r * cols;
      double dot = 0;
      for (int j = 0; j < cols; ++j) dot += double(gr[j]) * double(pr[j]);
      for (int j = 0; j < cols; ++j) dr[j] += S(double(pr[j]) * (double(gr[j]) - dot));
    }
  });
}

}  // namespace

template <typename S>
Id<S> softmax_rows(Tape<S>& t, Id<S> x) {
  return softmax_impl<S>(t, x, nullptr, "softmax_rows");
}

template <typename S>
Id<S> softmax_rows_masked(Tape<S>& t, Id<S> x, std::shared_ptr<const std::vector<std::uint8_t>> mask) {
  return softmax_impl<S>(t, x, std::move(mask), "softmax_rows_masked");
}

template <typename S>
Id<S> softmax_channels(Tape<S>& t, Id<S> x) {
  const Tensor4<S>& xv = t.val(x);
  const Dims d = xv.dims;
  const std::int64_t plane = d.spatial();
  Tensor4<S> out(d);
  auto probs = std::make_shared<Tensor4<S>>(d);
  for (int in = 0; in < d.n; ++in) {
    for (std::int64_t p = 0; p < plane; ++p) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < d.c; ++c) mx = std::max(mx, double(xv.data[(std::int64_t(in) * d.c + c) * plane + p]));
      double z = 0;
      for (int c = 0; c < d.c; ++c) {
        const double e = std::exp(double(xv.data[(std::int64_t(in) * d.c + c) * plane + p]) - mx);
        probs->data[(std::int64_t(in) * d.c + c) * plane + p] = S(e);
        z += e;
      }
      const double inv = 1.0 / z;
      for (int c = 0; c < d.c; ++c) {
        auto& v = probs->data[(std::int64_t(in) * d.c + c) * plane + p];
        v = S(double(v) * inv);
      }
    }
  }
  out.data = probs->data;
  t.add_flops(xv.numel() * 4);
  return t.emit("softmax_channels", std::move(out), [x, probs, d, plane](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    Tensor4<S>& dx = tp.grad(x);
    for (int in = 0; in < d.n; ++in) {
      for (std::int64_t p = 0; p < plane; ++p) {
        double dot = 0;
        for (int c = 0; c < d.c; ++c) {
          const std::int64_t ix = (std::int64_t(in) * d.c + c) * plane + p;
          dot += double(g.data[ix]) * double(probs->data[ix]);
        }
        for (int c = 0; c < d.c; ++c) {
          const std::int64_t ix = (std::int64_t(in) * d.c + c) * plane + p;
          dx.data[ix] += S(double(probs->data[ix]) * (double(g.data[ix]) - dot));
        }
      }
    }
  });
}

template <typename S>
Id<S> mul_broadcast_channel(Tape<S>& t, Id<S> x, Id<S> s) {
  const Tensor4<S>& xv = t.val(x);
  const Tensor4<S>& sv = t.val(s);
  const Dims d = xv.dims;
  if (sv.dims.c != 1 || sv.dims.n != d.n || sv.dims.h != d.h || sv.dims.w != d.w) {
    throw ShapeError("mul_broadcast_channel: scale must be (n,1,h,w), got " + to_string(sv.dims) +
                     " for input " + to_string(d));
  }
  const std::int64_t plane = d.spatial();
  Tensor4<S> out(d);
  for (int in = 0; in < d.n; ++in) {
    const S* srow = sv.ptr() + std::int64_t(in) * plane;
    for (int c = 0; c < d.c; ++c) {
      const S* xrow = xv.ptr() + (std::int64_t(in) * d.c + c) * plane;
      S* orow = out.ptr() + (std::int64_t(in) * d.c + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) orow[p] = xrow[p] * srow[p];
    }
  }
  t.add_flops(xv.numel());
  return t.emit("mul_broadcast_channel", std::move(out), [x, s, d, plane](Tape<S>& tp, Id<S> o) {
    const Tensor4<S>& g = tp.grad(o);
    const Tensor4<S>& xv = tp.val(x);
    const Tensor4<S>& sv = tp.val(s);
    {
      Tensor4<S>& dx = tp.grad(x);
      for (int in = 0; in < d.n; ++in) {
        const S* srow = sv.ptr() + std::int64_t(in) * plane;
        for (int c = 0; c < d.c; ++c) {
          const std::int64_t off = (std::int64_t(in) * d.c + c) * plane;
          for (std::int64_t p = 0; p < plane; ++p) dx.data[off + p] += g.data[off + p] * srow[p];
        }
      }
    }
    {
      Tensor4<S>& ds = tp.grad(s);
      for (int in = 0; in < d.n; ++in) {
        S* drow = ds.ptr() + std::int64_t(in) * plane;
        for (int c = 0; c < d.c; ++c) {
          const std::int64_t off = (std::int64_t(in) * d.c + c) * plane;
          for (std::int64_t p = 0; p < plane; ++p) drow[p] += g.data[off + p] * xv.data[off + p];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// explicit instantiation
// ---------------------------------------------------------------------------

#define REHIT_INSTANTIATE_OPS(S)                                                             \
  template Id<S> add<S>(Tape<S>&, Id<S>, Id<S>);                                             \
  template Id<S> sub<S>(Tape<S>&, Id<S>, Id<S>);                                             \
  template Id<S> mul<S>(Tape<S>&, Id<S>, Id<S>);                                             \
  template Id<S> div<S>(Tape<S>&, Id<S>, Id<S>);                                             \
  template Id<S> add_scalar<S>(Tape<S>&, Id<S>, double);                                     \
  template Id<S> mul_scalar<S>(Tape<S>&, Id<S>, double);                                     \
  template Id<S> relu<S>(Tape<S>&, Id<S>);                                                   \
  template Id<S> gelu<S>(Tape<S>&, Id<S>);                                                   \
  template Id<S> sigmoid<S>(Tape<S>&, Id<S>);                                                \
  template Id<S> softplus_floor<S>(Tape<S>&, Id<S>, double);                                 \
  template Id<S> abs_val<S>(Tape<S>&, Id<S>);                                                \
  template Id<S> clamp_min<S>(Tape<S>&, Id<S>, double);                                      \
  template Id<S> pow_scalar<S>(Tape<S>&, Id<S>, double);                                     \
  template Id<S> sum_all<S>(Tape<S>&, Id<S>);                                                \
  template Id<S> mean_all<S>(Tape<S>&, Id<S>);                                               \
  template Id<S> reshape<S>(Tape<S>&, Id<S>, Dims);                                          \
  template Id<S> concat_channels<S>(Tape<S>&, const std::vector<Id<S>>&);                    \
  template Id<S> slice_channels<S>(Tape<S>&, Id<S>, int, int);                               \
  template Id<S> channel_mean<S>(Tape<S>&, Id<S>);                                           \
  template Id<S> conv2d<S>(Tape<S>&, Id<S>, Id<S>, Id<S>, ConvSpec, int);                    \
  template Id<S> layer_norm<S>(Tape<S>&, Id<S>, Id<S>, Id<S>, double);                       \
  template Id<S> pixel_shuffle<S>(Tape<S>&, Id<S>, int);                                     \
  template Id<S> bilinear_resize<S>(Tape<S>&, Id<S>, int, int, bool);                        \
  template Id<S> avg_pool2<S>(Tape<S>&, Id<S>);                                              \
  template Id<S> bmm<S>(Tape<S>&, Id<S>, Id<S>, bool);                                       \
  template Id<S> softmax_rows<S>(Tape<S>&, Id<S>);                                           \
  template Id<S> softmax_rows_masked<S>(Tape<S>&, Id<S>,                                     \
                                        std::shared_ptr<const std::vector<std::uint8_t>>);   \
  template Id<S> softmax_channels<S>(Tape<S>&, Id<S>);                                       \
  template Id<S> mul_broadcast_channel<S>(Tape<S>&, Id<S>, Id<S>);

REHIT_INSTANTIATE_OPS(float)
REHIT_INSTANTIATE_OPS(double)

}  // namespace rehit
