#pragma once

#include <cmath>
#include <vector>

#include "rehit/ops.hpp"
#include "rehit/tape.hpp"
#include "rehit/tensor.hpp"

namespace testutil {

template <typename S>
rehit::Tensor4<S> random_tensor(rehit::Dims d, rehit::Rng& rng, double lo = -1.0, double hi = 1.0) {
  rehit::Tensor4<S> t(d);
  for (auto& v : t.data) v = S(rng.uniform(lo, hi));
  return t;
}

template <typename S>
double max_abs_diff(const rehit::Tensor4<S>& a, const rehit::Tensor4<S>& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::fabs(double(a.data[i]) - double(b.data[i])));
  }
  return m;
}

// Independent quadruple-loop convolution, kept free of the production path.
inline rehit::Tensor4<double> conv2d_oracle(const rehit::Tensor4<double>& x,
                                            const rehit::Tensor4<double>& w,
                                            const std::vector<double>& bias, int stride,
                                            int dilation, int pad, int groups = 1) {
  const auto& xd = x.dims;
  const auto& wd = w.dims;
  const int cig = wd.c;
  const int cog = wd.n / groups;
  const int oh = (xd.h + 2 * pad - dilation * (wd.h - 1) - 1) / stride + 1;
  const int ow = (xd.w + 2 * pad - dilation * (wd.w - 1) - 1) / stride + 1;
  rehit::Tensor4<double> out(rehit::Dims{xd.n, wd.n, oh, ow});
  for (int n = 0; n < xd.n; ++n)
    for (int co = 0; co < wd.n; ++co)
      for (int yo = 0; yo < oh; ++yo)
        for (int xo = 0; xo < ow; ++xo) {
          double acc = bias.empty() ? 0.0 : bias[size_t(co)];
          const int g = co / cog;
          for (int ci = 0; ci < cig; ++ci)
            for (int ky = 0; ky < wd.h; ++ky)
              for (int kx = 0; kx < wd.w; ++kx) {
                const int yi = yo * stride + ky * dilation - pad;
                const int xi = xo * stride + kx * dilation - pad;
                if (yi < 0 || yi >= xd.h || xi < 0 || xi >= xd.w) continue;
                acc += x.at(n, g * cig + ci, yi, xi) * w.at(co, ci, ky, kx);
              }
          out.at(n, co, yo, xo) = acc;
        }
  return out;
}

// Generic scalarizer for gradient checks: weighted sum with fixed weights
// makes gradients of every output element observable.
inline rehit::Tape<double>::Id weighted_sum(rehit::Tape<double>& t, rehit::Tape<double>::Id x,
                                            std::uint64_t seed) {
  rehit::Rng rng(seed);
  rehit::Tensor4<double> wv(t.val(x).dims);
  for (auto& v : wv.data) v = rng.uniform(0.25, 1.0);
  return rehit::sum_all(t, rehit::mul(t, x, t.input(wv)));
}

// Shifts every parameter off its initialization so zero-init heads carry
// signal during gradient checks.
template <typename S>
void randomize_params(rehit::ParamStore<S>& store, rehit::Rng& rng, double scale = 0.25) {
  for (auto& p : store.params()) {
    for (auto& v : p->value.data) v += S(rng.uniform(-scale, scale));
  }
}

template <typename S>
std::vector<rehit::ParamTensor<S>*> all_params(rehit::ParamStore<S>& store) {
  std::vector<rehit::ParamTensor<S>*> out;
  for (auto& p : store.params()) out.push_back(p.get());
  return out;
}

// Dense softmax attention oracle: softmax(q k^T / sqrt(d)) v, one sequence.
inline std::vector<double> dense_attention_oracle(const std::vector<double>& q,
                                                  const std::vector<double>& k,
                                                  const std::vector<double>& v, int L, int d) {
  std::vector<double> out(size_t(L) * d, 0.0);
  const double scale = 1.0 / std::sqrt(double(d));
  for (int i = 0; i < L; ++i) {
    std::vector<double> logits(static_cast<size_t>(L));
    double mx = -1e300;
    for (int j = 0; j < L; ++j) {
      double acc = 0;
      for (int c = 0; c < d; ++c) acc += q[size_t(i) * d + c] * k[size_t(j) * d + c];
      logits[size_t(j)] = acc * scale;
      mx = std::max(mx, logits[size_t(j)]);
    }
    double z = 0;
    for (int j = 0; j < L; ++j) z += std::exp(logits[size_t(j)] - mx);
    for (int j = 0; j < L; ++j) {
      const double p = std::exp(logits[size_t(j)] - mx) / z;
      for (int c = 0; c < d; ++c) out[size_t(i) * d + c] += p * v[size_t(j) * d + c];
    }
  }
  return out;
}

}  // namespace testutil
