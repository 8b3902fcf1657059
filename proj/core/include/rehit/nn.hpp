#pragma once

#include <cmath>
#include <string>

#include "rehit/ops.hpp"
#include "rehit/tape.hpp"

namespace rehit {

enum class Activation { ReLU, GELU };

template <typename S>
Id<S> activate(Tape<S>& t, Id<S> x, Activation a) {
  return a == Activation::ReLU ? relu(t, x) : gelu(t, x);
}

enum class Init { Uniform, Zero };

// Parameter-owning convolution layer. Weights live in a ParamStore; the
// layer itself is a cheap handle safe to copy.
template <typename S>
struct Conv2dLayer {
  ParamTensor<S>* w = nullptr;
  ParamTensor<S>* b = nullptr;  // optional
  ConvSpec spec;
  int groups = 1;

  Id<S> operator()(Tape<S>& t, Id<S> x) const {
    const auto bid = b ? t.param(*b) : Tape<S>::kNoId;
    return conv2d(t, x, t.param(*w), bid, spec, groups);
  }
};

template <typename S>
Conv2dLayer<S> make_conv(ParamStore<S>& store, const std::string& name, int c_in, int c_out, int k,
                         ConvSpec spec, Rng& rng, Init init = Init::Uniform, int groups = 1,
                         bool bias = true, double bias_value = 0.0) {
  Conv2dLayer<S> layer;
  layer.spec = spec;
  layer.groups = groups;
  layer.w = &store.create(name + ".w", Dims{c_out, c_in / groups, k, k});
  if (init == Init::Uniform) {
    const double bound = 1.0 / std::sqrt(double(c_in / groups) * k * k);
    for (auto& v : layer.w->value.data) v = S(rng.uniform(-bound, bound));
  }
  if (bias) {
    layer.b = &store.create(name + ".b", Dims{1, c_out, 1, 1});
    if (bias_value != 0.0) {
      for (auto& v : layer.b->value.data) v = S(bias_value);
    }
  }
  return layer;
}

template <typename S>
struct LayerNorm2d {
  ParamTensor<S>* gamma = nullptr;
  ParamTensor<S>* beta = nullptr;
  double eps = 1e-6;

  Id<S> operator()(Tape<S>& t, Id<S> x) const {
    return layer_norm(t, x, t.param(*gamma), t.param(*beta), eps);
  }
};

template <typename S>
LayerNorm2d<S> make_layer_norm(ParamStore<S>& store, const std::string& name, int c,
                               double eps = 1e-6) {
  LayerNorm2d<S> ln;
  ln.eps = eps;
  ln.gamma = &store.create(name + ".gamma", Dims{1, c, 1, 1});
  for (auto& v : ln.gamma->value.data) v = S(1);
  ln.beta = &store.create(name + ".beta", Dims{1, c, 1, 1});
  return ln;
}

}  // namespace rehit
