#include "rehit/retinex.hpp"

#include <algorithm>

namespace rehit {

Tensor4<double> apply_perturbation_model(const GroundTruthDecomposition& g) {
  if (!(g.r_gt.dims == g.l_gt.dims) || !(g.r_gt.dims == g.r_hat.dims) ||
      !(g.r_gt.dims == g.l_hat.dims)) {
    throw ShapeError("apply_perturbation_model: decomposition tensors must share dims");
  }
  Tensor4<double> out(g.r_gt.dims);
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const double rf = g.r_gt.data[i] + g.r_hat.data[i];
    const double lf = g.l_gt.data[i] + g.l_hat.data[i];
    if (rf < 0.0 || lf < 0.0) {
      throw NumericError("apply_perturbation_model: negative factor at element " +
                         std::to_string(i) + " (invalid synthesis config)");
    }
    out.data[i] = std::min(1.0, std::max(0.0, rf * lf));
  }
  return out;
}

template <typename S>
Tensor4<S> clamp01(const Tensor4<S>& t) {
  Tensor4<S> out = t;
  for (auto& v : out.data) v = std::min(S(1), std::max(S(0), v));
  return out;
}

template <typename S>
RetinexEstimator<S> RetinexEstimator<S>::build(ParamStore<S>& store, const std::string& prefix,
                                               int base_channels, int levels, Rng& rng) {
  RetinexEstimator<S> e;
  e.levels = levels;
  e.base_channels = base_channels;
  const int g = base_channels;
  e.in_proj = make_conv(store, prefix + ".in_proj", 4, g, 1, ConvSpec{}, rng);
  e.trunk_dw = make_conv(store, prefix + ".trunk_dw", g, g, 5, ConvSpec::padded(2), rng,
                         Init::Uniform, g);
  e.head_r = make_conv(store, prefix + ".head_r", g, 3, 1, ConvSpec{}, rng, Init::Zero, 1, true,
                       softplus_inverse_one());
  e.head_l = make_conv(store, prefix + ".head_l", g, 3, 1, ConvSpec{}, rng, Init::Zero, 1, true,
                       softplus_inverse_one());
  e.guide.push_back(make_conv(store, prefix + ".guide0", g, g, 3, ConvSpec::padded(1), rng));
  for (int lvl = 1; lvl < levels; ++lvl) {
    const int cin = g << (lvl - 1);
    e.guide.push_back(make_conv(store, prefix + ".guide" + std::to_string(lvl), cin, cin * 2, 3,
                                ConvSpec::padded(1, 2), rng));
  }
  return e;
}

template <typename S>
RetinexDecompositionIds<S> RetinexEstimator<S>::operator()(Tape<S>& t, Id<S> i_sh) const {
  if (!t.val(i_sh).all_finite()) {
    throw NumericError("RetinexEstimator: non-finite input");
  }
  t.note("retinex_estimate");
  auto mean = channel_mean(t, i_sh);
  auto cat = concat_channels<S>(t, {i_sh, mean});
  auto trunk = relu(t, trunk_dw(t, relu(t, in_proj(t, cat))));
  RetinexDecompositionIds<S> out;
  out.r_bar = softplus_floor(t, head_r(t, trunk), kReciprocalFloor);
  out.l_bar = softplus_floor(t, head_l(t, trunk), kReciprocalFloor);
  auto f = guide[0](t, trunk);
  out.guidance.push_back(f);
  for (int lvl = 1; lvl < levels; ++lvl) {
    f = guide[size_t(lvl)](t, relu(t, f));
    out.guidance.push_back(f);
  }
  return out;
}

template <typename S>
std::pair<Id<S>, Id<S>> compose_branches(Tape<S>& t, Id<S> i_sh, const RetinexDecompositionIds<S>& d) {
  return {mul(t, i_sh, d.l_bar), mul(t, i_sh, d.r_bar)};
}

template <typename S>
Id<S> recombine(Tape<S>& t, Id<S> r_out, Id<S> l_out) {
  return mul(t, r_out, l_out);
}

template Tensor4<float> clamp01<float>(const Tensor4<float>&);
template Tensor4<double> clamp01<double>(const Tensor4<double>&);
template struct RetinexEstimator<float>;
template struct RetinexEstimator<double>;
template std::pair<Id<float>, Id<float>> compose_branches<float>(Tape<float>&, Id<float>,
                                                                 const RetinexDecompositionIds<float>&);
template std::pair<Id<double>, Id<double>> compose_branches<double>(
    Tape<double>&, Id<double>, const RetinexDecompositionIds<double>&);
template Id<float> recombine<float>(Tape<float>&, Id<float>, Id<float>);
template Id<double> recombine<double>(Tape<double>&, Id<double>, Id<double>);

}  // namespace rehit
