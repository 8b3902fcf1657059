#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rehit/gradcheck.hpp"
#include "rehit/retinex.hpp"
#include "test_util.hpp"

using namespace rehit;
using testutil::all_params;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

// A hand-built synthetic decomposition with controlled ranges.
GroundTruthDecomposition make_decomp(Rng& rng, int h = 12, int w = 12, double r_amp = 0.0,
                                     double shadow = 0.0) {
  const Dims d{1, 3, h, w};
  GroundTruthDecomposition g;
  g.r_gt = random_tensor<double>(d, rng, 0.05, 1.0);
  g.l_gt = random_tensor<double>(d, rng, 0.3, 1.0);
  g.r_hat = Tensor4<double>(d);
  g.l_hat = Tensor4<double>(d);
  if (r_amp > 0) {
    for (auto& v : g.r_hat.data) v = rng.uniform(-r_amp, r_amp);
  }
  if (shadow > 0) {
    // Darken the left half multiplicatively.
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x) {
          g.l_hat.at(0, c, y, x) = -shadow * g.l_gt.at(0, c, y, x);
        }
  }
  return g;
}

}  // namespace

TEST_CASE("apply_perturbation_model: zero perturbations give the exact product") {
  Rng rng(1);
  auto g = make_decomp(rng);
  auto i_sh = apply_perturbation_model(g);
  for (std::int64_t i = 0; i < i_sh.numel(); ++i) {
    CHECK(i_sh.data[i] == g.r_gt.data[i] * g.l_gt.data[i]);
  }
}

TEST_CASE("apply_perturbation_model: multiplicative shadow darkens by the exact factor") {
  Rng rng(2);
  auto g = make_decomp(rng, 12, 12, 0.0, 0.5);
  auto i_sh = apply_perturbation_model(g);
  auto clean = apply_perturbation_model(GroundTruthDecomposition{g.r_gt, g.l_gt,
                                                                 Tensor4<double>(g.r_gt.dims),
                                                                 Tensor4<double>(g.r_gt.dims)});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) {
        const double want = x < 6 ? 0.5 * clean.at(0, c, y, x) : clean.at(0, c, y, x);
        CHECK(i_sh.at(0, c, y, x) == doctest::Approx(want).epsilon(1e-12));
      }
}

TEST_CASE("apply_perturbation_model: matches the four-term expansion") {
  Rng rng(3);
  auto g = make_decomp(rng, 10, 10, 0.04, 0.4);
  auto i_sh = apply_perturbation_model(g);
  for (std::int64_t i = 0; i < i_sh.numel(); ++i) {
    const double expanded = g.r_gt.data[i] * g.l_gt.data[i] + g.r_gt.data[i] * g.l_hat.data[i] +
                            g.r_hat.data[i] * g.l_gt.data[i] + g.r_hat.data[i] * g.l_hat.data[i];
    CHECK(std::fabs(i_sh.data[i] - std::min(1.0, std::max(0.0, expanded))) < 1e-12);
  }
}

TEST_CASE("apply_perturbation_model: negative factor rejected") {
  Rng rng(4);
  auto g = make_decomp(rng);
  g.l_hat.data[17] = -2.0;  // drives l_gt + l_hat negative
  CHECK_THROWS_AS(apply_perturbation_model(g), NumericError);
}

TEST_CASE("estimate: fresh heads give identically-1 reciprocal maps") {
  ParamStore<double> store;
  Rng rng(5);
  auto est = RetinexEstimator<double>::build(store, "est", 8, 3, rng);
  auto i_sh = random_tensor<double>({1, 3, 32, 32}, rng, 0.0, 1.0);
  Tape<double> t(false);
  auto out = est(t, t.input(i_sh));
  for (double v : t.val(out.r_bar).data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : t.val(out.l_bar).data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("guidance shape law") {
    REQUIRE(out.guidance.size() == 3);
    CHECK(t.val(out.guidance[0]).dims == Dims{1, 8, 32, 32});
    CHECK(t.val(out.guidance[1]).dims == Dims{1, 16, 16, 16});
    CHECK(t.val(out.guidance[2]).dims == Dims{1, 32, 8, 8});
  }
}

TEST_CASE("estimate: strictly positive outputs and determinism") {
  ParamStore<double> store;
  Rng rng(6);
  auto est = RetinexEstimator<double>::build(store, "est", 8, 3, rng);
  testutil::randomize_params(store, rng, 0.5);
  auto i_sh = random_tensor<double>({2, 3, 16, 16}, rng, 0.0, 1.0);
  auto run = [&]() {
    Tape<double> t(false);
    auto out = est(t, t.input(i_sh));
    return std::pair{t.val(out.r_bar), t.val(out.l_bar)};
  };
  auto [r1, l1] = run();
  auto [r2, l2] = run();
  CHECK(r1.data == r2.data);  // byte-identical replay
  CHECK(l1.data == l2.data);
  for (double v : r1.data) CHECK(v >= kReciprocalFloor);
  for (double v : l1.data) CHECK(v >= kReciprocalFloor);

  Tensor4<double> bad = i_sh;
  bad.data[0] = std::nan("");
  Tape<double> t;
  CHECK_THROWS_AS(est(t, t.input(bad)), NumericError);
}

TEST_CASE("compose_branches: elementwise products per Eq. algebra") {
  Tape<double> t(false);
  {
    RetinexDecompositionIds<double> d;
    d.l_bar = t.input(Tensor4<double>(Dims{1, 3, 4, 4}, 2.0));
    d.r_bar = t.input(Tensor4<double>(Dims{1, 3, 4, 4}, 1.0));
    auto i_sh = t.input(Tensor4<double>(Dims{1, 3, 4, 4}, 0.5));
    auto [rp, lp] = compose_branches(t, i_sh, d);
    for (double v : t.val(rp).data) CHECK(v == 1.0);
    for (double v : t.val(lp).data) CHECK(v == 0.5);
  }
  {
    Rng rng(7);
    auto x = random_tensor<double>({1, 3, 5, 5}, rng, 0.0, 1.0);
    RetinexDecompositionIds<double> d;
    d.l_bar = t.input(Tensor4<double>(Dims{1, 3, 5, 5}, 1.0));
    d.r_bar = t.input(Tensor4<double>(Dims{1, 3, 5, 5}, 1.0));
    auto i_sh = t.input(x);
    auto [rp, lp] = compose_branches(t, i_sh, d);
    CHECK(max_abs_diff(t.val(rp), x) == 0.0);
    CHECK(max_abs_diff(t.val(lp), x) == 0.0);
  }
}

TEST_CASE("compose_branches: exact oracle decomposition recovers R_GT") {
  Rng rng(8);
  auto g = make_decomp(rng);
  auto i_sh = apply_perturbation_model(g);  // zero perturbations
  Tape<double> t(false);
  RetinexDecompositionIds<double> d;
  Tensor4<double> l_inv(g.l_gt.dims), r_inv(g.r_gt.dims);
  for (std::int64_t i = 0; i < l_inv.numel(); ++i) l_inv.data[i] = 1.0 / g.l_gt.data[i];
  for (std::int64_t i = 0; i < r_inv.numel(); ++i) r_inv.data[i] = 1.0 / g.r_gt.data[i];
  d.l_bar = t.input(l_inv);
  d.r_bar = t.input(r_inv);
  auto [rp, lp] = compose_branches(t, t.input(i_sh), d);
  CHECK(max_abs_diff(t.val(rp), g.r_gt) < 1e-6);
  CHECK(max_abs_diff(t.val(lp), g.l_gt) < 1e-6);

  SUBCASE("zero residual networks reconstruct I_Sh within 1e-6") {
    auto i_out = recombine(t, rp, lp);
    CHECK(max_abs_diff(t.val(i_out), i_sh) < 1e-6);
  }
}

TEST_CASE("recombine: identity factor, annihilation, elementwise oracle") {
  Tape<double> t(false);
  Rng rng(9);
  auto r = random_tensor<double>({1, 3, 6, 6}, rng, 0.0, 1.0);
  {
    auto ones = t.input(Tensor4<double>(Dims{1, 3, 6, 6}, 1.0));
    auto out = recombine(t, t.input(r), ones);
    CHECK(max_abs_diff(t.val(out), r) == 0.0);
  }
  {
    Tensor4<double> rz = r;
    rz.data[5] = 0.0;
    auto out = recombine(t, t.input(rz), t.input(random_tensor<double>({1, 3, 6, 6}, rng)));
    CHECK(t.val(out).data[5] == 0.0);
  }
  {
    auto l = random_tensor<double>({1, 3, 6, 6}, rng, 0.0, 1.0);
    auto out = t.val(recombine(t, t.input(r), t.input(l)));
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data[i] == r.data[i] * l.data[i]);
  }
  {
    auto mismatch = t.input(Tensor4<double>(Dims{1, 3, 4, 4}, 1.0));
    CHECK_THROWS_AS(recombine(t, t.input(r), mismatch), ShapeError);
  }
}

TEST_CASE("clamp01 behaves as emission-only clamp") {
  Tensor4<double> x(Dims{1, 1, 1, 4});
  x.data = {-0.5, 0.25, 0.75, 1.5};
  auto y = clamp01(x);
  CHECK(y.data == std::vector<double>{0.0, 0.25, 0.75, 1.0});
}

TEST_CASE("grad: estimator + branch composition differentiable end-to-end") {
  ParamStore<double> store;
  Rng rng(10);
  auto est = RetinexEstimator<double>::build(store, "est", 6, 3, rng);
  testutil::randomize_params(store, rng, 0.2);
  auto i_sh = random_tensor<double>({1, 3, 8, 8}, rng, 0.05, 0.95);
  auto params = all_params(store);
  auto build = [&](Tape<double>& t) {
    auto x = t.input(i_sh);
    auto d = est(t, x);
    auto [rp, lp] = compose_branches(t, x, d);
    auto a = testutil::weighted_sum(t, rp, 31);
    auto b = testutil::weighted_sum(t, lp, 32);
    auto c = testutil::weighted_sum(t, d.guidance[2], 33);
    return add(t, add(t, a, b), c);
  };
  auto res = grad_check(build, params, {});
  CHECK(res.max_rel_error < 1e-4);
}
