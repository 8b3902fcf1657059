#include "rehit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace rehit {

namespace {

double eval_loss(const std::function<Tape<double>::Id(Tape<double>&)>& build_loss) {
  Tape<double> tape(/*grad_enabled=*/false);
  const auto id = build_loss(tape);
  const double v = tape.val(id).data[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tape<double>::Id(Tape<double>&)>& build_loss,
                           const std::vector<ParamTensor<double>*>& params,
                           const GradCheckOptions& opts) {
  if (opts.eps < 1e-6 || opts.eps > 1e-4) {
    throw Error("grad_check: eps must lie in [1e-6, 1e-4]");
  }
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    const auto id = build_loss(tape);
    if (!std::isfinite(tape.val(id).data[0])) throw NumericError("grad_check: non-finite loss");
    tape.backward(id);
    tape.accumulate_param_grads();
  }

  GradCheckResult res;
  Rng rng(opts.sample_seed);
  for (auto* p : params) {
    const std::int64_t n = p->numel();
    std::vector<std::int64_t> picks;
    if (opts.max_elems_per_param > 0 && n > opts.max_elems_per_param) {
      Rng sub = rng.fork(std::hash<std::string>{}(p->name));
      std::vector<std::int64_t> all(static_cast<size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) all[size_t(i)] = i;
      for (int k = 0; k < opts.max_elems_per_param; ++k) {
        const std::int64_t j = k + sub.uniform_int(0, n - 1 - k);
        std::swap(all[size_t(k)], all[size_t(j)]);
        picks.push_back(all[size_t(k)]);
      }
    } else {
      picks.resize(size_t(n));
      for (std::int64_t i = 0; i < n; ++i) picks[size_t(i)] = i;
    }
    for (std::int64_t i : picks) {
      const double saved = p->value.data[size_t(i)];
      auto central_diff = [&](double eps) {
        p->value.data[size_t(i)] = saved + eps;
        const double lp = eval_loss(build_loss);
        p->value.data[size_t(i)] = saved - eps;
        const double lm = eval_loss(build_loss);
        p->value.data[size_t(i)] = saved;
        return (lp - lm) / (2.0 * eps);
      };
      const double an = p->grad.data[size_t(i)];
      auto rel_of = [an](double cd) {
        return std::fabs(an - cd) / std::max({std::fabs(an), std::fabs(cd), 1e-8});
      };
      double cd = central_diff(opts.eps);
      double rel = rel_of(cd);
      // An element that fails at the base step gets re-probed at smaller
      // steps: a kink inside the stencil clears once eps drops below the
      // distance to it, while a wrong gradient rule fails at every step.
      for (int div = 2; rel > opts.kink_retry_threshold && div <= 8; div *= 2) {
        const double cd2 = central_diff(opts.eps / div);
        const double rel2 = rel_of(cd2);
        if (rel2 < rel) {
          rel = rel2;
          cd = cd2;
        }
      }
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p->name;
        res.worst_index = i;
        res.worst_analytic = an;
        res.worst_numeric = cd;
      }
    }
  }
  return res;
}

}  // namespace rehit
