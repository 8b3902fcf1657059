#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rehit/ops.hpp"
#include "rehit/tape.hpp"

namespace rehit {

struct GradCheckOptions {
  double eps = 1e-4;            // central-difference step, in [1e-6, 1e-4]
  int max_elems_per_param = 0;  // 0 = exhaustive; otherwise sampled per tensor
  std::uint64_t sample_seed = 0x7265686974ull;
  // Elements failing at the base step are re-probed at eps/2..eps/8; a ReLU
  // kink inside the stencil clears, a wrong gradient rule does not.
  double kink_retry_threshold = 1e-4;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check, 64-bit only: builds the loss once with gradients
// for the analytic side, then re-evaluates forward at +/- eps per sampled
// parameter element. Returns the max over checked elements of
// |analytic - cd| / max(|analytic|, |cd|, 1e-8).
// Analytic gradients are left in each ParamTensor::grad.
GradCheckResult grad_check(const std::function<Tape<double>::Id(Tape<double>&)>& build_loss,
                           const std::vector<ParamTensor<double>*>& params,
                           const GradCheckOptions& opts = {});

}  // namespace rehit
