#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "mkt/tape.hpp"

namespace mkt::tg {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;  // "<param>[<index>]" of the largest relative error
  std::size_t checked = 0;
};

// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-4);

// Compares the gradients backward() leaves in `params` with central finite
// differences. `loss` must rebuild the scalar loss on the tape it is given,
// binding the parameters with Tape::param. At most `max_per_param` entries
// of each parameter are probed, evenly strided.
GradCheckResult check_gradients(std::span<Parameter* const> params, const std::function<Var(Tape&)>& loss,
                                double eps = 1e-5, std::size_t max_per_param = static_cast<std::size_t>(-1),
                                double floor = 1e-4);

}  // namespace mkt::tg
