#include "mkt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mkt::tg {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckResult check_gradients(std::span<Parameter* const> params, const std::function<Var(Tape&)>& loss,
                                double eps, std::size_t max_per_param, double floor) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  auto eval = [&] {
    Tape t;
    return loss(t).value().item();
  };

  GradCheckResult r;
  for (Parameter* p : params) {
    const Tensor analytic = p->grad.same_shape(p->value) ? p->grad : Tensor(p->value.rows(), p->value.cols());
    const std::size_t n = p->value.size();
    const std::size_t stride = n > max_per_param ? (n + max_per_param - 1) / max_per_param : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = eval();
      p->value[i] = saved - eps;
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double rel = relative_error(analytic[i], numeric, floor);
      r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic[i] - numeric));
      if (rel > r.max_rel_error || r.worst.empty()) {
        if (rel >= r.max_rel_error) r.worst = p->name + "[" + std::to_string(i) + "]";
        r.max_rel_error = std::max(r.max_rel_error, rel);
      }
      ++r.checked;
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return r;
}

}  // namespace mkt::tg
