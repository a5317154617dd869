#include "rdcm/optim.hpp"

#include <cmath>

namespace rdcm {

void adam_step(ParamSet& params, const AdamOptions& opts) {
  const std::uint64_t t = params.step() + 1;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(t));
  for (auto& e : params.entries()) {
    auto p = e.value.values();
    auto g = e.grad.values();
    auto m = e.first_moment.values();
    auto v = e.second_moment.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + opts.weight_decay * p[i];
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * gi;
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
    }
  }
  params.set_step(t);
}

}  // namespace rdcm
