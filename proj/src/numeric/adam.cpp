#include "skillrouter/numeric/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace skillrouter::numeric {

void Adam::step(ParamStore& store, long t) {
  if (t < 1) throw std::invalid_argument("adam step counter must be >= 1");
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t));
  for (auto& [path, p] : store) {
    if (!p.trainable) {
      p.grad.fill(0.0);
      continue;
    }
    auto it = moments_.find(path);
    if (it == moments_.end()) {
      it = moments_.emplace(path, Moments{Tensor(p.value.shape()), Tensor(p.value.shape())})
               .first;
    }
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    p.grad.fill(0.0);
  }
}

}  // namespace skillrouter::numeric
