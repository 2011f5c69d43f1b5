#include "skillrouter/numeric/activations.hpp"

#include <algorithm>

namespace skillrouter::numeric {

Tensor selu(const Tensor& x) {
  x.check_finite("selu input");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = selu(x[i]);
  return out;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax of an empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& o : out) o /= total;
  return out;
}

Tensor softmax(const Tensor& v) {
  v.check_finite("softmax input");
  return Tensor(v.shape(), softmax(v.data()));
}

}  // namespace skillrouter::numeric
