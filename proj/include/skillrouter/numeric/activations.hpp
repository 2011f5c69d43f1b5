#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "skillrouter/numeric/tensor.hpp"

namespace skillrouter::numeric {

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

inline double selu_derivative(double x) {
  return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

Tensor selu(const Tensor& x);

// Max-subtracted softmax. Throws ShapeError on empty input.
std::vector<double> softmax(std::span<const double> v);
Tensor softmax(const Tensor& v);

}  // namespace skillrouter::numeric
