#include "skillrouter/numeric/lstm.hpp"

#include <cmath>

#include "skillrouter/numeric/activations.hpp"
#include "skillrouter/numeric/kernels.hpp"

namespace skillrouter::numeric {

LstmParams LstmParams::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  LstmParams p = zeros(input_dim, hidden_dim);
  init_uniform(p.wx, rng, 0.1);
  init_uniform(p.wh, rng, 0.1);
  init_uniform(p.b, rng, 0.1);
  for (std::size_t j = 0; j < hidden_dim; ++j) p.b[kForgetGate * hidden_dim + j] = 1.0;
  return p;
}

LstmParams LstmParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  return {Tensor::matrix(4 * hidden_dim, input_dim),
          Tensor::matrix(4 * hidden_dim, hidden_dim), Tensor({4 * hidden_dim})};
}

void LstmParams::validate() const {
  const std::size_t h = hidden_dim();
  if (wx.rank() != 2 || wh.rank() != 2 || wx.rows() != 4 * h || wh.rows() != 4 * h ||
      b.size() != 4 * h) {
    throw ShapeError("inconsistent LSTM parameter shapes: wx " + wx.shape_string() +
                     ", wh " + wh.shape_string() + ", b " + b.shape_string());
  }
}

LstmState lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                    const LstmParams& p) {
  p.validate();
  const std::size_t d = p.input_dim();
  const std::size_t h = p.hidden_dim();
  if (x.size() != d || h_prev.size() != h || c_prev.size() != h) {
    throw ShapeError("lstm_cell: expected x[" + std::to_string(d) + "], h/c[" +
                     std::to_string(h) + "], got " + x.shape_string() + ", " +
                     h_prev.shape_string() + ", " + c_prev.shape_string());
  }
  x.check_finite("lstm_cell x");
  h_prev.check_finite("lstm_cell h_prev");
  c_prev.check_finite("lstm_cell c_prev");

  std::vector<double> gates(p.b.data().begin(), p.b.data().end());
  for (std::size_t r = 0; r < 4 * h; ++r) {
    gates[r] += kernels::dot(p.wx.row(r), x.ptr(), d) + kernels::dot(p.wh.row(r), h_prev.ptr(), h);
  }
  LstmState out{Tensor({h}), Tensor({h})};
  for (std::size_t j = 0; j < h; ++j) {
    const double i = sigmoid(gates[kInputGate * h + j]);
    const double f = sigmoid(gates[kForgetGate * h + j]);
    const double g = std::tanh(gates[kCellGate * h + j]);
    const double o = sigmoid(gates[kOutputGate * h + j]);
    out.c[j] = f * c_prev[j] + i * g;
    out.h[j] = o * std::tanh(out.c[j]);
  }
  return out;
}

void add_lstm(ParamStore& store, const std::string& prefix, LstmParams params) {
  params.validate();
  store.add(prefix + "/b", std::move(params.b));
  store.add(prefix + "/wh", std::move(params.wh));
  store.add(prefix + "/wx", std::move(params.wx));
}

LstmParams lstm_from_store(const ParamStore& store, const std::string& prefix) {
  LstmParams p{store.at(prefix + "/wx").value, store.at(prefix + "/wh").value,
               store.at(prefix + "/b").value};
  p.validate();
  return p;
}

}  // namespace skillrouter::numeric
