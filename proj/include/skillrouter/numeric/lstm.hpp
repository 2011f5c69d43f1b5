#pragma once

#include <cstddef>
#include <string>

#include "skillrouter/numeric/param_store.hpp"
#include "skillrouter/numeric/tensor.hpp"

namespace skillrouter::numeric {

// Gate blocks are stacked in the order input, forget, cell candidate, output.
enum LstmGate : std::size_t { kInputGate = 0, kForgetGate = 1, kCellGate = 2, kOutputGate = 3 };

struct LstmParams {
  Tensor wx;  // [4h x d]
  Tensor wh;  // [4h x h]
  Tensor b;   // [4h]

  std::size_t input_dim() const { return wx.cols(); }
  std::size_t hidden_dim() const { return wh.cols(); }

  // uniform(-0.1, 0.1) everywhere except the forget-gate bias, which is 1.
  static LstmParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
  static LstmParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  void validate() const;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                    const LstmParams& p);

// Stores wx/wh/b under `prefix` in the param store.
void add_lstm(ParamStore& store, const std::string& prefix, LstmParams params);
LstmParams lstm_from_store(const ParamStore& store, const std::string& prefix);

}  // namespace skillrouter::numeric
