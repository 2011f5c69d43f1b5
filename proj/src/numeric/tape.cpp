#include "skillrouter/numeric/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "skillrouter/numeric/activations.hpp"
#include "skillrouter/numeric/kernels.hpp"

namespace skillrouter::numeric {

namespace {

Tensor transposed(const Tensor& m) {
  Tensor out({m.cols(), m.rows()});
  kernels::transpose(m.rows(), m.cols(), m.ptr(), m.cols(), out.ptr(), m.rows());
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

double negative_weight(const MultitaskTarget& t, std::size_t j) {
  return t.negative_weights.empty() ? 1.0 / static_cast<double>(t.negative_pairs.size())
                                    : t.negative_weights[j];
}

}  // namespace

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, bool params_need_grad,
               std::function<void(Tape&, Node&)> backprop) {
  const std::size_t id = nodes_.size();
  bool requires_grad = params_need_grad;
  for (std::size_t in : inputs) {
    if (in >= id) throw TapeError("graph cycle: node input refers forward");
    requires_grad = requires_grad || nodes_[in].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{id};
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw TapeError("variable does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw TapeError("variable does not belong to this tape");
  return nodes_[v.id];
}

Tensor& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
const Tensor& Tape::grad(Var v) const { return node(v).grad; }

Var Tape::constant(Tensor value) { return push(std::move(value), {}, false, nullptr); }

Var Tape::gather(ParamRef table, std::span<const int> rows) {
  const Tensor& t = *table.value;
  const std::size_t cols = t.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && static_cast<std::size_t>(rows[i]) < t.rows(),
            "gather: row index out of range");
    std::copy_n(t.row(rows[i]), cols, out.row(i));
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return push(std::move(out), {}, table.grad != nullptr,
              [table, idx = std::move(idx), cols](Tape&, Node& self) {
                for (std::size_t i = 0; i < idx.size(); ++i) {
                  kernels::axpy(1.0, self.grad.row(i), table.grad->row(idx[i]), cols);
                }
              });
}

Var Tape::gather(Var x, std::span<const int> rows) {
  const Tensor& t = value(x);
  const std::size_t cols = t.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && static_cast<std::size_t>(rows[i]) < t.rows(),
            "gather: row index out of range");
    std::copy_n(t.row(rows[i]), cols, out.row(i));
  }
  std::vector<int> idx(rows.begin(), rows.end());
  const std::size_t in = x.id;
  return push(std::move(out), {in}, false,
              [in, idx = std::move(idx), cols](Tape& tape, Node& self) {
                Tensor& g = tape.grad_of(in);
                for (std::size_t i = 0; i < idx.size(); ++i) {
                  kernels::axpy(1.0, self.grad.row(i), g.row(idx[i]), cols);
                }
              });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t n = value(parts[0]).rows();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    require(t.rows() == n, "concat_cols: row count mismatch");
    widths.push_back(t.cols());
    ids.push_back(p.id);
    total += t.cols();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = value(parts[k]);
    for (std::size_t r = 0; r < n; ++r) std::copy_n(t.row(r), widths[k], out.row(r) + offset);
    offset += widths[k];
  }
  return push(std::move(out), ids, false, [ids, widths, n](Tape& tape, Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tape.needs(ids[k])) {
        Tensor& g = tape.grad_of(ids[k]);
        for (std::size_t r = 0; r < n; ++r) {
          kernels::axpy(1.0, self.grad.row(r) + off, g.row(r), widths[k]);
        }
      }
      off += widths[k];
    }
  });
}

Var Tape::segment_sum(Var x, std::span<const int> lengths) {
  const Tensor& t = value(x);
  const std::size_t cols = t.cols();
  std::size_t total = 0;
  for (int len : lengths) {
    require(len >= 0, "segment_sum: negative length");
    total += static_cast<std::size_t>(len);
  }
  require(total == t.rows(), "segment_sum: lengths do not cover input rows");
  Tensor out({lengths.size(), cols});
  std::size_t r = 0;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    for (int k = 0; k < lengths[s]; ++k, ++r) kernels::axpy(1.0, t.row(r), out.row(s), cols);
  }
  std::vector<int> lens(lengths.begin(), lengths.end());
  const std::size_t in = x.id;
  return push(std::move(out), {in}, false,
              [in, lens = std::move(lens), cols](Tape& tape, Node& self) {
                Tensor& g = tape.grad_of(in);
                std::size_t row = 0;
                for (std::size_t s = 0; s < lens.size(); ++s) {
                  for (int k = 0; k < lens[s]; ++k, ++row) {
                    kernels::axpy(1.0, self.grad.row(s), g.row(row), cols);
                  }
                }
              });
}

Var Tape::affine(Var x, ParamRef w, const ParamRef* b) {
  const Tensor& xt = value(x);
  const Tensor& wt = *w.value;
  const std::size_t n = xt.rows();
  const std::size_t d = xt.cols();
  const std::size_t o = wt.rows();
  require(wt.cols() == d, "affine: weight " + wt.shape_string() + " vs input " +
                              xt.shape_string());
  Tensor out({n, o});
  if (b != nullptr) {
    require(b->value->size() == o, "affine: bias size mismatch");
    for (std::size_t r = 0; r < n; ++r) std::copy_n(b->value->ptr(), o, out.row(r));
  }
  const Tensor w_t = transposed(wt);
  kernels::gemm(n, o, d, xt.ptr(), d, w_t.ptr(), o, out.ptr(), o);
  ParamRef bias = b != nullptr ? *b : ParamRef{};
  const std::size_t in = x.id;
  const bool params_need = w.grad != nullptr || bias.grad != nullptr;
  return push(std::move(out), {in}, params_need,
              [in, w, bias, n, d, o](Tape& tape, Node& self) {
                const Tensor& g = self.grad;
                if (tape.needs(in)) {
                  Tensor& gx = tape.grad_of(in);
                  kernels::gemm(n, d, o, g.ptr(), o, w.value->ptr(), d, gx.ptr(), d);
                }
                if (w.grad != nullptr) {
                  const Tensor g_t = transposed(g);
                  kernels::gemm(o, d, n, g_t.ptr(), n, tape.value(Var{in}).ptr(), d,
                                w.grad->ptr(), d);
                }
                if (bias.grad != nullptr) {
                  for (std::size_t r = 0; r < n; ++r) {
                    kernels::axpy(1.0, g.row(r), bias.grad->ptr(), o);
                  }
                }
              });
}

Var Tape::selu(Var x) {
  const Tensor& t = value(x);
  t.check_finite("selu input");
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = numeric::selu(t[i]);
  const std::size_t in = x.id;
  return push(std::move(out), {in}, false, [in](Tape& tape, Node& self) {
    Tensor& g = tape.grad_of(in);
    const Tensor& input = tape.nodes_[in].value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * selu_derivative(input[i]);
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.size() == tb.size(), "add: size mismatch");
  Tensor out = ta;
  out.add_inplace(tb);
  const std::size_t ia = a.id, ib = b.id;
  return push(std::move(out), {ia, ib}, false, [ia, ib](Tape& tape, Node& self) {
    if (tape.needs(ia)) tape.grad_of(ia).add_inplace(self.grad);
    if (tape.needs(ib)) tape.grad_of(ib).add_inplace(self.grad);
  });
}

Var Tape::scale(Var x, double factor) {
  Tensor out = value(x);
  for (double& v : out.data()) v *= factor;
  const std::size_t in = x.id;
  return push(std::move(out), {in}, false, [in, factor](Tape& tape, Node& self) {
    kernels::axpy(factor, self.grad.ptr(), tape.grad_of(in).ptr(), self.grad.size());
  });
}

Var Tape::sum(Var x) {
  const Tensor& t = value(x);
  double total = 0.0;
  for (double v : t.data()) total += v;
  const std::size_t in = x.id;
  return push(Tensor({1}, std::vector<double>{total}), {in}, false,
              [in](Tape& tape, Node& self) {
                Tensor& g = tape.grad_of(in);
                for (double& v : g.data()) v += self.grad[0];
              });
}

Var Tape::weighted_sum(Var x, const Tensor& weights) {
  const Tensor& t = value(x);
  require(weights.size() == t.size(), "weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) total += weights[i] * t[i];
  const std::size_t in = x.id;
  return push(Tensor({1}, std::vector<double>{total}), {in}, false,
              [in, weights](Tape& tape, Node& self) {
                kernels::axpy(self.grad[0], weights.ptr(), tape.grad_of(in).ptr(),
                              weights.size());
              });
}

Var Tape::lstm_sequence(Var x, const LstmRefs& p, std::span<const int> lengths,
                        bool reverse) {
  const Tensor& xt = value(x);
  const Tensor& wx = *p.wx.value;
  const Tensor& wh = *p.wh.value;
  const Tensor& bias = *p.b.value;
  const std::size_t d = xt.cols();
  const std::size_t h = wh.cols();
  const std::size_t g4 = 4 * h;
  require(wx.rows() == g4 && wx.cols() == d && wh.rows() == g4 && bias.size() == g4,
          "lstm_sequence: parameter shapes inconsistent with input width " +
              std::to_string(d));
  xt.check_finite("lstm_sequence input");

  struct Saved {
    std::vector<std::size_t> offsets;
    std::vector<int> lengths;
    std::vector<std::size_t> order;  // sequences by descending length
    std::size_t max_len = 0;
    bool reverse = false;
    Tensor acts;    // [T x 4h] gate activations
    Tensor cells;   // [T x h]
    Tensor tanh_c;  // [T x h]
    Tensor h_prev;  // [T x h] recurrent input used at each row
    std::vector<long> prev_row;  // -1 for the first step of a sequence
    std::size_t row(std::size_t s, std::size_t t) const {
      return offsets[s] + (reverse ? static_cast<std::size_t>(lengths[s]) - 1 - t : t);
    }
  };
  auto saved = std::make_shared<Saved>();
  saved->reverse = reverse;
  saved->lengths.assign(lengths.begin(), lengths.end());
  std::size_t total = 0;
  for (int len : lengths) {
    require(len >= 1, "lstm_sequence: every sequence needs at least one row");
    saved->offsets.push_back(total);
    total += static_cast<std::size_t>(len);
    saved->max_len = std::max<std::size_t>(saved->max_len, static_cast<std::size_t>(len));
  }
  require(total == xt.rows(), "lstm_sequence: lengths do not cover input rows");
  saved->order.resize(lengths.size());
  std::iota(saved->order.begin(), saved->order.end(), std::size_t{0});
  std::stable_sort(saved->order.begin(), saved->order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });

  const std::size_t T = total;
  Tensor pre({T, g4});
  for (std::size_t r = 0; r < T; ++r) std::copy_n(bias.ptr(), g4, pre.row(r));
  {
    const Tensor wx_t = transposed(wx);
    kernels::gemm(T, g4, d, xt.ptr(), d, wx_t.ptr(), g4, pre.ptr(), g4);
  }
  const Tensor wh_t = transposed(wh);
  saved->acts = Tensor({T, g4});
  saved->cells = Tensor({T, h});
  saved->tanh_c = Tensor({T, h});
  saved->h_prev = Tensor({T, h});
  saved->prev_row.assign(T, -1);
  Tensor out({T, h});

  std::vector<double> hbuf(lengths.size() * h);
  std::vector<double> gbuf(lengths.size() * g4);
  std::size_t active = lengths.size();
  for (std::size_t t = 0; t < saved->max_len; ++t) {
    while (active > 0 &&
           static_cast<std::size_t>(lengths[saved->order[active - 1]]) <= t) {
      --active;
    }
    for (std::size_t b = 0; b < active; ++b) {
      const std::size_t s = saved->order[b];
      const std::size_t r = saved->row(s, t);
      if (t > 0) {
        const std::size_t pr = saved->row(s, t - 1);
        saved->prev_row[r] = static_cast<long>(pr);
        std::copy_n(out.row(pr), h, saved->h_prev.row(r));
      }
      std::copy_n(saved->h_prev.row(r), h, hbuf.data() + b * h);
      std::copy_n(pre.row(r), g4, gbuf.data() + b * g4);
    }
    if (t > 0) kernels::gemm(active, g4, h, hbuf.data(), h, wh_t.ptr(), g4, gbuf.data(), g4);
    for (std::size_t b = 0; b < active; ++b) {
      const std::size_t s = saved->order[b];
      const std::size_t r = saved->row(s, t);
      const double* gates = gbuf.data() + b * g4;
      double* act = saved->acts.row(r);
      const double* c_prev = t > 0 ? saved->cells.row(saved->row(s, t - 1)) : nullptr;
      for (std::size_t j = 0; j < h; ++j) {
        const double ig = sigmoid(gates[j]);
        const double fg = sigmoid(gates[h + j]);
        const double cg = std::tanh(gates[2 * h + j]);
        const double og = sigmoid(gates[3 * h + j]);
        act[j] = ig;
        act[h + j] = fg;
        act[2 * h + j] = cg;
        act[3 * h + j] = og;
        const double c = (c_prev != nullptr ? fg * c_prev[j] : 0.0) + ig * cg;
        const double tc = std::tanh(c);
        saved->cells.at(r, j) = c;
        saved->tanh_c.at(r, j) = tc;
        out.at(r, j) = og * tc;
      }
    }
  }

  const std::size_t in = x.id;
  const bool params_need = p.wx.grad != nullptr || p.wh.grad != nullptr || p.b.grad != nullptr;
  return push(std::move(out), {in}, params_need,
              [in, p, saved, d, h, g4, T](Tape& tape, Node& self) {
                const Saved& sv = *saved;
                const Tensor& dh_out = self.grad;
                Tensor dpre({T, g4});
                const std::size_t nseq = sv.lengths.size();
                std::vector<double> dh_carry(nseq * h, 0.0);
                std::vector<double> dc_carry(nseq * h, 0.0);
                std::vector<double> gb(nseq * g4);
                std::vector<double> hb(nseq * h);
                const Tensor& wh = *p.wh.value;
                std::size_t active = 0;
                for (std::size_t tt = sv.max_len; tt-- > 0;) {
                  while (active < nseq &&
                         static_cast<std::size_t>(sv.lengths[sv.order[active]]) > tt) {
                    ++active;
                  }
                  for (std::size_t b = 0; b < active; ++b) {
                    const std::size_t s = sv.order[b];
                    const std::size_t r = sv.row(s, tt);
                    const double* act = sv.acts.row(r);
                    const double* c_prev =
                        sv.prev_row[r] >= 0 ? sv.cells.row(sv.prev_row[r]) : nullptr;
                    double* dg = dpre.row(r);
                    double* dhc = dh_carry.data() + b * h;
                    double* dcc = dc_carry.data() + b * h;
                    for (std::size_t j = 0; j < h; ++j) {
                      const double ig = act[j], fg = act[h + j], cg = act[2 * h + j],
                                   og = act[3 * h + j];
                      const double tc = sv.tanh_c.at(r, j);
                      const double dh = dh_out.at(r, j) + dhc[j];
                      const double dc = dcc[j] + dh * og * (1.0 - tc * tc);
                      const double cp = c_prev != nullptr ? c_prev[j] : 0.0;
                      dg[j] = dc * cg * ig * (1.0 - ig);
                      dg[h + j] = dc * cp * fg * (1.0 - fg);
                      dg[2 * h + j] = dc * ig * (1.0 - cg * cg);
                      dg[3 * h + j] = dh * tc * og * (1.0 - og);
                      dcc[j] = dc * fg;
                    }
                    std::copy_n(dg, g4, gb.data() + b * g4);
                  }
                  if (tt > 0) {
                    std::fill(hb.begin(), hb.begin() + active * h, 0.0);
                    kernels::gemm(active, h, g4, gb.data(), g4, wh.ptr(), h, hb.data(), h);
                    std::copy_n(hb.begin(), active * h, dh_carry.begin());
                  }
                }
                if (tape.needs(in)) {
                  Tensor& gx = tape.grad_of(in);
                  kernels::gemm(T, d, g4, dpre.ptr(), g4, p.wx.value->ptr(), d, gx.ptr(), d);
                }
                if (p.wx.grad != nullptr || p.wh.grad != nullptr) {
                  const Tensor dpre_t = transposed(dpre);
                  if (p.wx.grad != nullptr) {
                    kernels::gemm(g4, d, T, dpre_t.ptr(), T, tape.value(Var{in}).ptr(), d,
                                  p.wx.grad->ptr(), d);
                  }
                  if (p.wh.grad != nullptr) {
                    kernels::gemm(g4, h, T, dpre_t.ptr(), T, sv.h_prev.ptr(), h,
                                  p.wh.grad->ptr(), h);
                  }
                }
                if (p.b.grad != nullptr) {
                  for (std::size_t r = 0; r < T; ++r) {
                    kernels::axpy(1.0, dpre.row(r), p.b.grad->ptr(), g4);
                  }
                }
              });
}

Var Tape::attend(Var h_bar, std::span<const ParamRef> embeddings,
                 std::span<const std::vector<int>> lists) {
  const Tensor& hb = value(h_bar);
  const std::size_t n = hb.rows();
  const std::size_t m = hb.cols();
  require(lists.size() == n, "attend: one enabled list per row required");
  for (const ParamRef& e : embeddings) {
    require(e.value->size() == m, "attend: embedding width " +
                                      std::to_string(e.value->size()) +
                                      " does not match h_bar width " + std::to_string(m));
  }
  Tensor out({n, m});
  std::vector<std::vector<double>> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& list = lists[i];
    if (list.empty()) continue;
    std::vector<double> scores(list.size());
    for (std::size_t j = 0; j < list.size(); ++j) {
      require(list[j] >= 0 && static_cast<std::size_t>(list[j]) < embeddings.size(),
              "attend: embedding index out of range");
      scores[j] = kernels::dot(hb.row(i), embeddings[list[j]].value->ptr(), m);
    }
    weights[i] = softmax(scores);
    for (std::size_t j = 0; j < list.size(); ++j) {
      kernels::axpy(weights[i][j], embeddings[list[j]].value->ptr(), out.row(i), m);
    }
  }
  std::vector<ParamRef> embs(embeddings.begin(), embeddings.end());
  bool params_need = false;
  for (const ParamRef& e : embs) params_need = params_need || e.grad != nullptr;
  std::vector<std::vector<int>> lst(lists.begin(), lists.end());
  const std::size_t in = h_bar.id;
  auto w_shared = std::make_shared<std::vector<std::vector<double>>>(weights);
  Var v = push(std::move(out), {in}, params_need,
               [in, embs = std::move(embs), lst = std::move(lst), w_shared, m, n](
                   Tape& tape, Node& self) {
                 const Tensor& hb = tape.nodes_[in].value;
                 Tensor* ghb = tape.needs(in) ? &tape.grad_of(in) : nullptr;
                 for (std::size_t i = 0; i < n; ++i) {
                   const auto& list = lst[i];
                   if (list.empty()) continue;
                   const auto& a = (*w_shared)[i];
                   const double* g = self.grad.row(i);
                   std::vector<double> da(list.size());
                   double mean = 0.0;
                   for (std::size_t j = 0; j < list.size(); ++j) {
                     da[j] = kernels::dot(g, embs[list[j]].value->ptr(), m);
                     mean += a[j] * da[j];
                   }
                   for (std::size_t j = 0; j < list.size(); ++j) {
                     const double ds = a[j] * (da[j] - mean);
                     const ParamRef& e = embs[list[j]];
                     if (ghb != nullptr) kernels::axpy(ds, e.value->ptr(), ghb->row(i), m);
                     if (e.grad != nullptr) {
                       kernels::axpy(a[j], g, e.grad->ptr(), m);
                       kernels::axpy(ds, hb.row(i), e.grad->ptr(), m);
                     }
                   }
                 }
               });
  attention_.emplace_back(v.id, std::move(weights));
  return v;
}

const std::vector<std::vector<double>>& Tape::attention_weights(Var context) const {
  for (const auto& [id, w] : attention_) {
    if (id == context.id) return w;
  }
  throw TapeError("node is not an attention context");
}

Var Tape::heads(Var features, std::span<const ParamRef> weights,
                std::span<const ParamRef> biases, std::span<const HeadPair> pairs,
                bool with_flag) {
  const Tensor& f = value(features);
  const std::size_t df = f.cols();
  const std::size_t width = df + (with_flag ? 1 : 0);
  require(weights.size() == biases.size(), "heads: weight/bias count mismatch");
  for (std::size_t k = 0; k < weights.size(); ++k) {
    require(weights[k].value->rows() == 2 && weights[k].value->cols() == width &&
                biases[k].value->size() == 2,
            "heads: head " + std::to_string(k) + " has shape " +
                weights[k].value->shape_string() + ", expected [2x" +
                std::to_string(width) + "]");
  }
  Tensor out({pairs.size(), 2});
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const HeadPair& hp = pairs[q];
    require(hp.sample >= 0 && static_cast<std::size_t>(hp.sample) < f.rows() &&
                hp.head >= 0 && static_cast<std::size_t>(hp.head) < weights.size(),
            "heads: pair index out of range");
    const Tensor& w = *weights[hp.head].value;
    const Tensor& b = *biases[hp.head].value;
    for (std::size_t k = 0; k < 2; ++k) {
      double z = b[k] + kernels::dot(w.row(k), f.row(hp.sample), df);
      if (with_flag) z += w.at(k, df) * hp.flag;
      out.at(q, k) = z;
    }
  }
  std::vector<ParamRef> ws(weights.begin(), weights.end());
  std::vector<ParamRef> bs(biases.begin(), biases.end());
  bool params_need = false;
  for (std::size_t k = 0; k < ws.size(); ++k) {
    params_need = params_need || ws[k].grad != nullptr || bs[k].grad != nullptr;
  }
  std::vector<HeadPair> ps(pairs.begin(), pairs.end());
  const std::size_t in = features.id;
  return push(std::move(out), {in}, params_need,
              [in, ws = std::move(ws), bs = std::move(bs), ps = std::move(ps), df,
               with_flag](Tape& tape, Node& self) {
                const Tensor& f = tape.nodes_[in].value;
                Tensor* gf = tape.needs(in) ? &tape.grad_of(in) : nullptr;
                for (std::size_t q = 0; q < ps.size(); ++q) {
                  const HeadPair& hp = ps[q];
                  const ParamRef& w = ws[hp.head];
                  const ParamRef& b = bs[hp.head];
                  for (std::size_t k = 0; k < 2; ++k) {
                    const double g = self.grad.at(q, k);
                    if (g == 0.0) continue;
                    if (gf != nullptr) kernels::axpy(g, w.value->row(k), gf->row(hp.sample), df);
                    if (w.grad != nullptr) {
                      kernels::axpy(g, f.row(hp.sample), w.grad->row(k), df);
                      if (with_flag) w.grad->at(k, df) += g * hp.flag;
                    }
                    if (b.grad != nullptr) (*b.grad)[k] += g;
                  }
                }
              });
}

Var Tape::multitask_loss(Var z, std::span<const MultitaskTarget> targets) {
  const Tensor& zt = value(z);
  require(zt.cols() == 2, "multitask_loss: expects [P x 2] head outputs");
  require(!targets.empty(), "multitask_loss: empty batch");
  zt.check_finite("multitask_loss input");
  LossParts parts;
  for (const MultitaskTarget& t : targets) {
    const double dp = zt.at(t.positive_pair, 0) - zt.at(t.positive_pair, 1);
    parts.positive -= log_sigmoid(dp);
    require(t.negative_weights.empty() || t.negative_weights.size() == t.negative_pairs.size(),
            "multitask_loss: one weight per negative required");
    for (std::size_t j = 0; j < t.negative_pairs.size(); ++j) {
      const int q = t.negative_pairs[j];
      parts.negative -= negative_weight(t, j) * log_sigmoid(zt.at(q, 1) - zt.at(q, 0));
    }
  }
  const double nb = static_cast<double>(targets.size());
  parts.positive /= nb;
  parts.negative /= nb;
  parts.total = parts.positive + parts.negative;
  std::vector<MultitaskTarget> tg(targets.begin(), targets.end());
  const std::size_t in = z.id;
  Var v = push(Tensor({1}, std::vector<double>{parts.total}), {in}, false,
               [in, tg = std::move(tg), nb](Tape& tape, Node& self) {
                 const Tensor& zt = tape.nodes_[in].value;
                 Tensor& g = tape.grad_of(in);
                 const double scale = self.grad[0] / nb;
                 for (const MultitaskTarget& t : tg) {
                   const double dp = zt.at(t.positive_pair, 0) - zt.at(t.positive_pair, 1);
                   const double gp = (sigmoid(dp) - 1.0) * scale;
                   g.at(t.positive_pair, 0) += gp;
                   g.at(t.positive_pair, 1) -= gp;
                   for (std::size_t j = 0; j < t.negative_pairs.size(); ++j) {
                     const int q = t.negative_pairs[j];
                     const double gn =
                         sigmoid(zt.at(q, 0) - zt.at(q, 1)) * negative_weight(t, j) * scale;
                     g.at(q, 0) += gn;
                     g.at(q, 1) -= gn;
                   }
                 }
               });
  loss_parts_.emplace_back(v.id, parts);
  return v;
}

LossParts Tape::loss_parts(Var loss) const {
  for (const auto& [id, parts] : loss_parts_) {
    if (id == loss.id) return parts;
  }
  const double total = value(loss)[0];
  return {total, 0.0, total};
}

Var Tape::softmax_xent(Var logits, std::span<const int> targets) {
  const Tensor& lt = value(logits);
  const std::size_t n = lt.rows();
  const std::size_t k = lt.cols();
  require(targets.size() == n && n > 0, "softmax_xent: one target per row required");
  lt.check_finite("softmax_xent input");
  auto probs = std::make_shared<Tensor>(lt.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < k,
            "softmax_xent: target out of range");
    const auto pr = softmax(std::span<const double>(lt.row(r), k));
    std::copy(pr.begin(), pr.end(), probs->row(r));
    const double* row = lt.row(r);
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    loss -= row[targets[r]] - mx - std::log(z);
  }
  loss /= static_cast<double>(n);
  std::vector<int> tg(targets.begin(), targets.end());
  const std::size_t in = logits.id;
  return push(Tensor({1}, std::vector<double>{loss}), {in}, false,
              [in, probs, tg = std::move(tg), n, k](Tape& tape, Node& self) {
                Tensor& g = tape.grad_of(in);
                const double scale = self.grad[0] / static_cast<double>(n);
                for (std::size_t r = 0; r < n; ++r) {
                  for (std::size_t j = 0; j < k; ++j) {
                    const double y = static_cast<int>(j) == tg[r] ? 1.0 : 0.0;
                    g.at(r, j) += (probs->at(r, j) - y) * scale;
                  }
                }
              });
}

Var Tape::two_way_xent(Var z, std::span<const int> labels) {
  const Tensor& zt = value(z);
  const std::size_t n = zt.rows();
  require(zt.cols() == 2 && labels.size() == n && n > 0,
          "two_way_xent: expects [n x 2] outputs and n labels");
  zt.check_finite("two_way_xent input");
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double d = zt.at(r, 0) - zt.at(r, 1);
    loss -= labels[r] != 0 ? log_sigmoid(d) : log_sigmoid(-d);
  }
  loss /= static_cast<double>(n);
  std::vector<int> lb(labels.begin(), labels.end());
  const std::size_t in = z.id;
  return push(Tensor({1}, std::vector<double>{loss}), {in}, false,
              [in, lb = std::move(lb), n](Tape& tape, Node& self) {
                const Tensor& zt = tape.nodes_[in].value;
                Tensor& g = tape.grad_of(in);
                const double scale = self.grad[0] / static_cast<double>(n);
                for (std::size_t r = 0; r < n; ++r) {
                  const double s = sigmoid(zt.at(r, 0) - zt.at(r, 1));
                  const double gd = (lb[r] != 0 ? s - 1.0 : s) * scale;
                  g.at(r, 0) += gd;
                  g.at(r, 1) -= gd;
                }
              });
}

void Tape::backward(Var loss) {
  if (backward_done_) throw TapeError("backward called twice without reset");
  Node& root = node(loss);
  if (root.value.size() != 1) throw ShapeError("backward: loss must be a scalar");
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_of(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backprop || n.grad.shape() != n.value.shape() ||
        n.grad.size() != n.value.size()) {
      continue;
    }
    n.backprop(*this, n);
  }
}

void Tape::reset() {
  nodes_.clear();
  loss_parts_.clear();
  attention_.clear();
  backward_done_ = false;
}

}  // namespace skillrouter::numeric
