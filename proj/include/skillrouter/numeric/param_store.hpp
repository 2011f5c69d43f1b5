#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "skillrouter/numeric/rng.hpp"
#include "skillrouter/numeric/tensor.hpp"

namespace skillrouter::numeric {

struct Param {
  Tensor value;
  Tensor grad;
  // Frozen parameters receive no gradient and are skipped by the optimizer.
  bool trainable = true;
};

// Read-only value plus an optional gradient sink. A null grad marks the
// parameter as frozen for the current computation.
struct ParamRef {
  const Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

// Named parameters iterated in lexicographic order of their paths.
class ParamStore {
 public:
  Param& add(const std::string& path, Tensor value);
  bool contains(const std::string& path) const;
  Param& at(const std::string& path);
  const Param& at(const std::string& path) const;

  // Gradient-bearing reference when the parameter is trainable.
  ParamRef ref(const std::string& path);
  // Value-only reference for inference.
  ParamRef cref(const std::string& path) const;

  void zero_grad();
  void set_trainable(bool trainable);
  std::size_t scalar_count() const;
  std::size_t size() const { return params_.size(); }
  std::vector<std::string> paths() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Bitwise equality of every path, shape and value.
  bool values_equal(const ParamStore& other) const;

 private:
  std::map<std::string, Param> params_;
};

void init_uniform(Tensor& t, Rng& rng, double limit);

}  // namespace skillrouter::numeric
