#include "skillrouter/numeric/param_store.hpp"

#include <stdexcept>

namespace skillrouter::numeric {

Param& ParamStore::add(const std::string& path, Tensor value) {
  if (params_.count(path) != 0) {
    throw std::invalid_argument("duplicate parameter path: " + path);
  }
  Param p;
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  return params_.emplace(path, std::move(p)).first->second;
}

bool ParamStore::contains(const std::string& path) const {
  return params_.count(path) != 0;
}

Param& ParamStore::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + path);
  return it->second;
}

const Param& ParamStore::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + path);
  return it->second;
}

ParamRef ParamStore::ref(const std::string& path) {
  Param& p = at(path);
  return {&p.value, p.trainable ? &p.grad : nullptr};
}

ParamRef ParamStore::cref(const std::string& path) const {
  return {&at(path).value, nullptr};
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

void ParamStore::set_trainable(bool trainable) {
  for (auto& [_, p] : params_) p.trainable = trainable;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

std::vector<std::string> ParamStore::paths() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [path, _] : params_) out.push_back(path);
  return out;
}

bool ParamStore::values_equal(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  }
  return true;
}

void init_uniform(Tensor& t, Rng& rng, double limit) {
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
}

}  // namespace skillrouter::numeric
