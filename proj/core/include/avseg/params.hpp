#pragma once

#include <deque>
#include <set>
#include <string>
#include <vector>

#include "avseg/rng.hpp"
#include "avseg/tensor.hpp"

namespace avseg {

enum class Init {
  kZeros,
  kOnes,
  kNormal,          // N(0, arg^2)
  kXavierUniform,
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;   // same shape, zeroed between optimizer steps
  bool trainable = false;

  void zero_grad() { grad.fill(T(0)); }
};

// Owns every parameter of a model. All random initialization flows from one
// seeded generator consumed in creation order, which makes rebuilds under the
// same seed bit-identical.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : gen_(seed) {}

  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter<T>& create(std::string name, Shape shape, bool trainable, Init init,
                       double arg = 0.0) {
    params_.emplace_back();
    Parameter<T>& p = params_.back();
    p.name = std::move(name);
    p.value = Tensor<T>(shape);
    p.grad = Tensor<T>(shape);
    p.trainable = trainable;
    switch (init) {
      case Init::kZeros: break;
      case Init::kOnes: p.value.fill(T(1)); break;
      case Init::kNormal: fill_normal(p.value, gen_, arg); break;
      case Init::kXavierUniform: fill_xavier_uniform(p.value, gen_); break;
    }
    return p;
  }

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::vector<const Parameter<T>*> all() const {
    std::vector<const Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::vector<Parameter<T>*> trainable() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) {
      if (p.trainable) out.push_back(&p);
    }
    return out;
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : params_) p.zero_grad();
  }

  size_t size() const { return params_.size(); }

 private:
  Rng gen_;
  std::deque<Parameter<T>> params_;  // deque: stable addresses
};

// Exhaustive, disjoint split of parameter identifiers into frozen/trainable.
struct ParameterPartition {
  std::set<std::string> frozen;
  std::set<std::string> trainable;
};

}  // namespace avseg
