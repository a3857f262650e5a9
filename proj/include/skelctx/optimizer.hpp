#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "skelctx/tensor.hpp"

namespace skelctx {

// A named trainable tensor plus its SGD momentum buffer.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> momentum;

  Parameter() = default;
  Parameter(std::string n, Tensor t) : name(std::move(n)), value(std::move(t)) {
    value.set_requires_grad(true);
    momentum.assign(value.numel(), 0.0);
  }
};

// Flat registry of parameters; modules register into one store so the trainer
// and checkpoint code see a single ordered list. Names must be unique.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Tensor init) {
    if (!names_.insert(name).second)
      throw std::invalid_argument("duplicate parameter name: " + name);
    params_.push_back(std::make_shared<Parameter>(name, std::move(init)));
    return params_.back()->value;
  }

  std::vector<std::shared_ptr<Parameter>>& params() { return params_; }
  const std::vector<std::shared_ptr<Parameter>>& params() const { return params_; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }

  std::shared_ptr<Parameter> find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p;
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : params_) p->value.zero_grad();
  }

  // Gradient of a loss w.r.t. a parameter the loss never touched is zero;
  // callers use this after backward so every registered parameter carries a
  // populated gradient buffer.
  void ensure_grads_allocated() {
    for (auto& p : params_) p->value.ensure_grad();
  }

 private:
  std::vector<std::shared_ptr<Parameter>> params_;
  std::unordered_set<std::string> names_;
};

// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v; grads zeroed.
inline void sgd_step(std::vector<std::shared_ptr<Parameter>>& params, double lr,
                     double momentum, double weight_decay) {
  for (auto& p : params) {
    if (p->value.requires_grad() && !p->value.has_grad())
      throw std::runtime_error("sgd_step: missing gradient on parameter " + p->name);
  }
  for (auto& p : params) {
    auto& w = p->value.data();
    auto& g = p->value.grad();
    auto& v = p->momentum;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
    p->value.zero_grad();
  }
}

inline void sgd_step(ParameterStore& store, double lr, double momentum,
                     double weight_decay) {
  sgd_step(store.params(), lr, momentum, weight_decay);
}

}  // namespace skelctx
