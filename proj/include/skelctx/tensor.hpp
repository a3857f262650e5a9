#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace skelctx {

namespace detail {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Pushes this node's grad into the parents' grad buffers.
  std::function<void(TensorNode&)> backward_fn;

  std::size_t numel() const { return data.size(); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace detail

// Forward-pass graph recording is on by default; evaluation loops disable it
// with a NoGradGuard so inference builds no tape.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool f = true;
    return f;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense row-major 64-bit float tensor with reverse-mode gradients recorded on
// an operation tape. Copying a Tensor copies the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return filled(std::move(shape), 0.0, requires_grad);
  }

  static Tensor filled(std::vector<std::size_t> shape, double value,
                       bool requires_grad = false) {
    auto node = std::make_shared<detail::TensorNode>();
    std::size_t n = detail::shape_numel(shape);
    node->shape = std::move(shape);
    node->data.assign(n, value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values,
                            bool requires_grad = false) {
    if (detail::shape_numel(shape) != values.size())
      throw std::invalid_argument("Tensor::from_values: shape does not match value count");
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_values({1}, {value}, requires_grad);
  }

  static Tensor randn(std::vector<std::size_t> shape, double stddev, std::mt19937_64& rng,
                      bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data()) v = dist(rng);
    return t;
  }

  static Tensor uniform(std::vector<std::size_t> shape, double lo, double hi,
                        std::mt19937_64& rng, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data()) v = dist(rng);
    return t;
  }

  bool defined() const { return node_ != nullptr; }

  const std::vector<std::size_t>& shape() const { return check()->shape; }
  std::size_t rank() const { return check()->shape.size(); }
  std::size_t dim(std::size_t i) const { return check()->shape.at(i); }
  std::size_t numel() const { return check()->data.size(); }

  std::vector<double>& data() { return check()->data; }
  const std::vector<double>& data() const { return check()->data; }

  bool requires_grad() const { return check()->requires_grad; }
  void set_requires_grad(bool on) { check()->requires_grad = on; }

  bool has_grad() const { return defined() && !node_->grad.empty(); }
  std::vector<double>& grad() { return check()->grad; }
  const std::vector<double>& grad() const { return check()->grad; }
  void ensure_grad() { check()->ensure_grad(); }
  void zero_grad() {
    if (defined() && !node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  }

  double value() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::value: tensor is not a scalar");
    return node_->data[0];
  }

  double at(std::size_t i) const { return node_->data.at(flat({i})); }
  double at(std::size_t i, std::size_t j) const { return node_->data.at(flat({i, j})); }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return node_->data.at(flat({i, j, k}));
  }
  double& at(std::size_t i) { return node_->data.at(flat({i})); }
  double& at(std::size_t i, std::size_t j) { return node_->data.at(flat({i, j})); }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return node_->data.at(flat({i, j, k}));
  }

  bool all_finite() const {
    for (double v : check()->data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void throw_if_not_finite(const std::string& where) const {
    if (!all_finite())
      throw std::runtime_error("non-finite value in " + where);
  }

  // Reverse-mode pass from a scalar. Seeds d(self)/d(self) = 1 and walks the
  // recorded tape in reverse topological order, accumulating into .grad.
  void backward() const {
    if (numel() != 1)
      throw std::invalid_argument("Tensor::backward: root must be a scalar");
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    topo_sort(node_.get(), order, seen);
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::TensorNode* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

 private:
  detail::TensorNode* check() const {
    if (!node_) throw std::invalid_argument("use of undefined Tensor");
    return node_.get();
  }

  std::size_t flat(std::initializer_list<std::size_t> idx) const {
    const auto& s = check()->shape;
    if (idx.size() != s.size())
      throw std::invalid_argument("Tensor::at: index rank mismatch");
    std::size_t off = 0, d = 0;
    for (std::size_t i : idx) {
      if (i >= s[d]) throw std::out_of_range("Tensor::at: index out of range");
      off = off * s[d] + i;
      ++d;
    }
    return off;
  }

  static void topo_sort(detail::TensorNode* root, std::vector<detail::TensorNode*>& order,
                        std::unordered_set<detail::TensorNode*>& seen) {
    // Iterative DFS; graphs here are small but can be deep through long loops.
    struct Frame {
      detail::TensorNode* node;
      std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        detail::TensorNode* p = f.node->parents[f.next_parent++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

// Builds a result node; wires parents + backward only when grad recording is
// active and some input needs it.
inline Tensor make_op_result(std::vector<std::size_t> shape, std::vector<double> data,
                             std::vector<Tensor> inputs,
                             std::function<void(TensorNode&)> backward_fn) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (GradMode::enabled()) {
    for (const Tensor& t : inputs)
      if (t.defined() && t.requires_grad()) needs = true;
  }
  if (needs) {
    node->requires_grad = true;
    node->backward_fn = std::move(backward_fn);
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs)
      if (t.defined()) node->parents.push_back(t.node());
  }
  return Tensor(std::move(node));
}

inline void accumulate(const std::shared_ptr<TensorNode>& node, std::size_t i, double v) {
  node->ensure_grad();
  node->grad[i] += v;
}

}  // namespace detail

}  // namespace skelctx
