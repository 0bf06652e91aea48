#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace crosstvr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage and autograd record behind a Tensor handle. Ops read `grad` of the
// output and accumulate into the grads of `inputs`.
template <typename Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  bool frozen = false;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void(TensorNode&)> backward;

  // Zero-filled on first use; returns the grad buffer.
  std::vector<Real>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

// Dense row-major tensor handle. Copies share storage; op results are never
// mutated after creation, so handles can be shared read-only across threads.
template <typename Real>
class Tensor {
 public:
  using Node = TensorNode<Real>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> data, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const Real> data() const { return node_->data; }
  const Real& operator[](std::size_t i) const { return node_->data[i]; }
  Real item() const;

  // Writable view of a leaf's values. Throws for frozen tensors and for
  // tensors produced by a recorded op.
  std::span<Real> mutable_data();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  bool frozen() const { return node_->frozen; }
  void freeze() { node_->frozen = true; }

  // Fresh leaf holding a copy of the values, without history.
  Tensor detach() const;

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Ordered record of executed ops. backward() replays them in exact reverse
// recording order.
template <typename Real>
class Tape {
 public:
  void record(std::shared_ptr<TensorNode<Real>> node) { ops_.push_back(std::move(node)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }
  void backward(const Tensor<Real>& loss);

 private:
  std::vector<std::shared_ptr<TensorNode<Real>>> ops_;
};

// Installs a tape as the thread's active recorder. Ops executed with no
// active tape produce plain tensors without history.
template <typename Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  static Tape<Real>* active();

 private:
  Tape<Real>* previous_;
};

template <typename Real>
void backward(const Tensor<Real>& loss, Tape<Real>& tape) {
  tape.backward(loss);
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Converts values between precisions; the result is a leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return Tensor<To>::from(t.shape(), std::move(out), requires_grad);
}

}  // namespace crosstvr
