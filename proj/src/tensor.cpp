#include "crosstvr/tensor.hpp"

#include <sstream>

#include "crosstvr/errors.hpp"

namespace crosstvr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "×" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<Real>(n, Real(0)), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::vector<Real> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  Tensor t(std::move(node));
  t.set_requires_grad(requires_grad);
  return t;
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return from(Shape{}, {value}, requires_grad);
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename Real>
std::span<Real> Tensor<Real>::mutable_data() {
  if (node_->frozen) throw FrozenError("write to frozen tensor " + shape_str(shape()));
  if (node_->backward) throw std::logic_error("write to an op result");
  return node_->data;
}

template <typename Real>
void Tensor<Real>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    node_->grad_buffer();
  } else {
    node_->grad.clear();
  }
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->data.size(), Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from(shape(), node_->data, false);
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;
  loss.node().grad_buffer()[0] += Real(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty()) continue;  // nothing flowed into this op
    node.backward(node);
  }
}

namespace {
template <typename Real>
thread_local Tape<Real>* active_tape = nullptr;
}

template <typename Real>
TapeScope<Real>::TapeScope(Tape<Real>& tape) : previous_(active_tape<Real>) {
  active_tape<Real> = &tape;
}

template <typename Real>
TapeScope<Real>::~TapeScope() {
  active_tape<Real> = previous_;
}

template <typename Real>
Tape<Real>* TapeScope<Real>::active() {
  return active_tape<Real>;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;

}  // namespace crosstvr
