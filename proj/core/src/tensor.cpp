#include "mqmrc/tensor.hpp"

#include <sstream>
#include <utility>

#include "mqmrc/errors.hpp"

namespace mqmrc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : st_(std::make_shared<TensorStorage>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  st_->shape = std::move(shape);
  st_->data.assign(shape_numel(st_->shape), fill);
  st_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : st_(std::make_shared<TensorStorage>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  st_->shape = std::move(shape);
  st_->data = std::move(values);
  st_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values), requires_grad);
}

std::vector<double>& Tensor::grad() const {
  if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
  return st_->grad;
}

void Tensor::zero_grad() {
  st_->grad.assign(st_->data.size(), 0.0);
}

double Tensor::value() const {
  if (size() != 1) throw ContractError("value() needs a scalar tensor, got " + shape_str(shape()));
  return st_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != rank()) throw IndexError("index rank mismatch for " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= st_->shape[axis]) throw IndexError("index out of range for " + shape_str(shape()));
    flat = flat * st_->shape[axis] + i;
    ++axis;
  }
  return st_->data[flat];
}

void Tape::record(std::function<void()> backward_step) {
  steps_.push_back(std::move(backward_step));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward needs a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss was not recorded on a tape");
  }
  loss.grad()[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() {
  g_active_tape = prev_;
}

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (!g_active_tape) throw ContractError("backward: no active tape");
  g_active_tape->backward(loss);
}

}  // namespace mqmrc
