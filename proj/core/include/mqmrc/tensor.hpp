#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace mqmrc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorStorage {
  Shape shape;
  std::vector<double> data;   // row-major
  std::vector<double> grad;   // empty until first accessed
  bool requires_grad = false;
};

/// Dense 64-bit float tensor. A Tensor is a cheap handle: copies share the
/// same storage, which is what lets backward closures write gradients into
/// the tensors the forward pass used.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(st_); }
  const Shape& shape() const { return st_->shape; }
  std::size_t rank() const { return st_->shape.size(); }
  std::size_t size() const { return st_->data.size(); }
  std::size_t dim(std::size_t axis) const { return st_->shape[axis]; }

  const std::vector<double>& data() const { return st_->data; }
  std::vector<double>& data() { return st_->data; }

  bool requires_grad() const { return st_->requires_grad; }
  void set_requires_grad(bool v) { st_->requires_grad = v; }

  bool grad_allocated() const { return !st_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access. Const because the
  /// handle, not the storage, is immutable; backward steps accumulate through
  /// captured copies.
  std::vector<double>& grad() const;
  void zero_grad();

  double value() const;  // scalar tensors only
  double at(std::initializer_list<std::size_t> idx) const;

  bool same_storage(const Tensor& other) const { return st_ == other.st_; }

 private:
  std::shared_ptr<TensorStorage> st_;
};

/// Ordered record of executed differentiable ops. backward() replays the
/// records last-to-first; every step adds into parent .grad buffers, so a
/// tensor consumed by m ops ends up with the sum of m contributions.
class Tape {
 public:
  void record(std::function<void()> backward_step);
  std::size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

  /// Seeds grad(loss)=1 and runs all recorded steps in reverse order.
  /// loss must be a scalar recorded on this tape.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> steps_;
};

/// Installs a tape as this thread's recording target. Ops record onto the
/// active tape only; with no active tape, forwards run grad-free.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();

/// backward() on the thread's active tape.
void backward(const Tensor& loss);

}  // namespace mqmrc
