// mceend/tensor.h
//
// Dense row-major tensors with tape-based reverse-mode differentiation.

#ifndef MCEEND_TENSOR_H_
#define MCEEND_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mceend {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape &shape);
std::size_t shape_numel(const Shape &shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Counts bytes held by tensor storage (data and gradients). Used by the
// bench command to measure peak activation memory of a training step.
struct MemoryStats {
  std::size_t current_bytes = 0;
  std::size_t peak_bytes = 0;
};
MemoryStats memory_stats();
void reset_peak_memory();

template <typename T>
struct TrackedAllocator {
  using value_type = T;
  TrackedAllocator() = default;
  template <typename U>
  TrackedAllocator(const TrackedAllocator<U> &) {}
  T *allocate(std::size_t n);
  void deallocate(T *p, std::size_t n) noexcept;
  template <typename U>
  bool operator==(const TrackedAllocator<U> &) const { return true; }
};

using Buffer = std::vector<double, TrackedAllocator<double>>;

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until the first accumulation
  bool requires_grad = false;
  bool leaf = true;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::span<const double> values);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor randn(Shape shape, std::mt19937_64 &rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, std::mt19937_64 &rng, double lo, double hi);
  static Tensor identity(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape &shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return {impl_->data.data(), impl_->data.size()}; }
  std::span<const double> data() const {
    return {impl_->data.data(), impl_->data.size()};
  }
  std::vector<double> to_vector() const {
    return {impl_->data.begin(), impl_->data.end()};
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient accumulator; allocated (zero-filled) on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor &set_requires_grad(bool on = true);
  bool is_leaf() const { return impl_->leaf; }

  double item() const;
  double at(std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;
  double &at(std::size_t i, std::size_t j);

  // Value copy with no tape history.
  Tensor detach() const;

  TensorImpl *impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl> &impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of executed differentiable operations. Operations record
// themselves onto the tape that is current on this thread (see Tape::Scope)
// when at least one input requires a gradient.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  void record(const Tensor &output, std::string_view op, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse order.
  void backward(const Tensor &loss);

  std::size_t size() const { return entries_.size(); }
  // Total element count of all recorded op outputs.
  std::size_t stored_elements() const;
  std::string_view op_name(std::size_t i) const { return entries_[i].op; }
  // Indices of entries whose backward rule ran in the last backward().
  const std::vector<std::size_t> &last_backward_order() const {
    return visited_;
  }
  void clear();

  static Tape *current();

  class Scope {
   public:
    explicit Scope(Tape &tape);
    ~Scope();
    Scope(const Scope &) = delete;
    Scope &operator=(const Scope &) = delete;

   private:
    Tape *previous_;
  };

 private:
  struct Entry {
    std::shared_ptr<TensorImpl> output;
    std::string_view op;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  std::vector<std::size_t> visited_;
};

// True when an op on these inputs must be recorded.
bool needs_grad(std::initializer_list<const Tensor *> inputs);
bool needs_grad(std::span<const Tensor> inputs);

// Gradient view of an op input, or an empty span when the input does not
// take gradients.
std::span<double> grad_sink(const Tensor &t);

}  // namespace mceend

#endif  // MCEEND_TENSOR_H_
