// mceend/tensor.cc

#include "mceend/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <new>
#include <sstream>

namespace mceend {

namespace {

std::atomic<std::size_t> g_current_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};

thread_local Tape *t_current_tape = nullptr;

void note_alloc(std::size_t bytes) {
  std::size_t now = g_current_bytes.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak_bytes.load();
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}

}  // namespace

template <typename T>
T *TrackedAllocator<T>::allocate(std::size_t n) {
  note_alloc(n * sizeof(T));
  return static_cast<T *>(::operator new(n * sizeof(T)));
}

template <typename T>
void TrackedAllocator<T>::deallocate(T *p, std::size_t n) noexcept {
  g_current_bytes.fetch_sub(n * sizeof(T));
  ::operator delete(p);
}

template struct TrackedAllocator<double>;

MemoryStats memory_stats() {
  return {g_current_bytes.load(), g_peak_bytes.load()};
}

void reset_peak_memory() { g_peak_bytes.store(g_current_bytes.load()); }

std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::span<const double> values) : Tensor(std::move(shape)) {
  if (values.size() != numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(impl_->shape));
  }
  std::copy(values.begin(), values.end(), impl_->data.begin());
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), std::span<const double>(values.begin(), values.size())) {}

Tensor Tensor::randn(Shape shape, std::mt19937_64 &rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto &v : t.impl_->data) v = dist(rng);
  return t;
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64 &rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto &v : t.impl_->data) v = dist(rng);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::span<double> Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return {impl_->grad.data(), impl_->grad.size()};
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return {impl_->grad.data(), impl_->grad.size()};
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor &Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return impl_->data[i * impl_->shape[1] + j];
}

double &Tensor::at(std::size_t i, std::size_t j) {
  return impl_->data[i * impl_->shape[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  const auto &s = impl_->shape;
  return impl_->data[(i * s[1] + j) * s[2] + k];
}

Tensor Tensor::detach() const {
  return Tensor(shape(), data());
}

void Tape::record(const Tensor &output, std::string_view op, BackwardFn fn) {
  output.impl()->requires_grad = true;
  output.impl()->leaf = false;
  entries_.push_back({output.impl_ptr(), op, std::move(fn)});
}

void Tape::backward(const Tensor &loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward(): loss is detached from the tape");
  }
  if (!loss.is_leaf()) {
    bool found = std::any_of(entries_.begin(), entries_.end(), [&](const Entry &e) {
      return e.output.get() == loss.impl();
    });
    if (!found) throw std::logic_error("backward(): loss was not produced on this tape");
  }
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  visited_.clear();
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].output->grad.empty()) continue;
    entries_[i].fn();
    visited_.push_back(i);
  }
}

std::size_t Tape::stored_elements() const {
  std::size_t n = 0;
  for (const auto &e : entries_) n += e.output->data.size();
  return n;
}

void Tape::clear() {
  entries_.clear();
  visited_.clear();
}

Tape *Tape::current() { return t_current_tape; }

Tape::Scope::Scope(Tape &tape) : previous_(t_current_tape) { t_current_tape = &tape; }

Tape::Scope::~Scope() { t_current_tape = previous_; }

bool needs_grad(std::initializer_list<const Tensor *> inputs) {
  if (!t_current_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor *t) { return t->requires_grad(); });
}

bool needs_grad(std::span<const Tensor> inputs) {
  if (!t_current_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor &t) { return t.requires_grad(); });
}

std::span<double> grad_sink(const Tensor &t) {
  if (!t.requires_grad()) return {};
  return const_cast<Tensor &>(t).grad();
}

}  // namespace mceend
