#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace director {

// Fatal misuse of a module interface (shape mismatch, malformed one-hot, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during training.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// 64-byte aligned buffers keep Eigen's vectorized kernels on the same
// peeling split every run, which makes training bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

// Dense float32 array with shared storage. Copies are shallow; buffers are
// treated as immutable once a Tensor has been handed out, so sharing across
// threads is safe. Builders fill the buffer through data_mut() before
// publishing.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, const std::vector<float>& values);

  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  bool empty() const { return numel() == 0; }

  // Matrix view: the last dimension is the column axis, everything before it
  // is flattened into rows. A 1-D tensor is a single row.
  int cols() const { return shape_.empty() ? 0 : shape_.back(); }
  int64_t rows() const { return shape_.empty() ? 0 : numel() / cols(); }

  const float* data() const { return data_->data(); }
  float* data_mut() { return data_->data(); }
  float at(int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  float scalar_value() const;
  bool all_finite() const;

  // Shares the underlying buffer.
  Tensor reshape(Shape shape) const;
  Tensor clone() const;

  const FloatBuffer& vec() const { return *data_; }

 private:
  Shape shape_;
  std::shared_ptr<FloatBuffer> data_;
};

// Plain tensor arithmetic used outside gradient graphs (rewards, metrics,
// environment frames). Shapes must match exactly unless stated otherwise.
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_scale(const Tensor& a, float s);
Tensor t_concat_cols(const Tensor& a, const Tensor& b);
float t_dot(const Tensor& a, const Tensor& b);
float t_norm(const Tensor& a);
float t_mse(const Tensor& a, const Tensor& b);  // mean over all elements
Tensor t_row(const Tensor& a, int64_t row);     // copy of one row [1, C]
Tensor t_rows(const Tensor& a, int64_t row0, int64_t row1);
Tensor t_stack_rows(const std::vector<Tensor>& rows);

}  // namespace director
