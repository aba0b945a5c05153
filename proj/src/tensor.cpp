#include "director/tensor.hpp"

#include <cstring>
#include <sstream>

namespace director {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<FloatBuffer>(shape_numel(shape_), 0.0f)) {}

Tensor::Tensor(Shape shape, const std::vector<float>& values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != static_cast<int64_t>(values.size()))
    throw ContractError("tensor init: " + shape_str(shape_) + " does not hold " +
                        std::to_string(values.size()) + " values");
  data_ = std::make_shared<FloatBuffer>(values.begin(), values.end());
}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), value);
  return t;
}

float Tensor::scalar_value() const {
  if (numel() != 1) throw ContractError("scalar_value on tensor " + shape_str(shape_));
  return (*data_)[0];
}

bool Tensor::all_finite() const {
  if (!data_) return true;
  for (float v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw ContractError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<FloatBuffer>(*data_);
  return t;
}

namespace {
void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
}
}  // namespace

Tensor t_add(const Tensor& a, const Tensor& b) {
  check_same(a, b, "t_add");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data_mut()[i] = a.data()[i] + b.data()[i];
  return out;
}

Tensor t_sub(const Tensor& a, const Tensor& b) {
  check_same(a, b, "t_sub");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data_mut()[i] = a.data()[i] - b.data()[i];
  return out;
}

Tensor t_mul(const Tensor& a, const Tensor& b) {
  check_same(a, b, "t_mul");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data_mut()[i] = a.data()[i] * b.data()[i];
  return out;
}

Tensor t_scale(const Tensor& a, float s) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data_mut()[i] = a.data()[i] * s;
  return out;
}

Tensor t_concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw ContractError("t_concat_cols: row mismatch");
  int ca = a.cols(), cb = b.cols();
  Tensor out({static_cast<int>(a.rows()), ca + cb});
  for (int64_t r = 0; r < a.rows(); ++r) {
    std::memcpy(out.data_mut() + r * (ca + cb), a.data() + r * ca, sizeof(float) * ca);
    std::memcpy(out.data_mut() + r * (ca + cb) + ca, b.data() + r * cb, sizeof(float) * cb);
  }
  return out;
}

float t_dot(const Tensor& a, const Tensor& b) {
  check_same(a, b, "t_dot");
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += double(a.data()[i]) * b.data()[i];
  return static_cast<float>(s);
}

float t_norm(const Tensor& a) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += double(a.data()[i]) * a.data()[i];
  return static_cast<float>(std::sqrt(s));
}

float t_mse(const Tensor& a, const Tensor& b) {
  check_same(a, b, "t_mse");
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = double(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  return static_cast<float>(s / double(a.numel()));
}

Tensor t_row(const Tensor& a, int64_t row) {
  return t_rows(a, row, row + 1);
}

Tensor t_rows(const Tensor& a, int64_t row0, int64_t row1) {
  int c = a.cols();
  if (row0 < 0 || row1 > a.rows() || row0 >= row1)
    throw ContractError("t_rows: bad range");
  Tensor out({static_cast<int>(row1 - row0), c});
  std::memcpy(out.data_mut(), a.data() + row0 * c, sizeof(float) * (row1 - row0) * c);
  return out;
}

Tensor t_stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("t_stack_rows: empty");
  int c = rows[0].cols();
  int64_t n = 0;
  for (const Tensor& t : rows) {
    if (t.cols() != c) throw ContractError("t_stack_rows: column mismatch");
    n += t.rows();
  }
  Tensor out({static_cast<int>(n), c});
  int64_t at = 0;
  for (const Tensor& t : rows) {
    std::memcpy(out.data_mut() + at * c, t.data(), sizeof(float) * t.numel());
    at += t.rows();
  }
  return out;
}

}  // namespace director
