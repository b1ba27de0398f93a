#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace saga {

// Dense 64-bit real vector. Values are mutable in place but the dimension is
// fixed after construction.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept;
  void fill(double value);

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

// Dense row-major 64-bit real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept;
  void fill(double value);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Learnable structural transform applied before the ReLU clamp. Constructed
// as the identity so the activation starts out as a plain ReLU.
struct TReluParams {
  Matrix w_a;

  static TReluParams identity(std::size_t dim) {
    return TReluParams{Matrix::identity(dim)};
  }
};

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// w * x
Vector matvec(const Matrix& w, const Vector& x);

// w^T * y
Vector matvec_transposed(const Matrix& w, const Vector& y);

// w * x + b
Vector affine(const Matrix& w, const Vector& x, const Vector& b);

// acc += y * x^T  (rank-one update; used for weight gradients)
void add_outer(Matrix& acc, const Vector& y, const Vector& x);

// acc += scale * x
void axpy(Vector& acc, double scale, const Vector& x);
void axpy(Matrix& acc, double scale, const Matrix& x);

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& x);

Vector concat(const Vector& a, const Vector& b);

// Mean of a non-empty set of equal-dimension vectors.
Vector mean_of(std::span<const Vector> values);

// Cosine similarity; zero if either vector has (near-)zero norm.
double cosine_similarity(const Vector& a, const Vector& b);

// ---------------------------------------------------------------------------
// Activations and losses
// ---------------------------------------------------------------------------

// Element-wise max(x, 0). Non-positive entries map to +0.0 exactly.
Vector relu(const Vector& x);

// max(w_a * z, 0) element-wise; z is the pre-activation affine output.
Vector trelu(const TReluParams& params, const Vector& z);

// x / ||x||_2 when the norm exceeds kL2Epsilon, otherwise x unchanged (the
// degenerate zero vector stays zero and propagates zero gradient).
inline constexpr double kL2Epsilon = 1e-300;
Vector l2_normalize(const Vector& x);

// Backprop through y = x / ||x||: returns dL/dx given dL/dy and the cached
// input. Zero-norm inputs propagate a zero gradient.
Vector l2_normalize_backward(const Vector& x, const Vector& d_out);

// Numerically stable logistic function; branches on the sign of z so neither
// branch can overflow.
double sigmoid(double z);

// Binary cross-entropy evaluated from the logit in log-sum-exp-stable form:
//   y = 1: log(1 + exp(-z));  y = 0: log(1 + exp(z))
double bce_loss(double logit, int label);

// d bce_loss / d logit = sigmoid(logit) - label
double bce_loss_grad(double logit, int label);

}  // namespace saga
