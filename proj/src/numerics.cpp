#include "saga/numerics.hpp"

#include <cmath>
#include <string>

#include "saga/errors.hpp"

namespace saga {

namespace {

[[noreturn]] void dim_error(const char* op, std::size_t got,
                            std::size_t want) {
  throw ContractViolation(std::string(op) + ": dimension mismatch (got " +
                          std::to_string(got) + ", want " +
                          std::to_string(want) + ")");
}

}  // namespace

bool Vector::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Vector::fill(double value) {
  for (double& v : data_) v = value;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Matrix::fill(double value) {
  for (double& v : data_) v = value;
}

Vector matvec(const Matrix& w, const Vector& x) {
  if (w.cols() != x.dim()) dim_error("matvec", x.dim(), w.cols());
  Vector out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += w.at(r, c) * x[c];
    out[r] = acc;
  }
  return out;
}

Vector matvec_transposed(const Matrix& w, const Vector& y) {
  if (w.rows() != y.dim()) dim_error("matvec_transposed", y.dim(), w.rows());
  Vector out(w.cols());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double yr = y[r];
    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += w.at(r, c) * yr;
  }
  return out;
}

Vector affine(const Matrix& w, const Vector& x, const Vector& b) {
  if (w.cols() != x.dim()) dim_error("affine", x.dim(), w.cols());
  if (b.dim() != w.rows()) dim_error("affine bias", b.dim(), w.rows());
  Vector out = matvec(w, x);
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] += b[i];
  return out;
}

void add_outer(Matrix& acc, const Vector& y, const Vector& x) {
  if (acc.rows() != y.dim()) dim_error("add_outer rows", y.dim(), acc.rows());
  if (acc.cols() != x.dim()) dim_error("add_outer cols", x.dim(), acc.cols());
  for (std::size_t r = 0; r < acc.rows(); ++r) {
    const double yr = y[r];
    for (std::size_t c = 0; c < acc.cols(); ++c) acc.at(r, c) += yr * x[c];
  }
}

void axpy(Vector& acc, double scale, const Vector& x) {
  if (acc.dim() != x.dim()) dim_error("axpy", x.dim(), acc.dim());
  for (std::size_t i = 0; i < acc.dim(); ++i) acc[i] += scale * x[i];
}

void axpy(Matrix& acc, double scale, const Matrix& x) {
  if (acc.rows() != x.rows() || acc.cols() != x.cols())
    throw ContractViolation("axpy: matrix shape mismatch");
  auto a = acc.data();
  auto b = x.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

double dot(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim()) dim_error("dot", b.dim(), a.dim());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Vector& x) { return std::sqrt(dot(x, x)); }

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.dim() + b.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i];
  for (std::size_t i = 0; i < b.dim(); ++i) out[a.dim() + i] = b[i];
  return out;
}

Vector mean_of(std::span<const Vector> values) {
  if (values.empty())
    throw ContractViolation("mean_of: empty vector collection");
  Vector out(values.front().dim());
  for (const Vector& v : values) {
    if (v.dim() != out.dim())
      dim_error("mean_of", v.dim(), out.dim());
    axpy(out, 1.0, v);
  }
  const double inv = 1.0 / static_cast<double>(values.size());
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] *= inv;
  return out;
}

double cosine_similarity(const Vector& a, const Vector& b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na <= kL2Epsilon || nb <= kL2Epsilon) return 0.0;
  return dot(a, b) / (na * nb);
}

Vector relu(const Vector& x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Vector trelu(const TReluParams& params, const Vector& z) {
  if (params.w_a.rows() != params.w_a.cols())
    throw ContractViolation("trelu: w_a must be square");
  Vector u = matvec(params.w_a, z);
  for (std::size_t i = 0; i < u.dim(); ++i) u[i] = u[i] > 0.0 ? u[i] : 0.0;
  return u;
}

Vector l2_normalize(const Vector& x) {
  const double n = norm2(x);
  if (n <= kL2Epsilon) return x;
  Vector out(x.dim());
  const double inv = 1.0 / n;
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = x[i] * inv;
  return out;
}

Vector l2_normalize_backward(const Vector& x, const Vector& d_out) {
  if (x.dim() != d_out.dim())
    dim_error("l2_normalize_backward", d_out.dim(), x.dim());
  const double n = norm2(x);
  if (n <= kL2Epsilon) return Vector(x.dim(), 0.0);
  // y = x / n;  dx = (dy - y (y . dy)) / n
  Vector y(x.dim());
  const double inv = 1.0 / n;
  for (std::size_t i = 0; i < x.dim(); ++i) y[i] = x[i] * inv;
  const double proj = dot(y, d_out);
  Vector dx(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i)
    dx[i] = (d_out[i] - y[i] * proj) * inv;
  return dx;
}

double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_loss(double logit, int label) {
  if (label != 0 && label != 1)
    throw ContractViolation("bce_loss: label must be 0 or 1");
  // log(1 + exp(t)) computed without overflow for either sign of t.
  const double t = label == 1 ? -logit : logit;
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

double bce_loss_grad(double logit, int label) {
  if (label != 0 && label != 1)
    throw ContractViolation("bce_loss_grad: label must be 0 or 1");
  return sigmoid(logit) - static_cast<double>(label);
}

}  // namespace saga
