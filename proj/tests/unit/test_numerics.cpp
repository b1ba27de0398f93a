#include <cmath>
#include <cstring>

#include "doctest.h"
#include "saga/errors.hpp"
#include "saga/grad_check.hpp"
#include "saga/numerics.hpp"
#include "saga/rng.hpp"

using namespace saga;

namespace {

Vector random_vector(Rng& rng, std::size_t dim, double scale = 1.0) {
  Vector v(dim);
  for (std::size_t i = 0; i < dim; ++i) v[i] = gaussian(rng) * scale;
  return v;
}

}  // namespace

TEST_CASE("affine basics") {
  SUBCASE("identity weights pass the input through") {
    const Vector y = affine(Matrix::identity(2), {1.0, 2.0}, {0.0, 0.0});
    CHECK(y == Vector{1.0, 2.0});
  }
  SUBCASE("zero weights return the bias") {
    const Vector y = affine(Matrix(2, 2, 0.0), {3.0, 4.0}, {5.0, 6.0});
    CHECK(y == Vector{5.0, 6.0});
  }
  SUBCASE("hand-computed product") {
    Matrix w(2, 2);
    w.at(0, 0) = 1.0; w.at(0, 1) = 1.0;
    w.at(1, 0) = 0.0; w.at(1, 1) = 1.0;
    const Vector y = affine(w, {2.0, 3.0}, {1.0, 0.0});
    CHECK(y == Vector{6.0, 3.0});
  }
  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(affine(Matrix(2, 3), {1.0, 2.0}, {0.0, 0.0}),
                    ContractViolation);
    CHECK_THROWS_AS(affine(Matrix(2, 2), {1.0, 2.0}, {0.0, 0.0, 0.0}),
                    ContractViolation);
  }
}

TEST_CASE("relu clamps by sign") {
  CHECK(relu({-1.0, 0.0, 2.0}) == Vector{0.0, 0.0, 2.0});
  CHECK(relu(Vector(4, 0.0)) == Vector(4, 0.0));
  CHECK(relu({5.0, -5.0}) == Vector{5.0, 0.0});
}

TEST_CASE("trelu") {
  SUBCASE("identity transform reduces to relu exactly") {
    const TReluParams id = TReluParams::identity(3);
    Rng rng = make_rng(42);
    for (int i = 0; i < 200; ++i) {
      const Vector z = random_vector(rng, 3, 2.0);
      const Vector a = trelu(id, z);
      const Vector r = relu(z);
      // Bitwise identical, not merely close.
      CHECK(std::memcmp(a.data().data(), r.data().data(),
                        3 * sizeof(double)) == 0);
    }
  }
  SUBCASE("swap matrix permutes then clamps") {
    TReluParams p{Matrix(2, 2, 0.0)};
    p.w_a.at(0, 1) = 1.0;
    p.w_a.at(1, 0) = 1.0;
    CHECK(trelu(p, {-3.0, 4.0}) == Vector{4.0, 0.0});
  }
  SUBCASE("zero input stays zero") {
    CHECK(trelu(TReluParams::identity(2), {0.0, 0.0}) == Vector{0.0, 0.0});
  }
  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(trelu(TReluParams::identity(3), {1.0, 2.0}),
                    ContractViolation);
  }
}

TEST_CASE("l2_normalize") {
  SUBCASE("3-4-5 triangle") {
    const Vector y = l2_normalize({3.0, 4.0});
    CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("zero vector is returned unchanged") {
    CHECK(l2_normalize({0.0, 0.0}) == Vector{0.0, 0.0});
  }
  SUBCASE("axis aligned") {
    CHECK(l2_normalize({5.0, 0.0, 0.0}) == Vector{1.0, 0.0, 0.0});
  }
  SUBCASE("output norm is 0 or 1 within 1e-12") {
    Rng rng = make_rng(7);
    for (int i = 0; i < 500; ++i) {
      const Vector x = random_vector(rng, 5, std::exp(gaussian(rng) * 3.0));
      const double n = norm2(l2_normalize(x));
      const bool unit = std::fabs(n - 1.0) <= 1e-12;
      CHECK((n == 0.0 || unit));
    }
  }
  SUBCASE("invariant under positive scaling") {
    Rng rng = make_rng(8);
    for (int i = 0; i < 200; ++i) {
      const Vector x = random_vector(rng, 4);
      const double c = std::exp(gaussian(rng));
      Vector cx = x;
      for (std::size_t k = 0; k < cx.dim(); ++k) cx[k] *= c;
      const Vector a = l2_normalize(x);
      const Vector b = l2_normalize(cx);
      for (std::size_t k = 0; k < a.dim(); ++k)
        CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1000.0) == doctest::Approx(1.0));
  CHECK(sigmoid(-1000.0) == doctest::Approx(0.0));
  CHECK(std::isfinite(sigmoid(1000.0)));
  CHECK(std::isfinite(sigmoid(-1000.0)));

  SUBCASE("complementary within 1e-15") {
    Rng rng = make_rng(9);
    for (int i = 0; i < 500; ++i) {
      const double z = gaussian(rng) * 10.0;
      CHECK(std::fabs(sigmoid(z) + sigmoid(-z) - 1.0) <= 1e-15);
    }
  }
}

TEST_CASE("bce_loss") {
  CHECK(bce_loss(0.0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(50.0, 1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(bce_loss(-2.0, 0) ==
        doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-15));
  CHECK_THROWS_AS(bce_loss(0.0, 2), ContractViolation);

  SUBCASE("non-negative everywhere") {
    Rng rng = make_rng(10);
    for (int i = 0; i < 500; ++i) {
      const double z = gaussian(rng) * 30.0;
      CHECK(bce_loss(z, 0) >= 0.0);
      CHECK(bce_loss(z, 1) >= 0.0);
    }
  }
  SUBCASE("no overflow at extreme logits") {
    CHECK(std::isfinite(bce_loss(1e4, 0)));
    CHECK(std::isfinite(bce_loss(-1e4, 1)));
    CHECK(bce_loss(1e4, 0) == doctest::Approx(1e4));
  }
  SUBCASE("logit gradient matches finite differences to 1e-6") {
    Rng rng = make_rng(11);
    for (int i = 0; i < 100; ++i) {
      const double z = gaussian(rng) * 4.0;
      for (int y = 0; y <= 1; ++y) {
        const double h = 1e-6;
        const double numeric = (bce_loss(z + h, y) - bce_loss(z - h, y)) /
                               (2.0 * h);
        CHECK(bce_loss_grad(z, y) == doctest::Approx(numeric).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("grad_check on a quadratic is exact to roundoff") {
  const double theta[] = {3.0};
  const double analytic[] = {6.0};
  const GradCheckFn f = [](std::span<const double> p, std::uint64_t*) {
    return p[0] * p[0];
  };
  const GradCheckReport r = grad_check(f, theta, analytic, 1e-5, 1e-8);
  CHECK(r.pass);
  CHECK(r.checked == 1);
  CHECK(r.max_rel_err < 1e-8);
}

TEST_CASE("trelu gradients match finite differences (w_a is learnable)") {
  Rng rng = make_rng(12);
  const std::size_t dim = 4;
  // f(wa, z) = c . trelu(wa, z); parameters are wa entries then z entries.
  const Vector c = random_vector(rng, dim);
  std::vector<double> params;
  Matrix wa(dim, dim);
  for (double& v : wa.data()) v = gaussian(rng);
  Vector z = random_vector(rng, dim);
  params.insert(params.end(), wa.data().begin(), wa.data().end());
  params.insert(params.end(), z.data().begin(), z.data().end());

  const GradCheckFn f = [&](std::span<const double> p, std::uint64_t* region) {
    Matrix w(dim, dim);
    Vector x(dim);
    for (std::size_t i = 0; i < dim * dim; ++i) w.data()[i] = p[i];
    for (std::size_t i = 0; i < dim; ++i) x[i] = p[dim * dim + i];
    const Vector u = matvec(w, x);
    if (region != nullptr) {
      std::uint64_t h = 0xcbf29ce484222325ULL;
      for (std::size_t i = 0; i < dim; ++i) {
        const unsigned char bit = u[i] > 0.0 ? 1 : 0;
        h = fnv1a(&bit, 1, h);
      }
      *region = h;
    }
    double acc = 0.0;
    const Vector a = trelu(TReluParams{w}, x);
    for (std::size_t i = 0; i < dim; ++i) acc += c[i] * a[i];
    return acc;
  };

  // d/dwa = outer(c masked by u>0, z); d/dz = wa^T (masked c).
  const Vector u = matvec(wa, z);
  Vector masked(dim);
  for (std::size_t i = 0; i < dim; ++i) masked[i] = u[i] > 0.0 ? c[i] : 0.0;
  Matrix d_wa(dim, dim);
  add_outer(d_wa, masked, z);
  const Vector d_z = matvec_transposed(wa, masked);
  std::vector<double> analytic;
  analytic.insert(analytic.end(), d_wa.data().begin(), d_wa.data().end());
  analytic.insert(analytic.end(), d_z.data().begin(), d_z.data().end());

  const GradCheckReport r = grad_check(f, params, analytic, 1e-5, 1e-4);
  CHECK(r.pass);
  CHECK(r.checked > 0);
}

TEST_CASE("l2_normalize backward matches finite differences") {
  Rng rng = make_rng(13);
  const std::size_t dim = 5;
  const Vector c = random_vector(rng, dim);
  const Vector x0 = random_vector(rng, dim);

  const GradCheckFn f = [&](std::span<const double> p, std::uint64_t*) {
    Vector x(dim);
    for (std::size_t i = 0; i < dim; ++i) x[i] = p[i];
    const Vector y = l2_normalize(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) acc += c[i] * y[i];
    return acc;
  };
  const Vector analytic = l2_normalize_backward(x0, c);
  const GradCheckReport r =
      grad_check(f, x0.data(), analytic.data(), 1e-6, 1e-6);
  CHECK(r.pass);

  SUBCASE("zero input propagates zero gradient") {
    const Vector g = l2_normalize_backward(Vector(dim, 0.0), c);
    CHECK(g == Vector(dim, 0.0));
  }
}

TEST_CASE("vector/matrix helpers") {
  CHECK(concat({1.0, 2.0}, {3.0}) == Vector{1.0, 2.0, 3.0});
  CHECK(dot({1.0, 2.0}, {3.0, 4.0}) == 11.0);
  CHECK(norm2({3.0, 4.0}) == 5.0);
  const Vector vs[] = {{0.0, 2.0}, {2.0, 0.0}};
  CHECK(mean_of(vs) == Vector{1.0, 1.0});
  CHECK(cosine_similarity({1.0, 0.0}, {1.0, 0.0}) == doctest::Approx(1.0));
  CHECK(cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
  CHECK(cosine_similarity({0.0, 0.0}, {1.0, 0.0}) == 0.0);
  CHECK_THROWS_AS(mean_of(std::span<const Vector>{}), ContractViolation);
}
