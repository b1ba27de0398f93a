#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <span>

namespace saga {

// Scalar objective used by the gradient checker. The optional out-parameter
// receives a hash of the piecewise-linear region the evaluation landed in
// (ReLU/tReLU sign pattern); entries whose +h/-h evaluations land in
// different regions straddle a kink and are excluded from the comparison.
using GradCheckFn =
    std::function<double(std::span<const double>, std::uint64_t* region)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::size_t worst_index = 0;
  bool pass = false;
};

// Compares an analytic gradient against central finite differences
//   (f(p + h e_j) - f(p - h e_j)) / (2h)
// entry by entry. Relative error uses max(|analytic|, |numeric|, 1e-3) as the
// denominator so near-zero gradients are compared absolutely.
GradCheckReport grad_check(const GradCheckFn& f, std::span<const double> params,
                           std::span<const double> analytic_grad, double step,
                           double tolerance);

// FNV-1a over raw bytes; used for kink signatures and parameter digests.
std::uint64_t fnv1a(const void* bytes, std::size_t size,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace saga
