#include "saga/grad_check.hpp"

#include <cmath>
#include <vector>

#include "saga/errors.hpp"

namespace saga {

std::uint64_t fnv1a(const void* bytes, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

GradCheckReport grad_check(const GradCheckFn& f, std::span<const double> params,
                           std::span<const double> analytic_grad, double step,
                           double tolerance) {
  if (params.size() != analytic_grad.size())
    throw ContractViolation("grad_check: gradient size mismatch");
  if (step <= 0.0) throw ContractViolation("grad_check: step must be > 0");

  std::vector<double> work(params.begin(), params.end());
  GradCheckReport report;
  for (std::size_t j = 0; j < work.size(); ++j) {
    const double saved = work[j];
    std::uint64_t region_plus = 0;
    std::uint64_t region_minus = 0;

    work[j] = saved + step;
    const double f_plus = f(work, &region_plus);
    work[j] = saved - step;
    const double f_minus = f(work, &region_minus);
    work[j] = saved;

    if (region_plus != region_minus) {
      ++report.skipped;
      continue;
    }

    const double numeric = (f_plus - f_minus) / (2.0 * step);
    const double analytic = analytic_grad[j];
    const double scale =
        std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
    const double rel = std::fabs(analytic - numeric) / scale;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = j;
    }
    ++report.checked;
  }
  report.pass = report.max_rel_err < tolerance && report.checked > 0;
  return report;
}

}  // namespace saga
