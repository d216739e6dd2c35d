#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "sctkg/params.hpp"

namespace sctkg::test {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;

  bool ok(double tol) const { return max_rel_err < tol; }
};

// Central-difference check of every element of every parameter against the
// analytic gradients already accumulated in store.grad. `loss` re-evaluates
// the scalar objective from the store's current values and must be
// deterministic.
inline GradCheckResult finite_diff_check(ParamStore& store,
                                         const std::function<double()>& loss,
                                         double h = 1e-5) {
  GradCheckResult result;
  for (int p = 0; p < store.count(); ++p) {
    Mat& value = store.value(p);
    const Mat analytic = store.grad(p);
    for (Eigen::Index c = 0; c < value.cols(); ++c) {
      for (Eigen::Index r = 0; r < value.rows(); ++r) {
        const double original = value(r, c);
        value(r, c) = original + h;
        const double up = loss();
        value(r, c) = original - h;
        const double down = loss();
        value(r, c) = original;
        const double fd = (up - down) / (2.0 * h);
        const double a = analytic(r, c);
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
        const double rel = std::abs(a - fd) / denom;
        if (rel > result.max_rel_err) {
          result.max_rel_err = rel;
          result.worst = store.name(p) + "(" + std::to_string(r) + "," +
                         std::to_string(c) + ") analytic=" + std::to_string(a) +
                         " fd=" + std::to_string(fd);
        }
      }
    }
  }
  return result;
}

}  // namespace sctkg::test
