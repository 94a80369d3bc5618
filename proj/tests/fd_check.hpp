// Central finite-difference gradient oracle used across the test suite.
// Kept independent of the tape: it only re-runs the forward closure.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mitas/tensor.hpp"

namespace testutil {

struct FdReport {
  bool ok = true;
  std::string worst_param;
  size_t worst_index = 0;
  double analytic = 0, numeric = 0, rel_err = 0;
  int checked = 0;
};

// forward() must recompute the scalar loss from current parameter values.
// Each parameter's analytic grad (already accumulated) is compared against
// (f(p+h) - f(p-h)) / 2h; passes if |a-n| < abs_tol or rel < rel_tol.
inline FdReport fd_check(
    const std::vector<std::pair<std::string, mitas::TensorPtr<double>>>& params,
    const std::function<double()>& forward, double h = 1e-6, double rel_tol = 1e-4,
    double abs_tol = 1e-8) {
  FdReport report;
  double worst = -1;
  for (const auto& [name, p] : params) {
    for (size_t i = 0; i < p->data.size(); ++i) {
      const double saved = p->data[i];
      p->data[i] = saved + h;
      const double fp = forward();
      p->data[i] = saved - h;
      const double fm = forward();
      p->data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max(std::abs(analytic), std::abs(numeric));
      const double rel = denom > 0 ? abs_err / denom : 0.0;
      ++report.checked;
      const bool pass = abs_err < abs_tol || rel < rel_tol;
      if (!pass && rel > worst) {
        worst = rel;
        report.ok = false;
        report.worst_param = name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
        report.rel_err = rel;
      }
    }
  }
  return report;
}

}  // namespace testutil
