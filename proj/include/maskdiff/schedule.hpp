#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace maskdiff {

// Exponential noise schedule alpha_t = e^{-t}: the survival probability of a
// token at forward time t. beta_t = 1 (unit jump intensity).
namespace noise {
inline double alpha(double t) { return std::exp(-t); }
inline double alpha_inverse(double a) {
    if (!(a > 0.0) || a > 1.0) throw std::invalid_argument("alpha_inverse: argument must be in (0,1]");
    return -std::log(a);
}
// alpha_t / (1 - alpha_t): the per-site total unmasking rate at forward time t.
inline double sigma(double t) {
    const double a = alpha(t);
    return a / (1.0 - a);
}
}  // namespace noise

enum class ScheduleKind { Constant, Decaying };

// Reverse-time discretization grid t_0 = 0 < ... < t_N = T - delta.
// Step k runs from t_k to t_{k+1}; rates are evaluated at forward time T - t_k.
struct StepSchedule {
    double T = 0.0;      // horizon
    double delta = 0.0;  // early-stop margin
    double kappa = 0.0;  // granularity
    ScheduleKind kind = ScheduleKind::Constant;
    std::vector<double> grid;  // N+1 points

    int num_steps() const { return static_cast<int>(grid.size()) - 1; }
    double step(int k) const { return grid[k + 1] - grid[k]; }
};

// constant: equal steps kappa with a final partial step landing on T - delta.
// decaying: t_{k+1} - t_k = kappa * min(1, T - t_k), clipped at T - delta;
// requires delta > 0 (otherwise the grid never terminates).
StepSchedule build_schedule(double T, double delta, double kappa, ScheduleKind kind);

}  // namespace maskdiff
