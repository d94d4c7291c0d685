#pragma once

#include <functional>
#include <vector>

namespace maskdiff {

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Composite Gauss-Legendre over the given panel boundaries.
double integrate_panels(const std::function<double(double)>& f,
                        const std::vector<double>& boundaries, int nodes_per_panel);

// Integration scheme for time integrals under the substitution alpha = e^{-t},
// which maps (0, infinity) to the finite interval (0, 1). Panels are graded
// toward alpha = 1 where integrands pick up (1-alpha)-type factors.
struct QuadratureSpec {
    std::vector<double> panels = {0.0, 0.5, 0.75, 0.875, 0.9375, 1.0};
    int nodes_per_panel = 32;
    double abs_tol = 1e-8;
    int max_doublings = 6;
};

struct QuadratureResult {
    double value = 0.0;
    double achieved = 0.0;  // |last change| under node doubling
    bool converged = false;
};

// Doubles nodes_per_panel until successive values differ by less than
// abs_tol (or the doubling budget runs out; the achieved change is reported
// either way).
QuadratureResult integrate_adaptive(const std::function<double(double)>& f,
                                    const QuadratureSpec& spec);

}  // namespace maskdiff
