#include "maskdiff/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace maskdiff {

// Newton iteration on the Legendre polynomial P_n, seeded with the Chebyshev
// approximation to the k-th root. Symmetric pairs are filled together.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    const int m = (n + 1) / 2;
    for (int k = 0; k < m; ++k) {
        double x = std::cos(M_PI * (k + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // three-term recurrence for P_n(x) and derivative
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
}

double integrate_panels(const std::function<double(double)>& f,
                        const std::vector<double>& boundaries, int nodes_per_panel) {
    if (boundaries.size() < 2) throw std::invalid_argument("integrate_panels: need at least one panel");
    std::vector<double> x, w;
    gauss_legendre(nodes_per_panel, x, w);
    double total = 0.0;
    for (std::size_t p = 0; p + 1 < boundaries.size(); ++p) {
        const double a = boundaries[p], b = boundaries[p + 1];
        if (!(b > a)) throw std::invalid_argument("integrate_panels: boundaries must increase");
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        double acc = 0.0;
        for (int i = 0; i < nodes_per_panel; ++i) acc += w[i] * f(mid + half * x[i]);
        total += half * acc;
    }
    return total;
}

QuadratureResult integrate_adaptive(const std::function<double(double)>& f,
                                    const QuadratureSpec& spec) {
    QuadratureResult r;
    int n = spec.nodes_per_panel;
    double prev = integrate_panels(f, spec.panels, n);
    for (int round = 0; round < spec.max_doublings; ++round) {
        n *= 2;
        const double cur = integrate_panels(f, spec.panels, n);
        r.achieved = std::abs(cur - prev);
        r.value = cur;
        prev = cur;
        if (r.achieved < spec.abs_tol) {
            r.converged = true;
            return r;
        }
    }
    r.converged = false;
    return r;
}

}  // namespace maskdiff
