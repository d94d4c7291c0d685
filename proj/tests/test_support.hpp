#pragma once

#include <cmath>
#include <vector>

#include "maskdiff/predictor.hpp"

namespace maskdiff::testing {

// Strictly positive predictor whose output genuinely depends on the query
// time and on the visible context; exercises the time-dependent code paths
// (geometric Beta-averaging, quadrature of the evidence bound).
class DriftingPredictor final : public Predictor {
  public:
    explicit DriftingPredictor(Vocab v) : Predictor(v) {}

    std::vector<double> mu(const SequenceState& x, int i, double t) const override {
        check_query(x, i);
        double context = 0.0;
        for (int j = 0; j < vocab().d; ++j) context += x.tokens[j];
        // depend on time through the survival level e^{-t}, as a
        // noise-conditioned network would; this keeps the dependence smooth
        // at both ends of the horizon
        const double level = std::exp(-t);
        std::vector<double> w(static_cast<std::size_t>(vocab().S), 0.0);
        double total = 0.0;
        for (int a = 0; a + 1 < vocab().S; ++a) {
            const double logit = 0.8 * std::sin(3.0 * level + a) +
                                 0.3 * std::cos(2.0 * level * (a + 1) + i) + 0.07 * context;
            w[static_cast<std::size_t>(a)] = std::exp(logit);
            total += w[static_cast<std::size_t>(a)];
        }
        for (double& v : w) v /= total;
        return w;
    }

    bool time_independent() const override { return false; }
};

}  // namespace maskdiff::testing
