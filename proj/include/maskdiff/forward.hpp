#pragma once

#include <functional>
#include <iosfwd>

#include "maskdiff/distribution.hpp"
#include "maskdiff/schedule.hpp"
#include "maskdiff/state.hpp"

namespace maskdiff {

// Dense rate matrix over the S^d state space. rate(x,y) for x != y is the
// jump intensity x -> y; diagonals make rows sum to zero.
struct Generator {
    Vocab vocab;
    double time_tag = 0.0;  // forward time the rates were evaluated at
    std::vector<double> rates;  // row-major, n x n

    double at(std::uint64_t row, std::uint64_t col) const {
        return rates[row * vocab.num_states() + col];
    }
    double& at(std::uint64_t row, std::uint64_t col) {
        return rates[row * vocab.num_states() + col];
    }
};

Generator make_zero_generator(const Vocab& v, double time_tag = 0.0);

// Throws unless off-diagonals are >= 0 and every row sums to 0 within tol.
void validate_generator(const Generator& g, double tol = 1e-10);

// Closed-form forward conditional q_{t|0}(x | x0) of the absorbing chain:
// each non-mask coordinate of x0 independently survives with probability
// e^{-t} or is replaced by the mask; mask coordinates of x0 stay masked.
double forward_cond_prob(const Vocab& v, const SequenceState& x, const SequenceState& x0, double t);

// q_t = law of the forward chain at time t started from q0 (exact).
DenseDistribution marginal(const DenseDistribution& q0, double t);

// q_0^i(a | x^{UM}): condition q0 on agreement with x at all unmasked
// coordinates, marginalize coordinate i, renormalize over non-mask tokens.
// Returns a length-S vector with zero mass at the mask id.
// Coordinate i must be masked in x and the conditioning event must have
// positive probability.
std::vector<double> clean_conditional(const DenseDistribution& q0, const SequenceState& x, int i);

// q_t(x with coordinate i set to a) / q_t(x): the concrete score of the
// single-coordinate unmasking move. Requires x^i = mask, a != mask, t > 0.
double concrete_score(const DenseDistribution& q0, const SequenceState& x, int i, int a, double t);

// Same ratio evaluated against a precomputed marginal q_t (avoids
// recomputing the marginal inside loops over (x, i, a)).
double concrete_score_given(const DenseDistribution& qt, const SequenceState& x, int i, int a);

// Forward generator: token-level absorbing rates 1_S e_mask^T - I_S applied
// coordinate-wise; only single-coordinate moves into the mask have rate 1.
Generator build_forward_generator(const Vocab& v);

// Time-reversal rates at reverse time s on horizon T: for masked coordinate i
// and token a, rate(x -> x with i:=a) = q_{T-s}(y)/q_{T-s}(x). States with
// q_{T-s}(x) = 0 are unreachable and get zero rows.
Generator build_reverse_generator(const DenseDistribution& q0, double s, double T);

// Kolmogorov-forward propagation of p from t0 to t1 under a time-dependent
// generator, by uniformization with rates frozen at each substep midpoint.
// The Poisson series is truncated once its tail mass drops below 1e-15
// (comfortably under the 1e-13 budget); the result is renormalized.
DenseDistribution ctmc_propagate(const DenseDistribution& p,
                                 const std::function<Generator(double)>& gen, double t0,
                                 double t1, int substeps = 64);

// The gamma-perturbed singleton target: the forward marginal of delta_a at
// time gamma. Every coordinate independently keeps a^i with probability
// e^{-gamma} or is masked.
DenseDistribution construct_q_gamma(const Vocab& v, const SequenceState& a, double gamma);

// min over coordinates i and contexts x^{-i} with positive marginal mass of
//   q_0^i(mask | x^{-i}) / max_{a != mask} q_0^i(a | x^{-i}).
// Returns 0 as soon as some admissible conditional puts no mass on the mask;
// contexts whose conditional is entirely mask (denominator 0) do not
// constrain the minimum.
double compute_gamma_ratio(const DenseDistribution& q0);

// Debug dump: "row,col,rate" lines for every nonzero entry.
void generator_to_csv(const Generator& g, std::ostream& os);

}  // namespace maskdiff
