#pragma once

#include <json.hpp>

#include "maskdiff/distribution.hpp"
#include "maskdiff/predictor.hpp"
#include "maskdiff/quadrature.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

// Score-entropy loss at forward time t:
//   E_{x~q_t} sum over masked coordinates i and tokens a != mask of
//     s - r - r log(s/r)
// where s is the predicted score and r = q_t(x with i:=a)/q_t(x) the true
// one. Terms with r = 0 contribute s (the Bregman limit); s = 0 against
// r > 0 is +infinity.
double score_entropy_at(const DenseDistribution& q0, const Predictor& pred, double t);

// integral over t in (0, infinity) of score_entropy_at, computed under the
// substitution alpha = e^{-t}. Throws if the adaptive quadrature fails to
// reach the requested tolerance.
double integrated_score_entropy(const DenseDistribution& q0, const Predictor& pred,
                                const QuadratureSpec& quad = QuadratureSpec{});

// Grid-weighted total-variation score error:
//   sum_k eta_k E_{x ~ q_{T-t_k}} sum_{masked i, a != mask} |s - r|.
double l_tv_error(const DenseDistribution& q0, const Predictor& pred, const StepSchedule& sched);

// Continuous-time NELBO of a mask-free x0:
//   integral over t of (alpha_t/(1-alpha_t)) E_{x_t|x0} [ sum over masked l
//   of -log mu^l(x_t, t)[x0^l] ] dt,
// with the inner expectation enumerated exactly over masked subsets. The
// exact predictor of delta_{x0} scores 0.
double nelbo(const SequenceState& x0, const Predictor& pred,
             const QuadratureSpec& quad = QuadratureSpec{});

// Discrete form: sum_{k=1}^d (1/k) E_{uniform k-subsets M} [ sum_{l in M}
// -log mu_bar^l(x_M)[x0^l] ], equal to the continuous form for any
// predictor. Subset enumeration is capped at d <= 12.
double nelbo_discrete(const SequenceState& x0, const Predictor& pred);

// sum_{k=1}^d (1/k) E_{x0~q0} E_{uniform k-subsets M} sum_{l in M} of the
// entropy of the conditional of coordinate l given the complement's values.
double conditional_entropy_sum(const DenseDistribution& q0);

// LHS - RHS of the loss identity
//   integrated SE  =  E_{x0~q0}[NELBO(x0)] - conditional_entropy_sum(q0)
// for mask-free-supported q0; approximately zero for every predictor.
double prop2_identity_gap(const DenseDistribution& q0, const Predictor& pred,
                          const QuadratureSpec& quad = QuadratureSpec{});

// {"lse_integrated","ltv","nelbo_mean","entropy_sum","prop2_gap","kl_fhs"};
// kl_fhs is null for time-dependent predictors (no exact output law).
nlohmann::json loss_report(const DenseDistribution& q0, const Predictor& pred,
                           const StepSchedule& sched, const QuadratureSpec& quad = QuadratureSpec{});

}  // namespace maskdiff
