#pragma once

#include <iosfwd>
#include <optional>

#include "maskdiff/distribution.hpp"
#include "maskdiff/predictor.hpp"
#include "maskdiff/rng.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

// A step whose per-coordinate move mass eta * sum_a score exceeds 1 has a
// negative stay probability; clamping would corrupt convergence
// measurements, so this is an error.
class StepTooLargeError : public std::runtime_error {
  public:
    StepTooLargeError(int step_index, std::uint64_t state_index, int coordinate, double move_mass);
    int step_index;            // -1 when thrown outside a schedule loop
    std::uint64_t state_index;
    int coordinate;
    double move_mass;
};

// One Euler step from reverse time t_k with step size eta on horizon T:
// per-coordinate categorical kernels (length S each). Masked coordinates get
// P(a) = eta * score(x, i, a, T - t_k) and the remainder on the mask; an
// unmasked coordinate keeps its token with probability 1.
std::vector<std::vector<double>> euler_transition_row(const SequenceState& x, const Predictor& pred,
                                                      double t_k, double eta, double T,
                                                      int step_index_for_errors = -1);

// Exact distribution of the Euler sampler at reverse time T - delta: pushes
// the full p.m.f. through the product kernel at every grid step.
DenseDistribution euler_exact_output(const DenseDistribution& q_init, const Predictor& pred,
                                     const StepSchedule& sched);

// One Euler trajectory. Coordinates are updated by independent categorical
// draws (in coordinate order) at each grid step. If `log` is set, one JSON
// line {"step","time","state"} is written per step.
SequenceState euler_sample(const DenseDistribution& q_init, const Predictor& pred,
                           const StepSchedule& sched, std::uint64_t seed,
                           std::ostream* log = nullptr);

// One unmasking of a first-hitting trajectory at forward time tau.
struct FhsEvent {
    double tau = 0.0;
    int index = 0;
    int token = 0;
};

// First-hitting sampler: d unmasking events. With n masks left it draws
//   alpha_new = 1 - u^{1/n} * (1 - alpha_prev),  tau = -log(alpha_new),
// a uniformly random masked coordinate, and a token from mu(x, l, tau).
// If `log` is set, one JSON line {"step","tau","index","token"} per event.
std::pair<SequenceState, std::vector<FhsEvent>> fhs_sample(const Predictor& pred, std::uint64_t seed,
                                                           std::ostream* log = nullptr);

// Exact first-hitting output law for time-independent predictors, by dynamic
// programming over partial states: reveal a uniformly random masked
// coordinate, then a token from mu. Aggregates all d! reveal orders.
DenseDistribution fhs_exact_output(const Predictor& pred);

// Monte Carlo output histogram over `trials` runs; per-trial seeds are
// derive_seed(master_seed, trial).
DenseDistribution fhs_histogram(const Predictor& pred, long trials, std::uint64_t master_seed);
DenseDistribution euler_histogram(const DenseDistribution& q_init, const Predictor& pred,
                                  const StepSchedule& sched, long trials, std::uint64_t master_seed);

}  // namespace maskdiff
