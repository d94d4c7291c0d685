#include "maskdiff/sampler.hpp"

#include <cmath>
#include <ostream>

#include <json.hpp>

namespace maskdiff {

namespace {
std::string step_too_large_message(int step_index, std::uint64_t state_index, int coordinate,
                                   double move_mass) {
    return "Euler step too large: move mass " + std::to_string(move_mass) + " > 1 at state " +
           std::to_string(state_index) + ", coordinate " + std::to_string(coordinate) +
           (step_index >= 0 ? ", step " + std::to_string(step_index) : std::string());
}
}  // namespace

StepTooLargeError::StepTooLargeError(int step_index_, std::uint64_t state_index_, int coordinate_,
                                     double move_mass_)
    : std::runtime_error(step_too_large_message(step_index_, state_index_, coordinate_, move_mass_)),
      step_index(step_index_),
      state_index(state_index_),
      coordinate(coordinate_),
      move_mass(move_mass_) {}

std::vector<std::vector<double>> euler_transition_row(const SequenceState& x, const Predictor& pred,
                                                      double t_k, double eta, double T,
                                                      int step_index_for_errors) {
    if (!(eta > 0.0)) throw std::invalid_argument("euler_transition_row: need eta > 0");
    const Vocab& v = pred.vocab();
    validate_state(v, x);
    const double tf = T - t_k;  // forward time of the rate evaluation
    if (!(tf > 0.0)) throw std::invalid_argument("euler_transition_row: reverse time reaches the horizon");
    const int M = v.mask_id();
    const double sigma = noise::sigma(tf);
    std::vector<std::vector<double>> kernels(static_cast<std::size_t>(v.d));
    for (int i = 0; i < v.d; ++i) {
        std::vector<double>& ker = kernels[static_cast<std::size_t>(i)];
        ker.assign(static_cast<std::size_t>(v.S), 0.0);
        if (x.tokens[i] != M) {
            ker[static_cast<std::size_t>(x.tokens[i])] = 1.0;  // unmasked coordinates never move
            continue;
        }
        const std::vector<double> m = pred.mu(x, i, tf);
        double move_mass = 0.0;
        for (int a = 0; a < v.S - 1; ++a) {
            const double p = eta * sigma * m[static_cast<std::size_t>(a)];
            ker[static_cast<std::size_t>(a)] = p;
            move_mass += p;
        }
        if (move_mass > 1.0) {
            throw StepTooLargeError(step_index_for_errors, encode(v, x), i, move_mass);
        }
        ker[static_cast<std::size_t>(M)] = 1.0 - move_mass;
    }
    return kernels;
}

DenseDistribution euler_exact_output(const DenseDistribution& q_init, const Predictor& pred,
                                     const StepSchedule& sched) {
    const Vocab& v = pred.vocab();
    if (!(q_init.vocab() == v)) throw std::invalid_argument("euler_exact_output: vocab mismatch");
    const std::uint64_t n = v.num_states();
    const int M = v.mask_id();
    std::vector<double> cur = q_init.probs();
    std::vector<double> next(n);
    std::vector<std::uint64_t> strides(static_cast<std::size_t>(v.d));
    {
        std::uint64_t s = 1;
        for (int i = 0; i < v.d; ++i) {
            strides[static_cast<std::size_t>(i)] = s;
            s *= static_cast<std::uint64_t>(v.S);
        }
    }
    for (int k = 0; k < sched.num_steps(); ++k) {
        const double t_k = sched.grid[static_cast<std::size_t>(k)];
        const double eta = sched.step(k);
        std::fill(next.begin(), next.end(), 0.0);
        for (std::uint64_t ix = 0; ix < n; ++ix) {
            const double mass = cur[ix];
            if (mass == 0.0) continue;
            const SequenceState x = decode(v, ix);
            const auto kernels = euler_transition_row(x, pred, t_k, eta, sched.T, k);
            const std::vector<int> mi = masked_coordinates(v, x);
            const int m = static_cast<int>(mi.size());
            if (m == 0) {
                next[ix] += mass;
                continue;
            }
            // odometer over the S^m joint outcomes of the masked coordinates
            std::vector<int> combo(static_cast<std::size_t>(m), 0);
            while (true) {
                double w = mass;
                std::uint64_t iy = ix;
                for (int j = 0; j < m; ++j) {
                    const int c = combo[static_cast<std::size_t>(j)];
                    const int i = mi[static_cast<std::size_t>(j)];
                    w *= kernels[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                    if (c != M) iy -= strides[static_cast<std::size_t>(i)] * static_cast<std::uint64_t>(M - c);
                }
                if (w != 0.0) next[iy] += w;
                int j = 0;
                for (; j < m; ++j) {
                    if (++combo[static_cast<std::size_t>(j)] < v.S) break;
                    combo[static_cast<std::size_t>(j)] = 0;
                }
                if (j == m) break;
            }
        }
        cur.swap(next);
    }
    return DenseDistribution(v, std::move(cur), 1e-10);
}

SequenceState euler_sample(const DenseDistribution& q_init, const Predictor& pred,
                           const StepSchedule& sched, std::uint64_t seed, std::ostream* log) {
    const Vocab& v = pred.vocab();
    if (!(q_init.vocab() == v)) throw std::invalid_argument("euler_sample: vocab mismatch");
    Rng rng(seed);
    SequenceState x = decode(v, static_cast<std::uint64_t>(rng.categorical(q_init.probs())));
    for (int k = 0; k < sched.num_steps(); ++k) {
        const auto kernels = euler_transition_row(x, pred, sched.grid[static_cast<std::size_t>(k)],
                                                  sched.step(k), sched.T, k);
        SequenceState y = x;
        for (int i = 0; i < v.d; ++i) {
            if (x.tokens[i] != v.mask_id()) continue;
            y.tokens[i] = rng.categorical(kernels[static_cast<std::size_t>(i)]);
        }
        x = y;
        if (log) {
            nlohmann::json rec{{"step", k},
                               {"time", sched.grid[static_cast<std::size_t>(k + 1)]},
                               {"state", x.tokens}};
            *log << rec.dump() << '\n';
        }
    }
    return x;
}

std::pair<SequenceState, std::vector<FhsEvent>> fhs_sample(const Predictor& pred, std::uint64_t seed,
                                                           std::ostream* log) {
    const Vocab& v = pred.vocab();
    Rng rng(seed);
    SequenceState x = all_mask_state(v);
    std::vector<FhsEvent> events;
    events.reserve(static_cast<std::size_t>(v.d));
    double alpha_prev = 0.0;
    for (int n = v.d; n >= 1; --n) {
        const double u = rng.uniform_pos();
        const double alpha_new = 1.0 - std::pow(u, 1.0 / n) * (1.0 - alpha_prev);
        const double tau = noise::alpha_inverse(alpha_new);
        const std::vector<int> mi = masked_coordinates(v, x);
        const int l = mi[static_cast<std::size_t>(rng.uniform_index(n))];
        const int z = rng.categorical(pred.mu(x, l, tau));
        x.tokens[l] = z;
        events.push_back(FhsEvent{tau, l, z});
        alpha_prev = alpha_new;
        if (log) {
            nlohmann::json rec{{"step", v.d - n}, {"tau", tau}, {"index", l}, {"token", z}};
            *log << rec.dump() << '\n';
        }
    }
    return {std::move(x), std::move(events)};
}

DenseDistribution fhs_exact_output(const Predictor& pred) {
    if (!pred.time_independent()) {
        throw std::invalid_argument(
            "fhs_exact_output: time-dependent predictor (the reveal-order DP does not apply; "
            "use Monte Carlo)");
    }
    const Vocab& v = pred.vocab();
    const std::uint64_t n = v.num_states();
    const int M = v.mask_id();
    std::vector<std::uint64_t> strides(static_cast<std::size_t>(v.d));
    {
        std::uint64_t s = 1;
        for (int i = 0; i < v.d; ++i) {
            strides[static_cast<std::size_t>(i)] = s;
            s *= static_cast<std::uint64_t>(v.S);
        }
    }
    std::vector<double> cur(n, 0.0), next(n);
    cur[encode(v, all_mask_state(v))] = 1.0;
    for (int m = v.d; m >= 1; --m) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::uint64_t ix = 0; ix < n; ++ix) {
            const double mass = cur[ix];
            if (mass == 0.0) continue;
            const SequenceState x = decode(v, ix);
            const std::vector<int> mi = masked_coordinates(v, x);
            for (int i : mi) {
                const std::vector<double> mu = pred.mu(x, i, 1.0);
                const double pick = mass / static_cast<double>(m);
                for (int a = 0; a < v.S - 1; ++a) {
                    const double w = pick * mu[static_cast<std::size_t>(a)];
                    if (w == 0.0) continue;
                    next[ix - strides[static_cast<std::size_t>(i)] * static_cast<std::uint64_t>(M - a)] += w;
                }
            }
        }
        cur.swap(next);
    }
    return DenseDistribution(v, std::move(cur), 1e-10);
}

DenseDistribution fhs_histogram(const Predictor& pred, long trials, std::uint64_t master_seed) {
    if (trials < 1) throw std::invalid_argument("fhs_histogram: need trials >= 1");
    const Vocab& v = pred.vocab();
    std::vector<double> counts(v.num_states(), 0.0);
    for (long trial = 0; trial < trials; ++trial) {
        const auto [x, events] = fhs_sample(pred, derive_seed(master_seed, static_cast<std::uint64_t>(trial)));
        counts[encode(v, x)] += 1.0;
    }
    return DenseDistribution::from_weights(v, std::move(counts));
}

DenseDistribution euler_histogram(const DenseDistribution& q_init, const Predictor& pred,
                                  const StepSchedule& sched, long trials, std::uint64_t master_seed) {
    if (trials < 1) throw std::invalid_argument("euler_histogram: need trials >= 1");
    const Vocab& v = pred.vocab();
    std::vector<double> counts(v.num_states(), 0.0);
    for (long trial = 0; trial < trials; ++trial) {
        const SequenceState x =
            euler_sample(q_init, pred, sched, derive_seed(master_seed, static_cast<std::uint64_t>(trial)));
        counts[encode(v, x)] += 1.0;
    }
    return DenseDistribution::from_weights(v, std::move(counts));
}

}  // namespace maskdiff
