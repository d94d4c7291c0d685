#include "maskdiff/losses.hpp"

#include <cmath>
#include <limits>

#include "maskdiff/sampler.hpp"

namespace maskdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double bregman_term(double s, double r) {
    if (r == 0.0) return s;
    if (s == 0.0) return kInf;
    return s - r - r * std::log(s / r);
}

void require_mask_free_support(const DenseDistribution& q0, const char* who) {
    const Vocab& v = q0.vocab();
    for (std::uint64_t ix = 0; ix < q0.size(); ++ix) {
        if (q0[ix] > 0.0 && mask_count(v, decode(v, ix)) > 0) {
            throw std::invalid_argument(std::string(who) + ": q0 puts mass on masked sequences");
        }
    }
}

void require_subset_cap(const Vocab& v, const char* who) {
    if (v.d > 12) throw std::invalid_argument(std::string(who) + ": subset enumeration capped at d <= 12");
    }

// C(d,k) for desk-scale d (exact in double well past d = 12)
double binomial(int d, int k) {
    double r = 1.0;
    for (int j = 1; j <= k; ++j) r = r * (d - k + j) / j;
    return r;
}

}  // namespace

double score_entropy_at(const DenseDistribution& q0, const Predictor& pred, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("score_entropy_at: need t > 0");
    const Vocab& v = q0.vocab();
    if (!(pred.vocab() == v)) throw std::invalid_argument("score_entropy_at: vocab mismatch");
    const DenseDistribution qt = marginal(q0, t);
    const double sigma = noise::sigma(t);
    const int M = v.mask_id();
    double acc = 0.0;
    for (std::uint64_t ix = 0; ix < qt.size(); ++ix) {
        const double w = qt[ix];
        if (w == 0.0) continue;
        const SequenceState x = decode(v, ix);
        double inner = 0.0;
        for (int i = 0; i < v.d; ++i) {
            if (x.tokens[i] != M) continue;
            const std::vector<double> m = pred.mu(x, i, t);
            for (int a = 0; a < v.S - 1; ++a) {
                const double s = sigma * m[static_cast<std::size_t>(a)];
                const double r = concrete_score_given(qt, x, i, a);
                inner += bregman_term(s, r);
            }
        }
        acc += w * inner;
    }
    return acc;
}

double integrated_score_entropy(const DenseDistribution& q0, const Predictor& pred,
                                const QuadratureSpec& quad) {
    const auto g = [&](double alpha) {
        return score_entropy_at(q0, pred, noise::alpha_inverse(alpha)) / alpha;
    };
    const QuadratureResult r = integrate_adaptive(g, quad);
    if (!r.converged) {
        throw std::runtime_error("integrated_score_entropy: quadrature did not converge (achieved |delta| = " +
                                 std::to_string(r.achieved) + ")");
    }
    return r.value;
}

double l_tv_error(const DenseDistribution& q0, const Predictor& pred, const StepSchedule& sched) {
    const Vocab& v = q0.vocab();
    if (!(pred.vocab() == v)) throw std::invalid_argument("l_tv_error: vocab mismatch");
    const int M = v.mask_id();
    double total = 0.0;
    for (int k = 0; k < sched.num_steps(); ++k) {
        const double tf = sched.T - sched.grid[static_cast<std::size_t>(k)];
        const double eta = sched.step(k);
        const DenseDistribution qt = marginal(q0, tf);
        const double sigma = noise::sigma(tf);
        double expect = 0.0;
        for (std::uint64_t ix = 0; ix < qt.size(); ++ix) {
            const double w = qt[ix];
            if (w == 0.0) continue;
            const SequenceState x = decode(v, ix);
            double inner = 0.0;
            for (int i = 0; i < v.d; ++i) {
                if (x.tokens[i] != M) continue;
                const std::vector<double> m = pred.mu(x, i, tf);
                for (int a = 0; a < v.S - 1; ++a) {
                    const double s = sigma * m[static_cast<std::size_t>(a)];
                    inner += std::abs(s - concrete_score_given(qt, x, i, a));
                }
            }
            expect += w * inner;
        }
        total += eta * expect;
    }
    return total;
}

double nelbo(const SequenceState& x0, const Predictor& pred, const QuadratureSpec& quad) {
    const Vocab& v = pred.vocab();
    validate_state(v, x0);
    if (mask_count(v, x0) != 0) throw std::invalid_argument("nelbo: x0 contains mask");
    require_subset_cap(v, "nelbo");
    const int d = v.d;
    const int M = v.mask_id();
    const std::uint64_t n_subsets = std::uint64_t{1} << d;
    // After the substitution alpha = e^{-t}, the masked-subset expansion of
    // the integrand is
    //   sum over nonempty subsets of (1-alpha)^{|Msk|-1} alpha^{d-|Msk|}
    //     * sum_{l in Msk} -log mu^l(x masked on Msk, t)[x0^l].
    const auto f = [&](double alpha) {
        const double t = noise::alpha_inverse(alpha);
        double acc = 0.0;
        for (std::uint64_t bits = 1; bits < n_subsets; ++bits) {
            SequenceState xm = x0;
            int k = 0;
            for (int i = 0; i < d; ++i) {
                if (bits & (std::uint64_t{1} << i)) {
                    xm.tokens[i] = M;
                    ++k;
                }
            }
            const double weight = std::pow(1.0 - alpha, k - 1) * std::pow(alpha, d - k);
            if (weight == 0.0) continue;
            double inner = 0.0;
            for (int l = 0; l < d; ++l) {
                if (!(bits & (std::uint64_t{1} << l))) continue;
                const double p = pred.mu(xm, l, t)[static_cast<std::size_t>(x0.tokens[l])];
                if (p <= 0.0) return kInf;
                inner -= std::log(p);
            }
            acc += weight * inner;
        }
        return acc;
    };
    const QuadratureResult r = integrate_adaptive(f, quad);
    if (!r.converged) {
        throw std::runtime_error("nelbo: quadrature did not converge (achieved |delta| = " +
                                 std::to_string(r.achieved) + ")");
    }
    return r.value;
}

double nelbo_discrete(const SequenceState& x0, const Predictor& pred) {
    const Vocab& v = pred.vocab();
    validate_state(v, x0);
    if (mask_count(v, x0) != 0) throw std::invalid_argument("nelbo_discrete: x0 contains mask");
    require_subset_cap(v, "nelbo_discrete");
    const int d = v.d;
    const int M = v.mask_id();
    const std::uint64_t n_subsets = std::uint64_t{1} << d;
    double total = 0.0;
    for (std::uint64_t bits = 1; bits < n_subsets; ++bits) {
        SequenceState xm = x0;
        int k = 0;
        for (int i = 0; i < d; ++i) {
            if (bits & (std::uint64_t{1} << i)) {
                xm.tokens[i] = M;
                ++k;
            }
        }
        double inner = 0.0;
        for (int l = 0; l < d; ++l) {
            if (!(bits & (std::uint64_t{1} << l))) continue;
            const double p = mu_bar(pred, xm, l)[static_cast<std::size_t>(x0.tokens[l])];
            if (p <= 0.0) return kInf;
            inner -= std::log(p);
        }
        total += inner / (k * binomial(d, k));
    }
    return total;
}

double conditional_entropy_sum(const DenseDistribution& q0) {
    const Vocab& v = q0.vocab();
    require_mask_free_support(q0, "conditional_entropy_sum");
    require_subset_cap(v, "conditional_entropy_sum");
    const int d = v.d;
    const std::uint64_t n = v.num_states();
    const std::uint64_t n_subsets = std::uint64_t{1} << d;
    double total = 0.0;
    for (std::uint64_t bits = 1; bits < n_subsets; ++bits) {
        int k = 0;
        for (int i = 0; i < d; ++i) {
            if (bits & (std::uint64_t{1} << i)) ++k;
        }
        const double weight = 1.0 / (k * binomial(d, k));
        for (int l = 0; l < d; ++l) {
            if (!(bits & (std::uint64_t{1} << l))) continue;
            // joint of (coordinate l, the complement's values); contexts are
            // keyed by zeroing out the subset's digits
            std::vector<double> ctx_mass;
            std::vector<std::vector<double>> cond;
            std::vector<std::int64_t> slot(n, -1);
            double expect = 0.0;
            for (std::uint64_t ix = 0; ix < n; ++ix) {
                if (q0[ix] == 0.0) continue;
                const SequenceState x = decode(v, ix);
                SequenceState key = x;
                for (int i = 0; i < d; ++i) {
                    if (bits & (std::uint64_t{1} << i)) key.tokens[i] = 0;
                }
                const std::uint64_t kix = encode(v, key);
                if (slot[kix] < 0) {
                    slot[kix] = static_cast<std::int64_t>(ctx_mass.size());
                    ctx_mass.push_back(0.0);
                    cond.emplace_back(static_cast<std::size_t>(v.S), 0.0);
                }
                ctx_mass[static_cast<std::size_t>(slot[kix])] += q0[ix];
                cond[static_cast<std::size_t>(slot[kix])][static_cast<std::size_t>(x.tokens[l])] += q0[ix];
            }
            for (std::size_t c = 0; c < ctx_mass.size(); ++c) {
                for (double& p : cond[c]) p /= ctx_mass[c];
                expect += ctx_mass[c] * entropy(cond[c]);
            }
            total += weight * expect;
        }
    }
    return total;
}

double prop2_identity_gap(const DenseDistribution& q0, const Predictor& pred,
                          const QuadratureSpec& quad) {
    require_mask_free_support(q0, "prop2_identity_gap");
    const Vocab& v = q0.vocab();
    const double lhs = integrated_score_entropy(q0, pred, quad);
    double mean_nelbo = 0.0;
    for (std::uint64_t ix = 0; ix < q0.size(); ++ix) {
        if (q0[ix] == 0.0) continue;
        mean_nelbo += q0[ix] * nelbo_discrete(decode(v, ix), pred);
    }
    const double rhs = mean_nelbo - conditional_entropy_sum(q0);
    return lhs - rhs;
}

nlohmann::json loss_report(const DenseDistribution& q0, const Predictor& pred,
                           const StepSchedule& sched, const QuadratureSpec& quad) {
    require_mask_free_support(q0, "loss_report");
    const Vocab& v = q0.vocab();
    nlohmann::json out;
    out["lse_integrated"] = integrated_score_entropy(q0, pred, quad);
    out["ltv"] = l_tv_error(q0, pred, sched);
    double mean_nelbo = 0.0;
    for (std::uint64_t ix = 0; ix < q0.size(); ++ix) {
        if (q0[ix] == 0.0) continue;
        mean_nelbo += q0[ix] * nelbo_discrete(decode(v, ix), pred);
    }
    out["nelbo_mean"] = mean_nelbo;
    const double hsum = conditional_entropy_sum(q0);
    out["entropy_sum"] = hsum;
    out["prop2_gap"] = out["lse_integrated"].get<double>() - (mean_nelbo - hsum);
    if (pred.time_independent()) {
        out["kl_fhs"] = kl(q0, fhs_exact_output(pred));
    } else {
        out["kl_fhs"] = nullptr;
    }
    return out;
}

}  // namespace maskdiff
