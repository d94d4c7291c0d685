// End-to-end verification gate. Each test prints one [PASS]/[FAIL] line for
// the claim it checks; tolerances are pinned here and not configurable.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "maskdiff/experiments.hpp"
#include "maskdiff/forward.hpp"
#include "maskdiff/losses.hpp"
#include "maskdiff/sampler.hpp"
#include "test_support.hpp"

using namespace maskdiff;
using maskdiff::testing::DriftingPredictor;

namespace {

constexpr std::uint64_t kSeed = 20240901;

void verdict(const char* name, bool ok, const std::string& detail = "") {
    std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name, detail.empty() ? "" : "  ",
                detail.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(ok, name, " ", detail);
}

bool table_assertions_pass(const ResultTable& t, std::string& detail) {
    int failed = 0;
    for (const auto& a : t.assertions) {
        if (!a.pass) {
            ++failed;
            if (detail.empty()) detail = "first failure: " + a.name + " (" + a.detail + ")";
        }
    }
    if (failed > 0) detail += " [" + std::to_string(failed) + " failed]";
    return failed == 0;
}

}  // namespace

TEST_CASE("first-hitting sampler reproduces the data law exactly") {
    bool ok = true;
    std::string detail;
    try {
        const std::pair<int, int> shapes[] = {{2, 1}, {3, 2}, {3, 3}, {4, 4}, {4, 2},
                                              {2, 4}, {3, 4}, {2, 2}, {4, 3}, {3, 1}};
        double worst = 0.0;
        for (std::uint64_t j = 0; j < 10; ++j) {
            const Vocab v = make_vocab(shapes[j].first, shapes[j].second);
            Rng rng(derive_seed(kSeed, j));
            const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
            worst = std::max(worst, kl(q0, fhs_exact_output(ExactPredictor(q0))));
        }
        ok = worst <= 1e-10;
        detail = "max KL over 10 data laws = " + std::to_string(worst);
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("first-hitting-exactness", ok, detail);
}

TEST_CASE("two-point corruption meets its KL budget exactly") {
    bool ok = true;
    std::string detail;
    try {
        for (const int d : {1, 2, 3}) {
            const Vocab v = make_vocab(3, d);
            const double rho = 1.0 - std::exp(-0.3 / d);
            const SequenceState a{std::vector<int>(static_cast<std::size_t>(d), 0)};
            const SequenceState b{std::vector<int>(static_cast<std::size_t>(d), 1)};
            const DenseDistribution da = DenseDistribution::delta(v, a);
            const RhoCorruptedPredictor pred(v, a, b, rho);
            const double klv = kl(da, fhs_exact_output(pred));
            const double lse = integrated_score_entropy(da, pred);
            if (std::abs(klv - 0.3) > 1e-9 || std::abs(lse - 0.3) > 1e-6) {
                ok = false;
                detail = "d=" + std::to_string(d) + ": kl=" + std::to_string(klv) +
                         " lse=" + std::to_string(lse);
            }
        }
        if (ok) detail = "kl and integrated loss both equal 0.3 for d=1,2,3";
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("first-hitting-kl-tightness", ok, detail);
}

TEST_CASE("sampling KL never exceeds the integrated loss") {
    bool ok = true;
    std::string detail;
    try {
        const Vocab v = make_vocab(3, 3);
        double max_violation = -1.0;
        for (std::uint64_t j = 0; j < 20; ++j) {
            Rng rng(derive_seed(kSeed, 100 + j));
            const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
            const double lambda = 0.05 + 0.55 * rng.uniform();
            const MixtureCorruptedPredictor pred(std::make_shared<ExactPredictor>(q0),
                                                 random_noise(v, rng), lambda);
            const double klv = kl(q0, fhs_exact_output(pred));
            const double lse = integrated_score_entropy(q0, pred);
            max_violation = std::max(max_violation, klv - lse);
        }
        ok = max_violation <= 1e-6;
        detail = "max(kl - integrated loss) over 20 pairs = " + std::to_string(max_violation);
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("kl-bounded-by-integrated-loss", ok, detail);
}

TEST_CASE("integrated loss equals mean evidence bound minus the entropy constant") {
    bool ok = true;
    std::string detail;
    try {
        const Vocab v = make_vocab(3, 3);
        double worst_gap = 0.0;
        for (std::uint64_t j = 0; j < 20; ++j) {
            Rng rng(derive_seed(kSeed, 200 + j));
            const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
            const double lambda = 0.05 + 0.65 * rng.uniform();
            const MixtureCorruptedPredictor pred(std::make_shared<ExactPredictor>(q0),
                                                 random_noise(v, rng), lambda);
            worst_gap = std::max(worst_gap, std::abs(prop2_identity_gap(q0, pred)));
        }
        ok = worst_gap <= 1e-5;
        detail = "max |identity gap| over 20 pairs = " + std::to_string(worst_gap);

        // at exact scores the loss is zero and the bound sits at the constant
        for (std::uint64_t j = 0; j < 3; ++j) {
            Rng rng(derive_seed(kSeed, 250 + j));
            const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
            const ExactPredictor pred(q0);
            const double lse = integrated_score_entropy(q0, pred);
            double mean_nelbo = 0.0;
            for (std::uint64_t ix = 0; ix < q0.size(); ++ix) {
                if (q0[ix] > 0.0) mean_nelbo += q0[ix] * nelbo_discrete(decode(v, ix), pred);
            }
            const double opt_gap = std::abs(mean_nelbo - conditional_entropy_sum(q0));
            if (lse > 1e-10 || opt_gap > 1e-8) {
                ok = false;
                detail += "; exact-score case " + std::to_string(j) +
                          ": lse=" + std::to_string(lse) + " gap=" + std::to_string(opt_gap);
            }
        }
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("loss-identity", ok, detail);
}

TEST_CASE("terminal mask probability matches the per-step product formula") {
    bool ok = true;
    std::string detail;
    try {
        const Vocab v = make_vocab(3, 3);
        const SequenceState a{{0, 0, 0}};
        const ExactPredictor pred(DenseDistribution::delta(v, a));
        const DenseDistribution init = DenseDistribution::delta(v, all_mask_state(v));
        // run on horizon T + gamma and stop gamma early, so the grid covers
        // [0, T] and every step is a full kappa
        const double T = 2.0, gamma = 0.25;
        double worst = 0.0;
        for (const double kappa : {0.1, 0.05}) {
            const StepSchedule s = build_schedule(T + gamma, gamma, kappa, ScheduleKind::Constant);
            const DenseDistribution p = euler_exact_output(init, pred, s);
            double pm = 1.0;
            for (int k = 0; k < s.num_steps(); ++k) {
                pm *= 1.0 - s.step(k) / std::expm1(T + gamma - s.grid[static_cast<std::size_t>(k)]);
            }
            for (int i = 0; i < v.d; ++i) {
                double observed = 0.0;
                for (std::uint64_t ix = 0; ix < p.size(); ++ix) {
                    if (decode(v, ix).tokens[i] == v.mask_id()) observed += p[ix];
                }
                worst = std::max(worst, std::abs(observed - pm));
            }
        }
        ok = worst <= 1e-10;
        detail = "max |observed - formula| = " + std::to_string(worst);
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("euler-mask-probability-closed-form", ok, detail);
}

TEST_CASE("euler error shrinks linearly in the step size") {
    bool ok = true;
    std::string detail;
    try {
        const ResultTable t = run_experiment({{"experiment", "euler_scaling"}, {"seed", kSeed}});
        double slope = 0.0;
        bool found = false;
        for (const auto& r : t.rows) {
            if (r.point == "fit" && r.metric == "loglog_slope") {
                slope = r.value;
                found = true;
            }
        }
        ok = found && slope >= 0.8 && slope <= 1.2 && table_assertions_pass(t, detail);
        detail = "log-log slope = " + std::to_string(slope) +
                 (detail.empty() ? "" : "; " + detail);
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("euler-convergence-rate", ok, detail);
}

TEST_CASE("sampling error decomposes into start mismatch plus rate mismatch") {
    bool ok = true;
    std::string detail;
    try {
        const ResultTable t =
            run_experiment({{"experiment", "thm1_decomposition"}, {"seed", kSeed}});
        ok = table_assertions_pass(t, detail);
        if (ok) detail = "bound holds on 10 corrupted instances plus both calibration runs";
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("sampling-error-decomposition", ok, detail);
}

TEST_CASE("forward marginal absorbs at the closed-form rate") {
    bool ok = true;
    std::string detail;
    try {
        const Vocab v = make_vocab(3, 3);
        const DenseDistribution target = DenseDistribution::delta(v, all_mask_state(v));
        double worst_dev = 0.0;
        for (const double T : {2.0, 4.0}) {
            for (std::uint64_t rep = 0; rep < 5; ++rep) {
                Rng rng(derive_seed(kSeed, 300 + rep));
                const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/false);
                double expected = 1.0;
                const double c = 1.0 - std::exp(-T);
                for (std::uint64_t ix = 0; ix < q0.size(); ++ix) {
                    if (q0[ix] == 0.0) continue;
                    expected -= q0[ix] * std::pow(c, v.d - mask_count(v, decode(v, ix)));
                }
                const double gap = tv(marginal(q0, T), target);
                worst_dev = std::max(worst_dev, std::abs(gap - expected));
                if (gap > v.d * std::exp(-T)) {
                    ok = false;
                    detail = "envelope violated at T=" + std::to_string(T);
                }
            }
        }
        if (worst_dev > 1e-12) ok = false;
        if (detail.empty()) {
            detail = "max |distance - closed form| = " + std::to_string(worst_dev) +
                     " over 5 data laws at T=2 and T=4";
        }
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("forward-absorption-distance", ok, detail);
}

TEST_CASE("unmasking times follow the order-statistic law for any predictor") {
    bool ok = true;
    std::string detail;
    try {
        const ResultTable t =
            run_experiment({{"experiment", "beta_marginals"}, {"seed", kSeed}, {"trials", 100000}});
        ok = table_assertions_pass(t, detail);
        if (ok) detail = "all moment and decoupling z-scores within tolerance at 10^5 trials";
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("unmasking-time-law", ok, detail);
}

TEST_CASE("independent oracles agree across implementation paths") {
    bool ok = true;
    std::string detail;
    try {
        // closed-form forward marginal vs generic uniformization
        const Vocab v = make_vocab(3, 3);
        Rng rng(derive_seed(kSeed, 400));
        const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/false);
        const Generator g = build_forward_generator(v);
        const auto gen = [&](double) { return g; };
        double worst_fwd = 0.0;
        for (const double t : {0.1, 1.0, 3.0}) {
            worst_fwd = std::max(worst_fwd, tv(marginal(q0, t), ctmc_propagate(q0, gen, 0.0, t, 64)));
        }
        if (worst_fwd > 1e-8) {
            ok = false;
            detail = "forward marginal vs uniformization: tv=" + std::to_string(worst_fwd);
        }

        // exact output laws vs monte-carlo histograms
        const Vocab v2 = make_vocab(3, 2);
        Rng rng2(derive_seed(kSeed, 401));
        const DenseDistribution q2 = random_q0(v2, rng2, /*mask_free=*/true);
        const ExactPredictor pred(q2);
        const long trials = 100000;
        const double tv_fhs = tv(fhs_histogram(pred, trials, derive_seed(kSeed, 402)),
                                 fhs_exact_output(pred));
        const DenseDistribution init = DenseDistribution::delta(v2, all_mask_state(v2));
        const StepSchedule sched = build_schedule(2.0, 0.05, 0.2, ScheduleKind::Decaying);
        const double tv_euler =
            tv(euler_histogram(init, pred, sched, trials, derive_seed(kSeed, 403)),
               euler_exact_output(init, pred, sched));
        if (tv_fhs > 0.02 || tv_euler > 0.02) {
            ok = false;
            detail += " monte-carlo vs exact: fhs=" + std::to_string(tv_fhs) +
                      " euler=" + std::to_string(tv_euler);
        }

        // continuous vs discrete evidence bound, including a time-dependent net
        Rng rng3(derive_seed(kSeed, 404));
        const Vocab v3 = make_vocab(3, 3);
        const DenseDistribution q3 = random_q0(v3, rng3, /*mask_free=*/true);
        const MixtureCorruptedPredictor mix(std::make_shared<ExactPredictor>(q3),
                                            random_noise(v3, rng3), 0.4);
        const DriftingPredictor drift(v3);
        const SequenceState x0{{0, 1, 0}};
        const double gap_mix = std::abs(nelbo(x0, mix) - nelbo_discrete(x0, mix));
        const double gap_drift = std::abs(nelbo(x0, drift) - nelbo_discrete(x0, drift));
        if (gap_mix > 1e-6 || gap_drift > 1e-6) {
            ok = false;
            detail += " evidence-bound forms: mix=" + std::to_string(gap_mix) +
                      " drifting=" + std::to_string(gap_drift);
        }

        if (ok) {
            detail = "marginals, sampler histograms, and both evidence-bound forms agree";
        }
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    verdict("independent-oracle-agreement", ok, detail);
}
