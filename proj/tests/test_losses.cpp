#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "maskdiff/experiments.hpp"
#include "maskdiff/losses.hpp"
#include "maskdiff/sampler.hpp"
#include "test_support.hpp"

using namespace maskdiff;
using maskdiff::testing::DriftingPredictor;

TEST_CASE("score entropy vanishes for exact scores and has a closed form for two-point noise") {
    const Vocab v = make_vocab(3, 2);
    Rng rng(61);
    const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
    CHECK(score_entropy_at(q0, ExactPredictor(q0), 0.7) <= 1e-12);

    // singleton data, predictor leaking rho onto a second token:
    // loss at time t is e^{-t} * d * (-log(1-rho))
    const Vocab v1 = make_vocab(3, 1);
    const DenseDistribution da = DenseDistribution::delta(v1, SequenceState{{0}});
    const RhoCorruptedPredictor pred(v1, SequenceState{{0}}, SequenceState{{1}}, 0.3);
    for (const double t : {0.5, 1.5}) {
        CHECK(score_entropy_at(da, pred, t) ==
              doctest::Approx(std::exp(-t) * -std::log(0.7)).epsilon(1e-12));
    }

    // nonnegative for arbitrary predictors
    const MixtureCorruptedPredictor mix(std::make_shared<ExactPredictor>(q0),
                                        random_noise(v, rng), 0.4);
    for (const double t : {0.2, 1.0, 3.0}) CHECK(score_entropy_at(q0, mix, t) >= 0.0);
}

TEST_CASE("integrated score entropy of the two-point corruption") {
    const Vocab v = make_vocab(3, 3);
    const double rho = 1.0 - std::exp(-0.1);
    SequenceState a{{0, 0, 0}}, b{{1, 1, 1}};
    const DenseDistribution da = DenseDistribution::delta(v, a);
    const RhoCorruptedPredictor pred(v, a, b, rho);
    // integral of e^{-t} d (-log(1-rho)) = d * 0.1 = 0.3
    CHECK(integrated_score_entropy(da, pred) == doctest::Approx(0.3).epsilon(1e-8));
    CHECK(integrated_score_entropy(da, ExactPredictor(da)) <= 1e-10);
}

TEST_CASE("grid-weighted score error is linear in the mixture weight") {
    const Vocab v = make_vocab(3, 2);
    Rng rng(67);
    const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
    const StepSchedule sched = build_schedule(2.0, 0.05, 0.2, ScheduleKind::Decaying);
    CHECK(l_tv_error(q0, ExactPredictor(q0), sched) <= 1e-12);

    const std::vector<double> noise = random_noise(v, rng);
    auto base = std::make_shared<ExactPredictor>(q0);
    const double e1 = l_tv_error(q0, MixtureCorruptedPredictor(base, noise, 0.2), sched);
    const double e2 = l_tv_error(q0, MixtureCorruptedPredictor(base, noise, 0.4), sched);
    CHECK(e1 > 0.0);
    CHECK(e2 == doctest::Approx(2.0 * e1).epsilon(1e-9));
}

TEST_CASE("evidence bound vanishes at the attainable optimum and has a two-point closed form") {
    const Vocab v = make_vocab(3, 3);
    const SequenceState x0{{0, 1, 0}};
    const ExactPredictor opt(DenseDistribution::delta(v, x0));
    CHECK(nelbo(x0, opt) <= 1e-10);
    CHECK(nelbo_discrete(x0, opt) <= 1e-12);

    SequenceState a{{0, 0, 0}}, b{{1, 1, 1}};
    const RhoCorruptedPredictor rho(v, a, b, 0.3);
    CHECK(nelbo_discrete(a, rho) == doctest::Approx(-3.0 * std::log(0.7)).epsilon(1e-12));
    CHECK(nelbo(a, rho) == doctest::Approx(-3.0 * std::log(0.7)).epsilon(1e-7));
}

TEST_CASE("continuous and discrete evidence bounds agree for any predictor") {
    const Vocab v = make_vocab(3, 3);
    Rng rng(71);
    const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
    const MixtureCorruptedPredictor mix(std::make_shared<ExactPredictor>(q0),
                                        random_noise(v, rng), 0.35);
    const DriftingPredictor drifting(v);
    const SequenceState x0{{1, 0, 1}};
    CHECK(std::abs(nelbo(x0, mix) - nelbo_discrete(x0, mix)) <= 1e-6);
    CHECK(std::abs(nelbo(x0, drifting) - nelbo_discrete(x0, drifting)) <= 1e-6);
}

TEST_CASE("conditional entropy sum calibrates against factorized data") {
    const Vocab v = make_vocab(3, 3);
    CHECK(conditional_entropy_sum(DenseDistribution::delta(v, SequenceState{{0, 1, 0}})) == 0.0);

    // iid coordinates: d times the token entropy
    const std::vector<double> f = {0.3, 0.7, 0.0};
    std::vector<double> w(27, 0.0);
    for (std::uint64_t ix = 0; ix < 27; ++ix) {
        const SequenceState x = decode(v, ix);
        double p = 1.0;
        for (int i = 0; i < 3; ++i) p *= f[static_cast<std::size_t>(x.tokens[i])];
        w[ix] = p;
    }
    CHECK(conditional_entropy_sum(DenseDistribution(v, w)) ==
          doctest::Approx(3.0 * entropy({0.3, 0.7})).epsilon(1e-12));

    // uniform over mask-free states: d log(S-1)
    const Vocab v2 = make_vocab(3, 2);
    std::vector<double> u(9, 0.0);
    for (std::uint64_t ix = 0; ix < 9; ++ix) {
        if (mask_count(v2, decode(v2, ix)) == 0) u[ix] = 0.25;
    }
    CHECK(conditional_entropy_sum(DenseDistribution(v2, u)) ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

    // data with mask mass is outside the loss framework
    CHECK_THROWS_AS(conditional_entropy_sum(DenseDistribution::delta(v, all_mask_state(v))),
                    std::invalid_argument);
}

TEST_CASE("training loss equals mean evidence bound minus the entropy constant") {
    const Vocab v = make_vocab(3, 3);
    Rng rng(73);
    const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
    const MixtureCorruptedPredictor mix(std::make_shared<ExactPredictor>(q0),
                                        random_noise(v, rng), 0.45);
    CHECK(std::abs(prop2_identity_gap(q0, mix)) <= 1e-5);
    CHECK(std::abs(prop2_identity_gap(q0, ExactPredictor(q0))) <= 1e-5);
}

TEST_CASE("sampling gap is controlled by the integrated loss") {
    const Vocab v = make_vocab(3, 3);
    Rng rng(79);
    const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
    const MixtureCorruptedPredictor mix(std::make_shared<ExactPredictor>(q0),
                                        random_noise(v, rng), 0.3);
    const double klv = kl(q0, fhs_exact_output(mix));
    const double lse = integrated_score_entropy(q0, mix);
    CHECK(klv >= 0.0);
    CHECK(klv <= lse + 1e-6);
}

TEST_CASE("loss report summarizes every metric") {
    const Vocab v = make_vocab(3, 2);
    Rng rng(83);
    const DenseDistribution q0 = random_q0(v, rng, /*mask_free=*/true);
    const StepSchedule sched = build_schedule(2.0, 0.05, 0.25, ScheduleKind::Decaying);

    const MixtureCorruptedPredictor mix(std::make_shared<ExactPredictor>(q0),
                                        random_noise(v, rng), 0.2);
    const nlohmann::json r = loss_report(q0, mix, sched);
    for (const char* key :
         {"lse_integrated", "ltv", "nelbo_mean", "entropy_sum", "prop2_gap", "kl_fhs"}) {
        CHECK(r.contains(key));
    }
    CHECK(r.at("lse_integrated").get<double>() >= 0.0);
    CHECK(r.at("ltv").get<double>() >= 0.0);
    CHECK(!r.at("kl_fhs").is_null());
    CHECK(std::abs(r.at("prop2_gap").get<double>()) <= 1e-5);

    const nlohmann::json rd = loss_report(q0, DriftingPredictor(v), sched);
    CHECK(rd.at("kl_fhs").is_null());
}
