#include "maskdiff/predictor.hpp"

#include <cmath>

#include "maskdiff/quadrature.hpp"

namespace maskdiff {

void Predictor::check_query(const SequenceState& x, int i) const {
    validate_state(vocab_, x);
    if (i < 0 || i >= vocab_.d) throw std::invalid_argument("predictor: coordinate out of range");
    if (x.tokens[i] != vocab_.mask_id()) {
        throw std::invalid_argument("predictor: queried at an unmasked coordinate");
    }
}

double Predictor::score(const SequenceState& x, int i, int a, double t) const {
    if (!(t > 0.0)) throw std::invalid_argument("predictor score: need forward time t > 0");
    if (a < 0 || a >= vocab_.S || a == vocab_.mask_id()) {
        throw std::invalid_argument("predictor score: token must be non-mask");
    }
    return noise::sigma(t) * mu(x, i, t)[static_cast<std::size_t>(a)];
}

ExactPredictor::ExactPredictor(DenseDistribution q0) : Predictor(q0.vocab()), q0_(std::move(q0)) {}

std::vector<double> ExactPredictor::mu(const SequenceState& x, int i, double) const {
    check_query(x, i);
    return clean_conditional(q0_, x, i);
}

RhoCorruptedPredictor::RhoCorruptedPredictor(Vocab v, SequenceState a, SequenceState b, double rho)
    : Predictor(v), a_(std::move(a)), b_(std::move(b)), rho_(rho) {
    validate_state(v, a_);
    validate_state(v, b_);
    if (mask_count(v, a_) != 0 || mask_count(v, b_) != 0) {
        throw std::invalid_argument("rho predictor: a and b must be mask-free");
    }
    for (int i = 0; i < v.d; ++i) {
        if (a_.tokens[i] == b_.tokens[i]) {
            throw std::invalid_argument("rho predictor: a and b collide at coordinate " +
                                        std::to_string(i));
        }
    }
    if (!(rho > 0.0) || !(rho < 1.0)) throw std::invalid_argument("rho predictor: rho must be in (0,1)");
}

std::vector<double> RhoCorruptedPredictor::mu(const SequenceState& x, int i, double) const {
    check_query(x, i);
    std::vector<double> out(static_cast<std::size_t>(vocab().S), 0.0);
    out[static_cast<std::size_t>(a_.tokens[i])] = 1.0 - rho_;
    out[static_cast<std::size_t>(b_.tokens[i])] = rho_;
    return out;
}

MixtureCorruptedPredictor::MixtureCorruptedPredictor(std::shared_ptr<const Predictor> base,
                                                     std::vector<double> noise, double lambda)
    : Predictor(base->vocab()), base_(std::move(base)), lambda_(lambda) {
    const Vocab& v = vocab();
    if (!(lambda >= 0.0) || !(lambda <= 1.0)) {
        throw std::invalid_argument("mixture predictor: lambda must lie in [0,1]");
    }
    if (static_cast<int>(noise.size()) == v.S - 1) {
        noise.push_back(0.0);  // append the mask slot
    }
    if (static_cast<int>(noise.size()) != v.S) {
        throw std::invalid_argument("mixture predictor: noise must cover the non-mask tokens");
    }
    if (noise[static_cast<std::size_t>(v.mask_id())] != 0.0) {
        throw std::invalid_argument("mixture predictor: noise must put zero mass on the mask");
    }
    double total = 0.0;
    for (double p : noise) {
        if (!(p >= 0.0)) throw std::invalid_argument("mixture predictor: negative noise entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("mixture predictor: noise must be normalized");
    }
    noise_ = std::move(noise);
}

std::vector<double> MixtureCorruptedPredictor::mu(const SequenceState& x, int i, double t) const {
    std::vector<double> out = base_->mu(x, i, t);
    for (std::size_t a = 0; a < out.size(); ++a) {
        out[a] = (1.0 - lambda_) * out[a] + lambda_ * noise_[a];
    }
    return out;
}

std::vector<double> mu_bar(const Predictor& pred, const SequenceState& x, int i) {
    const Vocab& v = pred.vocab();
    const int k = mask_count(v, x);
    if (k < 1) throw std::invalid_argument("mu_bar: state has no masked coordinates");
    if (pred.time_independent()) {
        return pred.mu(x, i, 1.0);
    }
    // Beta(d-k+1, k) weights for the survival level alpha' at the reveal of
    // one of k masked slots out of d.
    const int d = v.d;
    const double log_norm =
        std::lgamma(static_cast<double>(d + 1)) - std::lgamma(static_cast<double>(d - k + 1)) -
        std::lgamma(static_cast<double>(k));
    std::vector<double> nodes, weights;
    gauss_legendre(64, nodes, weights);
    std::vector<double> log_acc(static_cast<std::size_t>(v.S), 0.0);
    std::vector<bool> dead(static_cast<std::size_t>(v.S), false);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        const double ap = 0.5 * (nodes[j] + 1.0);  // alpha' in (0,1)
        const double w = 0.5 * weights[j];
        const double pdf = std::exp(log_norm + (d - k) * std::log(ap) + (k - 1) * std::log(1.0 - ap));
        const double t = noise::alpha_inverse(ap);
        const std::vector<double> m = pred.mu(x, i, t);
        for (std::size_t a = 0; a < m.size(); ++a) {
            if (m[a] <= 0.0) {
                dead[a] = true;
            } else {
                log_acc[a] += w * pdf * std::log(m[a]);
            }
        }
    }
    std::vector<double> out(static_cast<std::size_t>(v.S), 0.0);
    for (std::size_t a = 0; a < out.size(); ++a) {
        if (static_cast<int>(a) == v.mask_id() || dead[a]) continue;
        out[a] = std::exp(log_acc[a]);
    }
    return out;
}

Generator build_estimated_reverse_generator(const Predictor& pred, double s, double T) {
    if (!(s >= 0.0) || !(s < T)) {
        throw std::invalid_argument("build_estimated_reverse_generator: need 0 <= s < T");
    }
    const Vocab& v = pred.vocab();
    const double tf = T - s;
    Generator g = make_zero_generator(v, tf);
    const std::uint64_t n = v.num_states();
    const int M = v.mask_id();
    const double sigma = noise::sigma(tf);
    for (std::uint64_t ix = 0; ix < n; ++ix) {
        const SequenceState x = decode(v, ix);
        double out_rate = 0.0;
        std::uint64_t stride = 1;
        for (int i = 0; i < v.d; ++i) {
            if (x.tokens[i] == M) {
                const std::vector<double> m = pred.mu(x, i, tf);
                for (int a = 0; a < v.S - 1; ++a) {
                    const double r = sigma * m[static_cast<std::size_t>(a)];
                    if (r != 0.0) {
                        g.at(ix, ix - stride * static_cast<std::uint64_t>(M - a)) = r;
                        out_rate += r;
                    }
                }
            }
            stride *= static_cast<std::uint64_t>(v.S);
        }
        g.at(ix, ix) = -out_rate;
    }
    return g;
}

std::shared_ptr<const Predictor> predictor_from_json(const nlohmann::json& spec, const Vocab& v,
                                                     const DenseDistribution* q0) {
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "exact") {
        if (!q0) throw std::invalid_argument("predictor config: exact predictor needs a q0");
        return std::make_shared<ExactPredictor>(*q0);
    }
    if (kind == "rho") {
        SequenceState a{spec.at("a").get<std::vector<int>>()};
        SequenceState b{spec.at("b").get<std::vector<int>>()};
        return std::make_shared<RhoCorruptedPredictor>(v, std::move(a), std::move(b),
                                                       spec.at("rho").get<double>());
    }
    if (kind == "mixture") {
        std::shared_ptr<const Predictor> base;
        if (spec.contains("base")) {
            base = predictor_from_json(spec.at("base"), v, q0);
        } else {
            if (!q0) throw std::invalid_argument("predictor config: mixture base defaults to exact and needs a q0");
            base = std::make_shared<ExactPredictor>(*q0);
        }
        std::vector<double> noise;
        if (spec.contains("noise")) {
            noise = spec.at("noise").get<std::vector<double>>();
        } else {
            noise.assign(static_cast<std::size_t>(v.S - 1), 1.0 / (v.S - 1));
        }
        return std::make_shared<MixtureCorruptedPredictor>(std::move(base), std::move(noise),
                                                           spec.at("lambda").get<double>());
    }
    throw std::invalid_argument("predictor config: unknown kind \"" + kind +
                                "\" (expected exact | rho | mixture)");
}

}  // namespace maskdiff
