#include "maskdiff/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace maskdiff {

Generator make_zero_generator(const Vocab& v, double time_tag) {
    const std::uint64_t n = v.num_states();
    if (n > kGeneratorStateLimit) {
        throw std::invalid_argument("generator: S^d exceeds the dense-generator limit");
    }
    Generator g;
    g.vocab = v;
    g.time_tag = time_tag;
    g.rates.assign(n * n, 0.0);
    return g;
}

void validate_generator(const Generator& g, double tol) {
    const std::uint64_t n = g.vocab.num_states();
    if (g.rates.size() != n * n) throw std::invalid_argument("generator: bad matrix size");
    for (std::uint64_t r = 0; r < n; ++r) {
        double row_sum = 0.0;
        for (std::uint64_t c = 0; c < n; ++c) {
            const double v = g.at(r, c);
            if (r != c && v < 0.0) throw std::invalid_argument("generator: negative off-diagonal rate");
            row_sum += v;
        }
        if (std::abs(row_sum) > tol) {
            throw std::invalid_argument("generator: row " + std::to_string(r) +
                                        " sums to " + std::to_string(row_sum));
        }
    }
}

double forward_cond_prob(const Vocab& v, const SequenceState& x, const SequenceState& x0, double t) {
    validate_state(v, x);
    validate_state(v, x0);
    if (t < 0.0) throw std::invalid_argument("forward_cond_prob: negative time");
    const double a = noise::alpha(t);
    const int M = v.mask_id();
    double p = 1.0;
    for (int i = 0; i < v.d; ++i) {
        if (x0.tokens[i] == M) {
            if (x.tokens[i] != M) return 0.0;  // the mask never leaves
            // masked coordinate stays masked with probability 1
        } else if (x.tokens[i] == M) {
            p *= 1.0 - a;  // absorbed by time t
        } else if (x.tokens[i] == x0.tokens[i]) {
            p *= a;  // survived
        } else {
            return 0.0;  // the chain never relabels a token
        }
    }
    return p;
}

DenseDistribution marginal(const DenseDistribution& q0, double t) {
    if (t < 0.0) throw std::invalid_argument("marginal: negative time");
    const Vocab& v = q0.vocab();
    const std::uint64_t n = v.num_states();
    const double a = noise::alpha(t);
    const int M = v.mask_id();
    // Apply the per-coordinate absorbing kernel one axis at a time.
    std::vector<double> cur = q0.probs();
    std::uint64_t stride = 1;
    for (int i = 0; i < v.d; ++i) {
        std::vector<double> next(n, 0.0);
        for (std::uint64_t ix = 0; ix < n; ++ix) {
            const double p = cur[ix];
            if (p == 0.0) continue;
            const int c = static_cast<int>((ix / stride) % static_cast<std::uint64_t>(v.S));
            if (c == M) {
                next[ix] += p;
            } else {
                next[ix] += p * a;
                next[ix + stride * static_cast<std::uint64_t>(M - c)] += p * (1.0 - a);
            }
        }
        cur.swap(next);
        stride *= static_cast<std::uint64_t>(v.S);
    }
    return DenseDistribution(v, std::move(cur), 1e-10);
}

std::vector<double> clean_conditional(const DenseDistribution& q0, const SequenceState& x, int i) {
    const Vocab& v = q0.vocab();
    validate_state(v, x);
    const int M = v.mask_id();
    if (i < 0 || i >= v.d) throw std::invalid_argument("clean_conditional: coordinate out of range");
    if (x.tokens[i] != M) throw std::invalid_argument("clean_conditional: coordinate is not masked");

    std::vector<double> bucket(static_cast<std::size_t>(v.S), 0.0);
    const std::uint64_t n = v.num_states();
    for (std::uint64_t ix = 0; ix < n; ++ix) {
        const double p = q0[ix];
        if (p == 0.0) continue;
        const SequenceState x0 = decode(v, ix);
        bool agrees = true;
        for (int j = 0; j < v.d; ++j) {
            if (x.tokens[j] != M && x0.tokens[j] != x.tokens[j]) {
                agrees = false;
                break;
            }
        }
        if (agrees) bucket[static_cast<std::size_t>(x0.tokens[i])] += p;
    }
    bucket[static_cast<std::size_t>(M)] = 0.0;
    double total = 0.0;
    for (double b : bucket) total += b;
    if (total <= 0.0) {
        throw std::domain_error("clean_conditional: conditioning event has zero probability");
    }
    for (double& b : bucket) b /= total;
    return bucket;
}

double concrete_score_given(const DenseDistribution& qt, const SequenceState& x, int i, int a) {
    const Vocab& v = qt.vocab();
    validate_state(v, x);
    const int M = v.mask_id();
    if (i < 0 || i >= v.d || x.tokens[i] != M) {
        throw std::invalid_argument("concrete_score: coordinate must be masked");
    }
    if (a < 0 || a >= v.S || a == M) throw std::invalid_argument("concrete_score: token must be non-mask");
    const double px = qt.prob(x);
    if (px == 0.0) throw std::domain_error("concrete_score: q_t(x) = 0");
    SequenceState y = x;
    y.tokens[i] = a;
    return qt.prob(y) / px;
}

double concrete_score(const DenseDistribution& q0, const SequenceState& x, int i, int a, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("concrete_score: need t > 0");
    return concrete_score_given(marginal(q0, t), x, i, a);
}

Generator build_forward_generator(const Vocab& v) {
    Generator g = make_zero_generator(v, 0.0);
    const std::uint64_t n = v.num_states();
    const int M = v.mask_id();
    for (std::uint64_t ix = 0; ix < n; ++ix) {
        const SequenceState x = decode(v, ix);
        double out_rate = 0.0;
        std::uint64_t stride = 1;
        for (int i = 0; i < v.d; ++i) {
            if (x.tokens[i] != M) {
                const std::uint64_t iy = ix + stride * static_cast<std::uint64_t>(M - x.tokens[i]);
                g.at(ix, iy) = 1.0;  // token -> mask at unit rate
                out_rate += 1.0;
            }
            stride *= static_cast<std::uint64_t>(v.S);
        }
        g.at(ix, ix) = -out_rate;
    }
    return g;
}

Generator build_reverse_generator(const DenseDistribution& q0, double s, double T) {
    if (!(s >= 0.0) || !(s < T)) throw std::invalid_argument("build_reverse_generator: need 0 <= s < T");
    const Vocab& v = q0.vocab();
    const double tf = T - s;  // forward time
    const DenseDistribution qt = marginal(q0, tf);
    Generator g = make_zero_generator(v, tf);
    const std::uint64_t n = v.num_states();
    const int M = v.mask_id();
    for (std::uint64_t ix = 0; ix < n; ++ix) {
        if (qt[ix] == 0.0) continue;  // unreachable: zero row
        const SequenceState x = decode(v, ix);
        double out_rate = 0.0;
        std::uint64_t stride = 1;
        for (int i = 0; i < v.d; ++i) {
            if (x.tokens[i] == M) {
                for (int a = 0; a < v.S - 1; ++a) {
                    const std::uint64_t iy = ix - stride * static_cast<std::uint64_t>(M - a);
                    const double r = qt[iy] / qt[ix];
                    g.at(ix, iy) = r;
                    out_rate += r;
                }
            }
            stride *= static_cast<std::uint64_t>(v.S);
        }
        g.at(ix, ix) = -out_rate;
    }
    return g;
}

DenseDistribution ctmc_propagate(const DenseDistribution& p,
                                 const std::function<Generator(double)>& gen, double t0,
                                 double t1, int substeps) {
    if (!(t1 > t0)) throw std::invalid_argument("ctmc_propagate: need t0 < t1");
    if (substeps < 1) throw std::invalid_argument("ctmc_propagate: need substeps >= 1");
    const Vocab& v = p.vocab();
    const std::uint64_t n = v.num_states();
    if (n > kGeneratorStateLimit) {
        throw std::invalid_argument("ctmc_propagate: S^d exceeds the dense-generator limit");
    }
    const double dt = (t1 - t0) / substeps;
    std::vector<double> cur = p.probs();
    std::vector<double> vn(n), tmp(n), acc_vec(n);
    for (int k = 0; k < substeps; ++k) {
        const Generator g = gen(t0 + (k + 0.5) * dt);
        if (!(g.vocab == v)) throw std::invalid_argument("ctmc_propagate: generator vocab mismatch");
        validate_generator(g, 1e-9);
        double lambda = 0.0;
        for (std::uint64_t r = 0; r < n; ++r) lambda = std::max(lambda, -g.at(r, r));
        if (lambda == 0.0) continue;  // zero generator: nothing moves
        const double mu = lambda * dt;
        // stochastic matrix P = I + G/lambda applied as v <- v P
        auto apply = [&](const std::vector<double>& src, std::vector<double>& dst) {
            std::fill(dst.begin(), dst.end(), 0.0);
            for (std::uint64_t r = 0; r < n; ++r) {
                const double pr = src[r];
                if (pr == 0.0) continue;
                const double* row = g.rates.data() + r * n;
                for (std::uint64_t c = 0; c < n; ++c) dst[c] += pr * row[c] / lambda;
                dst[r] += pr;
            }
        };
        double term = std::exp(-mu);
        double cum = term;
        vn = cur;
        for (std::uint64_t c = 0; c < n; ++c) acc_vec[c] = term * vn[c];
        long j = 0;
        const long cap = 64 + static_cast<long>(10.0 * (mu + std::sqrt(mu) * 8.0));
        while (1.0 - cum >= 1e-15 && j < cap) {
            ++j;
            apply(vn, tmp);
            vn.swap(tmp);
            term *= mu / static_cast<double>(j);
            for (std::uint64_t c = 0; c < n; ++c) acc_vec[c] += term * vn[c];
            cum += term;
        }
        cur = acc_vec;
        // renormalize: the truncated Poisson tail removes a ~1e-15 sliver
        double total = 0.0;
        for (double x : cur) total += x;
        for (double& x : cur) x /= total;
    }
    return DenseDistribution(v, std::move(cur), 1e-10);
}

DenseDistribution construct_q_gamma(const Vocab& v, const SequenceState& a, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("construct_q_gamma: need gamma > 0");
    if (mask_count(v, a) != 0) throw std::invalid_argument("construct_q_gamma: target contains mask");
    return marginal(DenseDistribution::delta(v, a), gamma);
}

double compute_gamma_ratio(const DenseDistribution& q0) {
    const Vocab& v = q0.vocab();
    const std::uint64_t n = v.num_states();
    const int M = v.mask_id();
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < v.d; ++i) {
        // accumulate the joint of (coordinate i, all other coordinates)
        const std::uint64_t n_ctx = n / static_cast<std::uint64_t>(v.S);
        std::vector<double> table(n_ctx * static_cast<std::uint64_t>(v.S), 0.0);
        std::uint64_t stride = 1;
        for (int j = 0; j < i; ++j) stride *= static_cast<std::uint64_t>(v.S);
        for (std::uint64_t ix = 0; ix < n; ++ix) {
            if (q0[ix] == 0.0) continue;
            const std::uint64_t hi = ix / (stride * static_cast<std::uint64_t>(v.S));
            const std::uint64_t lo = ix % stride;
            const int tok = static_cast<int>((ix / stride) % static_cast<std::uint64_t>(v.S));
            const std::uint64_t ctx = hi * stride + lo;
            table[ctx * static_cast<std::uint64_t>(v.S) + static_cast<std::uint64_t>(tok)] += q0[ix];
        }
        for (std::uint64_t ctx = 0; ctx < n_ctx; ++ctx) {
            const double* row = table.data() + ctx * static_cast<std::uint64_t>(v.S);
            double total = 0.0, mask_mass = 0.0, best_tok = 0.0;
            for (int tok = 0; tok < v.S; ++tok) {
                total += row[tok];
                if (tok == M) mask_mass = row[tok];
                else best_tok = std::max(best_tok, row[tok]);
            }
            if (total <= 0.0) continue;  // context never occurs
            if (mask_mass == 0.0) return 0.0;
            if (best_tok == 0.0) continue;  // all-mask conditional: no constraint
            best = std::min(best, mask_mass / best_tok);
        }
    }
    return best;
}

void generator_to_csv(const Generator& g, std::ostream& os) {
    const std::uint64_t n = g.vocab.num_states();
    os << "row,col,rate\n";
    char buf[64];
    for (std::uint64_t r = 0; r < n; ++r) {
        for (std::uint64_t c = 0; c < n; ++c) {
            const double x = g.at(r, c);
            if (x == 0.0) continue;
            std::snprintf(buf, sizeof buf, "%.17g", x);
            os << r << ',' << c << ',' << buf << '\n';
        }
    }
}

}  // namespace maskdiff
