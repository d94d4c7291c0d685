#include "maskdiff/distribution.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace maskdiff {

DenseDistribution::DenseDistribution(Vocab vocab, std::vector<double> probs, double mass_tol)
    : vocab_(vocab), probs_(std::move(probs)) {
    const std::uint64_t n = vocab_.num_states();
    if (n > kExactStateLimit) {
        throw std::invalid_argument("DenseDistribution: S^d exceeds the exact-mode limit");
    }
    if (probs_.size() != n) {
        throw std::invalid_argument("DenseDistribution: expected " + std::to_string(n) +
                                    " probabilities, got " + std::to_string(probs_.size()));
    }
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0)) {
            throw std::invalid_argument("DenseDistribution: negative or NaN probability");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > mass_tol) {
        throw std::invalid_argument("DenseDistribution: total mass " + std::to_string(total) +
                                    " deviates from 1 beyond tolerance");
    }
    for (double& p : probs_) p /= total;
}

DenseDistribution DenseDistribution::delta(const Vocab& v, const SequenceState& x) {
    std::vector<double> probs(v.num_states(), 0.0);
    probs[encode(v, x)] = 1.0;
    return DenseDistribution(v, std::move(probs));
}

DenseDistribution DenseDistribution::from_weights(const Vocab& v, std::vector<double> weights) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("from_weights: negative or NaN weight");
        total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("from_weights: total weight must be positive");
    for (double& w : weights) w /= total;
    return DenseDistribution(v, std::move(weights));
}

double tv(const DenseDistribution& p, const DenseDistribution& q) {
    if (!(p.vocab() == q.vocab())) throw std::invalid_argument("tv: vocab mismatch");
    double acc = 0.0;
    for (std::uint64_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

double kl(const DenseDistribution& p, const DenseDistribution& q) {
    if (!(p.vocab() == q.vocab())) throw std::invalid_argument("kl: vocab mismatch");
    double acc = 0.0;
    for (std::uint64_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
        acc += p[i] * std::log(p[i] / q[i]);
    }
    return acc;
}

double entropy(const std::vector<double>& categorical) {
    double total = 0.0;
    for (double p : categorical) {
        if (!(p >= 0.0)) throw std::invalid_argument("entropy: negative or NaN entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("entropy: input not normalized (total " + std::to_string(total) + ")");
    }
    double h = 0.0;
    for (double p : categorical) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

DenseDistribution distribution_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("d") || !j.contains("S")) {
        throw std::invalid_argument("distribution JSON must be an object with \"d\" and \"S\"");
    }
    const Vocab v = make_vocab(j.at("S").get<int>(), j.at("d").get<int>());
    const std::uint64_t n = v.num_states();
    if (n > kExactStateLimit) {
        throw std::invalid_argument("distribution JSON: S^d exceeds the exact-mode limit");
    }
    std::vector<double> probs(n, 0.0);
    if (j.contains("probs")) {
        const auto& arr = j.at("probs");
        if (!arr.is_array() || arr.size() != n) {
            throw std::invalid_argument("distribution JSON: \"probs\" must list all S^d states");
        }
        for (std::uint64_t i = 0; i < n; ++i) probs[i] = arr[i].get<double>();
    } else if (j.contains("entries")) {
        for (const auto& e : j.at("entries")) {
            SequenceState x{e.at("tokens").get<std::vector<int>>()};
            probs[encode(v, x)] += e.at("p").get<double>();
        }
    } else {
        throw std::invalid_argument("distribution JSON needs either \"probs\" or \"entries\"");
    }
    return DenseDistribution(v, std::move(probs), 1e-6);
}

nlohmann::json distribution_to_json(const DenseDistribution& p, bool sparse) {
    nlohmann::json j;
    j["d"] = p.vocab().d;
    j["S"] = p.vocab().S;
    if (!sparse) {
        j["probs"] = p.probs();
        return j;
    }
    nlohmann::json entries = nlohmann::json::array();
    for (std::uint64_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        entries.push_back({{"tokens", decode(p.vocab(), i).tokens}, {"p", p[i]}});
    }
    j["entries"] = std::move(entries);
    return j;
}

DenseDistribution load_distribution_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open distribution file: " + path);
    nlohmann::json j;
    in >> j;
    return distribution_from_json(j);
}

}  // namespace maskdiff
