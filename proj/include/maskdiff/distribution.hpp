#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskdiff/state.hpp"

namespace maskdiff {

// Exact p.m.f. over all S^d states, indexed by the mixed-radix encoding.
// Immutable after construction; construction normalizes and enforces the
// stated mass tolerance.
class DenseDistribution {
  public:
    // `probs` must be non-negative with total mass within `mass_tol` of 1;
    // the stored vector is rescaled to sum to exactly 1.
    DenseDistribution(Vocab vocab, std::vector<double> probs, double mass_tol = 1e-12);

    static DenseDistribution delta(const Vocab& v, const SequenceState& x);
    // Normalizes arbitrary non-negative weights (must have positive total).
    static DenseDistribution from_weights(const Vocab& v, std::vector<double> weights);

    const Vocab& vocab() const { return vocab_; }
    const std::vector<double>& probs() const { return probs_; }
    double operator[](std::uint64_t ix) const { return probs_[ix]; }
    double prob(const SequenceState& x) const { return probs_[encode(vocab_, x)]; }
    std::uint64_t size() const { return probs_.size(); }

  private:
    Vocab vocab_;
    std::vector<double> probs_;
};

// (1/2) sum_x |p(x) - q(x)|
double tv(const DenseDistribution& p, const DenseDistribution& q);

// sum_{x: p(x)>0} p(x) log(p(x)/q(x)); +infinity on support violation.
double kl(const DenseDistribution& p, const DenseDistribution& q);

// Entropy of a categorical over tokens, natural log, 0 log 0 = 0.
// Input must be normalized within 1e-9.
double entropy(const std::vector<double>& categorical);

// JSON formats:
//   dense:  {"d":int,"S":int,"probs":[S^d floats]}
//   sparse: {"d":int,"S":int,"entries":[{"tokens":[...],"p":float},...]}
// Unlisted states are zero. The loader normalizes and rejects inputs whose
// total mass deviates from 1 by more than 1e-6.
DenseDistribution distribution_from_json(const nlohmann::json& j);
nlohmann::json distribution_to_json(const DenseDistribution& p, bool sparse = false);
DenseDistribution load_distribution_file(const std::string& path);

}  // namespace maskdiff
