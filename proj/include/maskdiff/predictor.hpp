#pragma once

#include <memory>

#include <json.hpp>

#include "maskdiff/distribution.hpp"
#include "maskdiff/forward.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

// Estimator interface with two interchangeable views: the clean-prediction
// view mu (a categorical over non-mask tokens for a masked coordinate) and
// the concrete-score view, related by
//   score(x,i,a,t) = alpha_t/(1-alpha_t) * mu(x,i,t)[a].
// The conversion lives here once, so the identity holds by construction.
// Predictors are only ever queried at masked coordinates.
class Predictor {
  public:
    explicit Predictor(Vocab v) : vocab_(v) {}
    virtual ~Predictor() = default;

    // Length-S categorical with zero mass at the mask id; t is forward time.
    virtual std::vector<double> mu(const SequenceState& x, int i, double t) const = 0;
    virtual bool time_independent() const = 0;

    double score(const SequenceState& x, int i, int a, double t) const;

    const Vocab& vocab() const { return vocab_; }

  protected:
    void check_query(const SequenceState& x, int i) const;

  private:
    Vocab vocab_;
};

// mu = clean_conditional(q0, x, i): the true token-wise reverse conditional.
class ExactPredictor final : public Predictor {
  public:
    explicit ExactPredictor(DenseDistribution q0);
    std::vector<double> mu(const SequenceState& x, int i, double t) const override;
    bool time_independent() const override { return true; }

  private:
    DenseDistribution q0_;
};

// mu puts 1-rho on a^i and rho on b^i regardless of context: the two-point
// corruption used by the tight KL construction. Requires a^i != b^i
// everywhere and mask-free a, b.
class RhoCorruptedPredictor final : public Predictor {
  public:
    RhoCorruptedPredictor(Vocab v, SequenceState a, SequenceState b, double rho);
    std::vector<double> mu(const SequenceState& x, int i, double t) const override;
    bool time_independent() const override { return true; }

  private:
    SequenceState a_, b_;
    double rho_;
};

// mu = (1-lambda) * base.mu + lambda * noise with a fixed context-free noise
// categorical; the generic perturbation knob for scaling experiments.
class MixtureCorruptedPredictor final : public Predictor {
  public:
    // `noise` is over non-mask tokens: either S-1 entries or S entries with a
    // zero at the mask id; it must be normalized within 1e-9.
    MixtureCorruptedPredictor(std::shared_ptr<const Predictor> base, std::vector<double> noise,
                              double lambda);
    std::vector<double> mu(const SequenceState& x, int i, double t) const override;
    bool time_independent() const override { return base_->time_independent(); }

  private:
    std::shared_ptr<const Predictor> base_;
    std::vector<double> noise_;  // length S, zero at mask
    double lambda_;
};

// Geometric Beta-average of the predictor at a partially masked state:
//   log mu_bar(x)[a] = E_{alpha' ~ Beta(d-k+1, k)} [ log mu(x, i, -log alpha')[a] ]
// with k = mask_count(x), evaluated by 64-node Gauss-Legendre on (0,1).
// Time-independent predictors return mu unchanged. Entries where mu vanishes
// at any node average to zero.
std::vector<double> mu_bar(const Predictor& pred, const SequenceState& x, int i);

// Perturbed reverse generator at reverse time s on horizon T: for masked i
// and token a, rate(x -> x with i:=a) = pred.score(x, i, a, T-s).
Generator build_estimated_reverse_generator(const Predictor& pred, double s, double T);

// Config form: {"kind":"exact"}
//            | {"kind":"rho","a":[...],"b":[...],"rho":f}
//            | {"kind":"mixture","lambda":f,"noise":[...]}  (base defaults to exact)
// `q0` supplies the data distribution for exact bases; it may be null for
// predictors that do not need one.
std::shared_ptr<const Predictor> predictor_from_json(const nlohmann::json& spec, const Vocab& v,
                                                     const DenseDistribution* q0);

}  // namespace maskdiff
