#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "maskdiff/distribution.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

struct ResultRow {
    std::string point;   // parameter point, e.g. "kappa=0.1" or "pair=07"
    std::string metric;
    double value = 0.0;
    double error = 0.0;  // error estimate where applicable
    bool has_error = false;
};

struct AssertionResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// One experiment run: metric rows plus the pass/fail record of every
// assertion the experiment makes. Rows are deterministic given (config,
// seed); wall time lives only in the metadata sidecar.
struct ResultTable {
    std::string experiment;
    nlohmann::json config;  // as provided (defaults applied at point of use)
    std::uint64_t seed = 0;
    double wall_ms = 0.0;
    std::vector<ResultRow> rows;
    std::vector<AssertionResult> assertions;

    void add(const std::string& point, const std::string& metric, double value);
    void add_with_error(const std::string& point, const std::string& metric, double value,
                        double error);
    void check(const std::string& name, bool pass, const std::string& detail = "");
    bool all_pass() const;
};

// FNV-1a 64 over the canonical (key-sorted) dump of the config with the
// output path removed; 16 hex digits.
std::string config_hash(const nlohmann::json& cfg);

std::string result_csv(const ResultTable& t);
nlohmann::json result_sidecar(const ResultTable& t);

// Writes <out_path> (CSV) and <out_path>.meta.json. Refuses to overwrite an
// existing output whose recorded config hash differs, unless force is set.
void write_outputs(const ResultTable& t, const std::string& out_path, bool force = false);

const std::vector<std::string>& experiment_names();

// Dispatch on cfg["experiment"]; unknown names are rejected with the list of
// valid ones. Fills in table metadata (config, seed, wall time).
ResultTable run_experiment(const nlohmann::json& cfg);

ResultTable exp_euler_scaling(const nlohmann::json& cfg);
ResultTable exp_fhs_exactness(const nlohmann::json& cfg);
ResultTable exp_thm1_decomposition(const nlohmann::json& cfg);
ResultTable exp_beta_marginals(const nlohmann::json& cfg);
ResultTable exp_prop2_identity(const nlohmann::json& cfg);

// Config-driven q0 construction: {"kind":"delta","tokens":[...]} |
// {"kind":"product","factors":[[...],...]} | {"kind":"dirichlet-random",
// "alpha":f,"mask_free":bool} | {"kind":"file","path":"..."}.
DenseDistribution q0_from_config(const nlohmann::json& spec, const Vocab& v, Rng& rng);

// Dirichlet(alpha) weights over states; with mask_free, mass only on
// mask-free sequences.
DenseDistribution random_q0(const Vocab& v, Rng& rng, bool mask_free, double alpha = 1.0);

// Random normalized categorical over non-mask tokens (length S-1).
std::vector<double> random_noise(const Vocab& v, Rng& rng);

double gamma_draw(Rng& rng, double shape);

}  // namespace maskdiff
