#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acip/entropy.hpp"
#include "acip/error.hpp"
#include "acip/map1d.hpp"
#include "acip/measure.hpp"

namespace acip {

enum class Reference { Auto, Uniform, Arcsine, None };

// One experiment. Keys live in [map], [run], [times], [measure], [entropy],
// [tree], [gibbs] and [basin]; keys before the first header belong to [run].
struct ExperimentConfig {
    // [map]
    std::string family = "doubling";
    std::map<std::string, double> params;
    std::string expression;
    Domain domain;
    std::optional<double> r;  // family default when unset: 3 for logistic and cubic, 2 otherwise

    // [run]
    std::optional<int> p;  // unset means "auto"
    double B_r = 1.0;
    double delta = 0.1;
    double beta = 0.1;
    int seeds = 1000;
    std::uint64_t rng_seed = 1;
    Detector detector = Detector::Surrogate;
    std::string output_dir = "out";
    double sigma_left = 0.3;
    std::optional<double> sigma_width;  // unset means eps of g = f^p
    double c_expansion = 10.0;
    int jobs = 1;

    // [times]
    std::vector<int> n_list{100};
    std::vector<int> M_list{5};
    std::vector<int> m_list{1};
    int times_rows = 20;

    // [measure]
    int bins = 200;
    Reference reference = Reference::Auto;

    // [entropy]
    std::vector<int> q_list{1, 2};
    std::vector<int> entropy_m{1, 2, 3, 4, 5, 6, 7, 8};
    double tolerance = 0.05;
    std::size_t min_atoms = 10000;

    // [tree]
    int tree_levels = 2;
    double tree_C_r = 1e3;
    std::size_t tree_budget = 1000000;
    int tree_witnesses = 20;

    // [gibbs]
    int gibbs_instances = 10;
    int gibbs_n = 8;
    std::size_t gibbs_samples = 4000;
    double gibbs_C = 8.0;
    double gibbs_confidence = 0.95;

    // [basin]: 0 seeds skips the probe
    int basin_seeds = 0;
    int basin_n = 100000;
    double basin_tolerance = 0.05;

    // [bound]
    double bound_C_r = 10.0;

    int resolved_r_default() const;
    double resolved_r() const { return r ? *r : resolved_r_default(); }
};

// Throws ConfigError with "source:line: message" on any malformed or unknown entry
// and on violated invariants (r > 1, delta > 0, nonempty lists).
ExperimentConfig parse_config(std::istream& in, const std::string& source = "config");
ExperimentConfig load_config(const std::string& path);
void validate_config(const ExperimentConfig& cfg);

SmoothMap1D make_map(const ExperimentConfig& cfg);

// p = ceil((4/δ) log(2 B_r log||f'||_∞ / δ)), at least 1.
int auto_power(double delta, double B_r, double log_sup_fprime);

enum class BoundVariant { Finite, Smooth, Analytic };
BoundVariant parse_bound_variant(const std::string& s);

struct BoundInput {
    double log_sup_fprime = 0.0;        // log ||f'||_∞
    double log_fprime_r_minus_1 = 0.0;  // log ||f'||_{r-1}; the smooth variant reads it as log ||f'||_{C/δ}
    double delta = 0.0;
    double C_r = 0.0;
};

struct BoundValue {
    double log_value = 0.0;
    double value = 0.0;  // exp(log_value); +inf past the double range
};

// Finite:   (log||f'||_∞ / δ)^{C_r log||f'||_{r-1} / δ}
// Smooth:   ||f'||_{C/δ}^{C/δ^3} with C = C_r
// Analytic: C^{1/δ^4} with C = C_r
BoundValue bound_calculator(const BoundInput& in, BoundVariant variant = BoundVariant::Finite);

struct BasinProbeOptions {
    int seeds = 100;
    int n = 100000;
    double tolerance = 0.05;
    double chi_threshold = 0.0;  // seeds with finite-time exponent at or below it are not counted
    double sigma_left = 0.0;
    double sigma_right = 1.0;
    std::uint64_t rng_seed = 1;
    double noise = 0x1.0p-50;
    int jobs = 1;
};

struct BasinProbeReport {
    int seeds = 0;
    int eligible = 0;  // χ_n(x) above the threshold
    int within = 0;    // eligible and within tolerance of the stored measure
    double fraction = 0.0;  // within / eligible; 0 when nothing is eligible
    std::vector<double> chi;       // per seed
    std::vector<double> distance;  // per seed, max over the probe dictionary
};

// Sampled evidence for basin coverage: the orbit average of each fresh seed is
// compared with mu on the probe dictionary.
BasinProbeReport basin_probe(const SmoothMap1D& f, const EmpiricalMeasure& mu, const BasinProbeOptions& opts);

enum class Stage { Norms, Branches, Tree, Times, Measure, Entropy, Pipeline };
const char* stage_name(Stage s);

struct RunOverrides {
    std::optional<int> jobs;
    std::optional<std::uint64_t> rng_seed;
    std::optional<std::string> output_dir;
};
void apply_overrides(ExperimentConfig& cfg, const RunOverrides& o);

struct PipelineResult {
    int p = 1;
    double b = 0.0;
    double eps = 0.0;
    double R_estimate = 0.0;
    double selection_fraction = 0.0;
    std::size_t g_atoms = 0;
    std::size_t f_atoms = 0;
    std::optional<double> density_l1;
    double lyapunov = 0.0;  // ∫ log|f'| d(f-measure)
    std::optional<FormulaVerdict> formula;
    std::vector<InequalityCheck> checks;
    std::optional<BasinProbeReport> basin;
    std::string verdict;
    std::vector<std::string> files;  // written, in order
};

// Runs every stage up to `last` and writes its artifacts into cfg.output_dir.
// The tree stage runs when last == Tree or the detector uses the tree.
PipelineResult run_pipeline(const ExperimentConfig& cfg, Stage last = Stage::Pipeline);

// verdict.txt from the texts of checks.csv and entropy.csv:
//   "AC-consistent" when every check passes, the integral is positive and
//   |residual| <= tolerance; "inconclusive" when a check fails; "not-AC" otherwise.
// Reason lines follow the verdict on the first line.
std::string decide_verdict(const std::string& checks_csv, const std::string& entropy_csv);

// Misiurewicz (exhaustive and random) and SETE suites as check rows.
std::vector<InequalityCheck> run_inequality_suites(std::uint64_t rng_seed, int jobs);

// Process exit status: 2 config, 3 empty selection, 4 budget exceeded, 1 otherwise.
int exit_code_for(const Error& e);

}  // namespace acip
