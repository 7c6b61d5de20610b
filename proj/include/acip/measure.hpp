#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "acip/map1d.hpp"
#include "acip/reparam.hpp"
#include "acip/times.hpp"

namespace acip {

enum class Detector { Tree, Surrogate, Both };
const char* detector_name(Detector d);
Detector parse_detector(const std::string& s);

struct PoolSeed {
    double x = 0.0;
    TimeSet E;           // times over [0, n_max]
    OrbitRecord orbit;   // g-orbit of x over n_max steps
    double tree_agreement = -1.0;  // fraction of [0, n_max] where both detectors agree; -1 unless Both
};

struct PoolProvenance {
    std::string map;
    int p = 1;
    double eps = 0.0;
    double sigma_left = 0.0;
    double sigma_right = 0.0;
    Detector detector = Detector::Surrogate;
    std::uint64_t rng_seed = 0;
    double noise = 0.0;
};

struct SamplePool {
    std::vector<PoolSeed> seeds;
    PoolProvenance provenance;
    int n_max = 0;
};

struct PoolOptions {
    int seeds = 10000;
    int n_max = 200;
    std::uint64_t rng_seed = 1;
    Detector detector = Detector::Surrogate;
    double c_expansion = 10.0;
    // Each orbit step is perturbed by a uniform kick in [-noise, noise]; keeps
    // floating-point orbits of expanding maps from collapsing onto periodic points.
    double noise = std::ldexp(1.0, -50);
    int jobs = 1;
    // Tree detector: seeds are located in σ_* = [sigma_left, sigma_right] with eps.
    double eps = 0.0;
    int p = 1;
    int tree_levels = 0;  // 0 means n_max
    TreeOptions tree;
};

// Orbit of x under g with a per-step uniform kick of size `noise` from rng.
OrbitRecord noisy_orbit(const SmoothMap1D& g, double x, int n, double noise, std::uint64_t stream_seed);

// Seeds drawn uniformly in [sigma_left, sigma_right]; seed i uses its own RNG
// stream derived from rng_seed, so pools do not depend on the worker count.
SamplePool build_pool(const SmoothMap1D& g, double sigma_left, double sigma_right, const PoolOptions& opts);

struct Selection {
    std::vector<const PoolSeed*> seeds;
    double fraction = 0.0;
    // Leb(A_n) >= 1/n^2 read on the sampled fraction times Leb(σ_*).
    bool leb_rule_holds = false;
};

// A_n = {x : d_n(E(x)) > beta and |(g^n)'(x)| >= e^{n p b}}.
Selection select_An(const SamplePool& pool, int n, double beta, double b, int p);

enum class Normalization { Mu, Nu };

struct Atom {
    double point = 0.0;
    double weight = 0.0;
};

struct EmpiricalMeasure {
    std::vector<Atom> atoms;
    int n = 0, M = 0, m = 0;
    Normalization normalization = Normalization::Mu;
    double beta_nMm = 0.0;   // mean of d_n(E_n^{M,m}(x)) over the selection
    double beta_inf = 1.0;   // limit estimate used by the Nu normalization
    double total_mass() const;
};

// Atoms g^i x for i in E_n^{M,m}(x); weights 1/Σ#E (Mu) or 1/(n β^∞ #seeds) (Nu).
EmpiricalMeasure empirical_measure(const Selection& sel, int n, int M, int m, Normalization norm,
                                   double beta_inf = 1.0);

// (1/p) Σ_{k<p} f^k_* μ, the f-measure attached to a measure of g = f^p.
EmpiricalMeasure average_over_iterates(const EmpiricalMeasure& mu, const SmoothMap1D& f, int p);
EmpiricalMeasure push_forward(const EmpiricalMeasure& mu, const SmoothMap1D& g);
EmpiricalMeasure dirac(double point, std::size_t copies = 1);

// β^∞ as the mean of the last `window` entries of a sequence ordered by (n, M).
double estimate_beta_inf(const std::vector<double>& betas, int window = 3);

using Probe = std::function<double(double)>;
// Ten trigonometric functions and ten periodic Gaussian bumps, all with sup norm 1.
std::vector<Probe> probe_dictionary();
double invariance_defect(const EmpiricalMeasure& mu, const SmoothMap1D& g, const std::vector<Probe>& probes);
// Σ #∂E_n^{M,m}(x) / Σ #E_n^{M,m}(x) for Mu, or / (n β^∞ #seeds) for Nu.
double invariance_defect_bound(const Selection& sel, int n, int M, int m, Normalization norm, double beta_inf = 1.0);

struct DensityEstimate {
    int bins = 0;
    std::vector<double> masses;
    double total = 0.0;
    std::optional<double> l1_vs_reference;
    bool singular_flag = false;  // set by compare_density when L1 >= 1
};
DensityEstimate density_estimate(const EmpiricalMeasure& mu, int bins);
// L1 distance between the normalized histogram density and `reference` by per-bin
// midpoint integration with 100 subpoints.
double compare_density(DensityEstimate& est, const std::function<double(double)>& reference);
double arcsine_density(double x);
double arcsine_cdf(double x);
double uniform_density(double x);

struct SupportGapReport {
    double gap = std::numeric_limits<double>::infinity();
    double min_log_deriv = std::numeric_limits<double>::infinity();
    bool flagged = false;       // an atom sits on the critical set
    bool tpsHB_iii_ok = true;   // log|g'| >= -M log||g'|| at every atom
};
SupportGapReport support_gap_from_critical(const EmpiricalMeasure& mu, const SmoothMap1D& g,
                                           const std::vector<double>& critical_pts, int M, double log_sup_gprime);

struct LogDerivIntegrals {
    double integral = 0.0;      // ∫ log|g'| dμ / mass
    double integral_neg = 0.0;  // ∫ max(0, -log|g'|) dμ / mass
    double integral_abs = 0.0;
    double inf_log = std::numeric_limits<double>::infinity();
};
LogDerivIntegrals log_derivative_integrals(const EmpiricalMeasure& mu, const SmoothMap1D& g);

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu);
void write_binned_density_csv(std::ostream& os, const DensityEstimate& est,
                              const std::function<double(double)>* reference);

}  // namespace acip
