#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "acip/branch.hpp"
#include "acip/map1d.hpp"
#include "acip/measure.hpp"
#include "acip/times.hpp"

namespace acip {

using Label = std::vector<long long>;

// Finite partition of the domain. Cell i is [cuts[i], cuts[i+1]); an atom is the
// union of the cells that carry its index. Adjacent cells never share an atom.
struct Partition1D {
    std::string id;
    Domain domain;
    std::vector<double> cuts;  // cuts.front() = 0, cuts.back() = 1, strictly increasing
    std::vector<int> cell_atom;
    std::vector<Label> labels;  // one per atom
    double offset_a = 0.0;      // Q_q only

    int atom_count() const { return static_cast<int>(labels.size()); }
    std::size_t cell_count() const { return cell_atom.size(); }
    // On the interval the point 1 belongs to the last cell.
    std::size_t cell_of(double x) const;
    int atom_of(double x) const;
    double atom_length(int atom) const;
};

// log|g'| below this level is merged into a single bin of Q_q; it covers the
// critical set and the countably many bins that accumulate on it.
inline constexpr double kDeepFloor = -60.0;

// Bin index k of log|g'(x)| in ]k/q, (k+1)/q] + a, i.e. k = ceil(q (L - a)) - 1.
long long qq_bin(const SmoothMap1D& g, int q, double a, double x);
// Label of the deep bin (everything at or below the first bin boundary under kDeepFloor).
long long qq_deep_bin(int q, double a);

Partition1D build_Qq(const SmoothMap1D& g, int q, double a, double tol = 1e-14);
// Draws a uniformly in (-1/q, 0) until no point lies within min_distance of a
// boundary of Q_q; throws OffsetNotFound after max_draws candidates.
double choose_offset(const SmoothMap1D& g, int q, const std::vector<double>& points, std::uint64_t rng_seed = 1,
                     double min_distance = 1e-9, int max_draws = 1000);

// Monotone branches of g as a partition (flat pieces share the label -1).
Partition1D branch_partition(const SmoothMap1D& g, const BranchPartition& J);
Partition1D branch_partition(const SmoothMap1D& g);
// Pieces between consecutive critical points (the whole domain when there are none).
Partition1D critical_partition(const SmoothMap1D& g);

// Atoms of the join are the nonempty intersections; labels concatenate.
Partition1D join(const Partition1D& P, const Partition1D& Q, double tol = 1e-14);
// P^m = P ∨ g^{-1}P ∨ ... ∨ g^{-(m-1)}P, pulled back through the branch inverses of g.
Partition1D refine(const Partition1D& P, const SmoothMap1D& g, int m, double tol = 1e-14);

struct EntropyReport {
    double H_value = 0.0;  // nats
    std::string partition_id;
    std::string measure_id;
    int m = 1;
    std::vector<double> per_atom_masses;  // normalized, positive masses only
};

// Entropy of the normalized mass vector; zero masses contribute 0.
EntropyReport entropy_of_masses(const std::vector<double>& masses);
EntropyReport partition_entropy(const EmpiricalMeasure& mu, const Partition1D& P);

// Pointwise label of P_q = J ∨ Q_q.
struct PqLabeler {
    const SmoothMap1D* g = nullptr;
    BranchPartition J;
    int q = 1;
    double a = 0.0;
    PqLabeler(const SmoothMap1D& map, int q, double a);
    long long operator()(double x) const;
};

// H_mu(P^m) for every m in m_list, from the itineraries of the atoms under g.
std::vector<EntropyReport> itinerary_entropies(const EmpiricalMeasure& mu, const SmoothMap1D& g,
                                               const std::function<long long(double)>& label,
                                               const std::vector<int>& m_list, int jobs = 1);

// Least-squares slope of H against m over the largest `last` values of m.
double entropy_slope(const std::vector<int>& m, const std::vector<double>& H, int last = 3);

// ---------------------------------------------------------------------------
// Inequality suites. Every check reports one row of checks.csv.

struct InequalityCheck {
    std::string name;
    std::string instance;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;  // rhs - lhs for "lhs <= rhs" checks
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool pass = false;
};
void write_checks_csv(std::ostream& os, const std::vector<InequalityCheck>& rows);

// Finite system for the exact suite: states 0..S-1.
struct FiniteSystem {
    std::vector<long double> lambda;  // probability vector
    std::vector<int> T;               // T[s] is the image of state s
    std::vector<int> R;               // R[s] is the atom of state s
};

struct MisiurewiczReport {
    long double lhs = 0;  // (1/m) H_{λ^F}(R^m)
    long double rhs = 0;  // H_λ(R^F)/#F - m log(#R_{λ^F}) #∂F/#F
    long double margin = 0;
    int positive_atoms = 0;  // #R_{λ^F}
    int boundary_size = 0;   // #∂F
    bool ok(long double tol = 1e-12L) const { return margin >= -tol; }
};
MisiurewiczReport verify_misiurewicz(const FiniteSystem& sys, const IntSet& F, int m);

struct SuiteSummary {
    std::string name;
    std::size_t instances = 0;
    std::size_t violations = 0;
    double worst_margin = 0.0;
};
// States are 3-bit words under the rotation and the shift w -> 2w mod 8, with every
// F ⊆ {0..5}, m <= 4, every two-block partition and three weight vectors.
SuiteSummary misiurewicz_exhaustive_suite(int jobs = 1);
SuiteSummary misiurewicz_random_suite(std::size_t count, std::uint64_t seed, int max_states = 12, int jobs = 1);

// 4 / (e (1 - e^{-1/2}))
double sete_constant();
// Σ -x_k log x_k <= Σ |k| x_k + c_0 for entries (k, x_k) with x_k in [0,1].
InequalityCheck sete_tech_check(const std::vector<std::pair<long long, double>>& entries, const std::string& instance);
SuiteSummary sete_random_suite(std::size_t count, std::uint64_t seed, int jobs = 1);

struct ManeReport {
    InequalityCheck sete;        // on the Q_q masses
    InequalityCheck qq_bound;    // H(Q_q) <= c_0 + 1 + q ∫|log|g'||
    InequalityCheck j_bound;     // H(J) <= c_0 + 2 ∫|log ρ|, J cut at critical points only
    std::size_t rho_checked = 0;     // atoms tested against ρ(x) >= (|g'(x)|/||d^{r'}g||)^{1/(r'-1)}
    std::size_t rho_violations = 0;  // zero when the critical set is empty (no test)
    bool ok() const { return sete.pass && qq_bound.pass && j_bound.pass && rho_violations == 0; }
};
ManeReport verify_mane_bounds(const EmpiricalMeasure& mu, const SmoothMap1D& g, int q, double a);

using IntervalSet = std::vector<std::pair<double, double>>;
bool contains(const IntervalSet& S, double x);
double length(const IntervalSet& S);

// Leb(J ∩ A ∩ g^{-k}B) <= Leb(B) / inf_{J∩A} |(g^k)'| with J = [branch_left, branch_right)
// a monotone branch of g^k. The left side uses midpoint quadrature, doubled until two
// successive values differ by less than tol; ci_low/ci_high carry that error.
InequalityCheck change_of_variable_check(const SmoothMap1D& g, int k, double branch_left, double branch_right,
                                         const IntervalSet& A, const IntervalSet& B, double tol = 1e-4);

// Set of y with g^i y in the branch of g^i x's branch for i < k and g^k y in
// [target_left, target_right]; an interval because every step is monotone. Lift coordinates.
std::pair<double, double> cylinder(const SmoothMap1D& g, const BranchPartition& J, double x, int k, double target_left,
                                   double target_right);

// Monte Carlo membership needs computed orbits that still follow true ones: the
// check runs only while log|(g^n)'(x)| stays below this many nats (2^-10 of ulp^-1).
inline constexpr double kResolvableLogDeriv = 29.0;

struct GibbsInput {
    IntSet E;   // times in [0, n)
    int n = 0;  // orbit horizon of the membership test; 0 means max(E) + 1
    int q = 1;
    double a = -0.5;
    double eps = 0.0;
    double C = 8.0;
    double ambient_left = 0.0;
    double ambient_right = 1.0;
    // y ∈ (E-atom ∩ A_n); an empty function accepts every y.
    std::function<bool(double)> in_atom;
    std::size_t samples = 100000;  // per window
    // Windows are the ambient cell and x ± ambient/2^w for w = 1, 2, ...; 0 keeps
    // halving until the half-width reaches e^{-φ^E(x)}/4 or 4096 (horizon+1) ulps of x.
    int windows = 0;
    double confidence = 0.95;
    std::uint64_t rng_seed = 1;
};

struct GibbsReport {
    double phi_E = 0.0;      // Σ_{k∈E} log|g'(g^k x)|
    int boundary_size = 0;   // #∂E
    double log_rhs = 0.0;    // #∂E log(C/ε) - φ^E + #E/q
    double leb_estimate = 0.0;
    double ci_low = 0.0, ci_high = 0.0;  // Wilson bounds on the ambient window
    double best_lower = 0.0;             // largest window lower bound
    std::size_t hits = 0;                // on the ambient window
    std::size_t window_hits = 0;         // over all windows
    int windows = 0;
    double orbit_log_deriv = 0.0;  // log|(g^n)'(x)| over the membership horizon
    bool resolved = false;         // false: orbit too expanding for double precision, nothing sampled
    bool pass = false;  // no window lower bound exceeds the right side (vacuous when unresolved)
    // Companion checks on the atoms V attached to the gaps of E.
    std::size_t v_atoms = 0, v_distortion_ok = 0, v_size_ok = 0;
    InequalityCheck row() const;
};
GibbsReport gibbs_check(const SmoothMap1D& g, double x, const GibbsInput& in);

// Linear circle map with E = [0, n): R is the cylinder of g^n at x, whose length
// equals e^{-φ^E(x)}. lhs is the cylinder length, rhs the Gibbs bound.
struct GibbsClosedForm {
    double lhs = 0.0;
    double closed_form = 0.0;  // e^{-φ^E(x)}
    double rhs = 0.0;
    bool exact = false;  // lhs and closed_form agree to 1e-6 relative
    bool pass = false;
};
GibbsClosedForm gibbs_closed_form_linear(const SmoothMap1D& g, double x, int n, int q, double eps, double C = 8.0);

// Membership of y in {E_n^{M,m}(y) = E} ∩ A_n with surrogate hyperbolic times.
std::function<bool(double)> surrogate_atom_predicate(const SmoothMap1D& g, const IntSet& E, int n, int M, int m,
                                                     double beta, double b, int p, double c_expansion = 10.0);

// ---------------------------------------------------------------------------
// Entropy formula.

struct EntropyRate {
    int q = 1;
    double a = 0.0;
    std::vector<int> m;
    std::vector<double> H;
    double slope = 0.0;
};

struct FormulaOptions {
    int p = 1;                 // mu is an f^p-measure when p > 1; results are per f-step
    double tolerance = 0.05;
    std::size_t min_atoms = 10000;
    std::uint64_t rng_seed = 1;
    int jobs = 1;
};

struct FormulaVerdict {
    std::vector<EntropyRate> rates;
    double h_est = 0.0;     // max slope over q, divided by p
    double integral = 0.0;  // ∫ log|g'| dμ / p
    double residual = 0.0;  // h_est - integral
    int p = 1;
    double tolerance = 0.05;
    bool exponent_positive = false;
    bool ac_consistent = false;
    const char* verdict() const { return ac_consistent ? "AC-consistent" : "not-AC"; }
};

// Throws InsufficientAtoms when mu has fewer than min_atoms atoms.
FormulaVerdict entropy_formula_residual(const SmoothMap1D& g, const EmpiricalMeasure& mu, const std::vector<int>& q_list,
                                        const std::vector<int>& m_list, const FormulaOptions& opts = {});

void write_entropy_csv(std::ostream& os, const FormulaVerdict& v);

}  // namespace acip
