#pragma once

#include <ostream>
#include <utility>
#include <vector>

#include "acip/map1d.hpp"

namespace acip {

// Finite set of nonnegative integers, kept sorted and duplicate-free.
using IntSet = std::vector<int>;

struct TimeSet {
    IntSet elems;
    int horizon = 0;  // elems lie in [0, horizon]

    bool contains(int t) const;
    // #(E ∩ [0,n)) / n
    double density(int n) const;
};

double density(const IntSet& S, int n);

// Union of [k, l) over k < l in E with k, l < n and l - k <= M.
IntSet clip(const IntSet& E, int n, int M);
// Each component [k, l) of clip(E, n, M) loses its last L elements, with L the
// least value in [m-1, M+m-2] such that l - L is in E and L <= l - k; components
// without such an L are dropped.
IntSet trim(const IntSet& E, int n, int M, int m);
// S Δ (S+1)
IntSet boundary_set(const IntSet& S);
// Maximal runs of consecutive integers as half-open [first, second).
std::vector<std::pair<int, int>> components(const IntSet& S);

struct TimeSetDerived {
    TimeSet base;
    int M = 1;
    int m = 1;
    IntSet clipped;
    IntSet trimmed;
    IntSet boundary;
    double density = 0.0;  // d_n of trimmed at the horizon
};
TimeSetDerived derive(const TimeSet& E, int M, int m);

struct EnmReport {
    bool boundary_in_base = true;  // item i
    double margin_iii = 0.0;       // n + M - M #∂/2
    double margin_iv = 0.0;        // #(E^{M'} \ E^{M}) - M (#∂E^M - #∂E^{M'}) / 2
    bool monotone_in_M = true;     // trim(M) ⊆ trim(M')
    bool ok() const { return boundary_in_base && margin_iii >= 0.0 && margin_iv >= 0.0 && monotone_in_M; }
};
EnmReport verify_enm(const IntSet& E, int n, int M, int Mprime, int m);

// Times l in [0, n_max] with log|(g^{l-k})'(g^k x)| >= (l-k) log c for all k < l.
// Time 0 has no constraint; it is kept exactly when time 1 is, so the detector
// returns nothing on non-expanding orbits and all of [0, n_max] on uniform ones.
TimeSet surrogate_times_from_log_derivs(const std::vector<double>& log_derivs, int n_max, double c_expansion = 10.0);
TimeSet hyperbolic_surrogate_times(const SmoothMap1D& g, double x, int n_max, double c_expansion = 10.0);

struct HyperbolicReport {
    long checked_i = 0, violations_i = 0;
    long checked_ii = 0, violations_ii = 0;
    long checked_iii = 0, violations_iii = 0;
    // Worst margins; +inf when nothing was checked.
    double worst_i, worst_ii, worst_iii;
    HyperbolicReport();
    bool ok() const { return violations_i == 0 && violations_ii == 0 && violations_iii == 0; }
};

// log_derivs[i] = log|g'(g^i x)|. The expansion constant is 10.
HyperbolicReport verify_hyperbolic(const std::vector<double>& log_derivs, const IntSet& E, int n, int M, int m,
                                   double log_sup_gprime, double tol = 1e-9);
HyperbolicReport verify_hyperbolic(const SmoothMap1D& g, double x, const IntSet& E, int n, int M, int m,
                                   double log_sup_gprime, double tol = 1e-9);

// One row per point: x, space-separated times.
void write_times_csv(std::ostream& os, const std::vector<std::pair<double, TimeSet>>& rows);
// Density curve rows: n, d_n.
void write_density_csv(std::ostream& os, const std::vector<std::pair<int, double>>& rows);

}  // namespace acip
