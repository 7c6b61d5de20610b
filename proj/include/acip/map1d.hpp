#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acip/expr.hpp"
#include "acip/jet.hpp"

namespace acip {

enum class DomainKind { UnitInterval, Circle };

struct Domain {
    DomainKind kind = DomainKind::UnitInterval;

    bool is_circle() const { return kind == DomainKind::Circle; }
    // Canonical representative: [0,1) on the circle, unchanged on the interval.
    double reduce(double x) const;
    double distance(double x, double y) const;
    bool contains(double x, double tol = 0.0) const;
    const char* name() const { return is_circle() ? "circle" : "interval"; }
};

// A C^r self-map of [0,1] or of the circle R/Z.
// On the circle the map is given by a lift F: R -> R with F(x+1) - F(x) an
// integer; eval() reduces F(x) into [0,1). Derivatives are those of the lift.
class SmoothMap1D {
public:
    using ScalarFn = std::function<double(double)>;
    using JetFn = std::function<Jet(const Jet&)>;

    SmoothMap1D(std::string name, Domain domain, double r, ScalarFn lift, JetFn lift_jet,
                std::optional<double> holder_const = std::nullopt);

    const std::string& name() const { return name_; }
    const Domain& domain() const { return domain_; }
    double r() const { return r_; }
    int floor_r() const { return floor_r_; }
    bool r_is_integer() const { return static_cast<double>(floor_r_) == r_; }
    // Smaller of min(r, 2), the exponent r' used by the counting and epsilon rules.
    double r_prime() const { return r_ < 2.0 ? r_ : 2.0; }
    double holder_const() const { return holder_const_; }

    double eval(double x) const { return domain_.reduce(lift_(x)); }
    double lift(double x) const { return lift_(x); }
    double deriv(int k, double x) const;
    double deriv1(double x) const { return deriv(1, x); }
    // Jet of the lift composed with `x`.
    Jet jet(const Jet& x) const { return lift_jet_(x); }
    Jet jet_at(double x, int order) const { return lift_jet_(Jet::variable(x, order)); }

    // |f'| is the same constant everywhere (linear presets); used by exact checks.
    std::optional<double> constant_slope;
    // Preset family and parameters, for reference data lookup and export.
    std::string family;
    std::map<std::string, double> params;

    const ScalarFn& lift_fn() const { return lift_; }
    const JetFn& lift_jet_fn() const { return lift_jet_; }

private:
    std::string name_;
    Domain domain_;
    double r_;
    int floor_r_;
    ScalarFn lift_;
    JetFn lift_jet_;
    double holder_const_ = 0.0;
};

namespace presets {
SmoothMap1D logistic(double a = 4.0, double r = 3.0);
SmoothMap1D tent(double slope, double r = 2.0);
// x -> d x mod 1 on the circle; d = 2 is the doubling map.
SmoothMap1D linear_circle(int d, double r = 2.0);
SmoothMap1D doubling(double r = 2.0);
// x -> d x + delta sin(2 pi x) mod 1.
SmoothMap1D perturbed_circle(int d, double delta, double r = 2.0);
// x -> a x + c, reduced mod 1 on the circle (a must then be an integer).
SmoothMap1D affine(double a, double c, Domain domain, double r = 2.0);
// x -> 1/3 + a (x - 1/3)^3 on [0,1], a in (0, 9/4]; degenerate critical point at 1/3.
SmoothMap1D cubic(double a = 2.0, double r = 3.0);
SmoothMap1D from_expression(const std::string& text, Domain domain, double r, const std::string& name = "expr");
// Preset lookup by family name and parameters, as used by the configuration layer.
SmoothMap1D by_name(const std::string& family, const std::map<std::string, double>& params, double r,
                    const std::string& expression = "", Domain domain = {});
}  // namespace presets

struct OrbitRecord {
    double start = 0.0;
    std::vector<double> points;           // f^k(x), k in [0, n]
    std::vector<double> log_derivs;       // log|f'(f^k x)|, k in [0, n)
    std::vector<double> chain_log_deriv;  // prefix sums, k in [0, n]
    int length() const { return static_cast<int>(log_derivs.size()); }
};

inline constexpr double kLogDerivFloor = -700.0;

OrbitRecord eval_orbit(const SmoothMap1D& f, double x, int n, double log_floor = kLogDerivFloor);
double log_abs_deriv(const SmoothMap1D& f, double x, double log_floor = kLogDerivFloor);
double lyapunov_ft(const SmoothMap1D& f, double x, int n);

struct NormEntry {
    double order = 1.0;  // k in [1, floor r], or r itself for the Hoelder entry
    double lower = 0.0;  // grid + refinement value; never above the true sup
    double upper = 0.0;  // heuristic upper estimate
};

struct MapNorms {
    std::vector<NormEntry> sup_abs_deriv;
    double f_prime_r_minus_1 = 0.0;        // max of the lower values
    double f_prime_r_minus_1_upper = 0.0;  // max of the upper values
    double R_estimate = 0.0;
    int n_used = 0;
    bool lower_bounds = true;

    double sup_first() const { return sup_abs_deriv.front().lower; }
    // ||d^s f|| for s = order (integer or r).
    const NormEntry& entry(double order) const;
};

MapNorms estimate_norms(const SmoothMap1D& f, int grid_size = 1024, int refine_iters = 60, int n_used = 8);

struct CriticalPiece {
    double left = 0.0;
    double right = 0.0;
    bool flat = false;  // f' vanishes on the whole interval [left, right]
    double center() const { return 0.5 * (left + right); }
};

std::vector<CriticalPiece> critical_set(const SmoothMap1D& f, double tol = 1e-12, int grid_size = 4096);

// g = f^p. eval is literal p-fold composition of f.eval; derivatives come from
// jet composition; holder_const is the propagated bound A^{pr} ||f'||_{r-1}^{pr}.
SmoothMap1D power_map(const SmoothMap1D& f, int p, double A = 2.0);

// Maximum of |h| over [a,b] by grid scan followed by golden-section refinement
// around the best cells.
struct ArgMax {
    double x = 0.0;
    double value = 0.0;
};
ArgMax maximize(const std::function<double(double)>& h, double a, double b, int grid, int refine_iters = 60);

struct MapValidation {
    bool maps_into_domain = true;
    bool derivative_matches_fd = true;
    bool holder_bound_holds = true;
    double worst_fd_rel_error = 0.0;
    double worst_holder_ratio = 0.0;
};
MapValidation validate_map(const SmoothMap1D& f, int grid = 257);

}  // namespace acip
