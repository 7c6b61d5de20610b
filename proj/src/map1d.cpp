#include "acip/map1d.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "acip/error.hpp"

namespace acip {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnresolvedCritical: return "UnresolvedCritical";
        case ErrorCode::InverseNotBracketed: return "InverseNotBracketed";
        case ErrorCode::NotBounded: return "NotBounded";
        case ErrorCode::TreeBudgetExceeded: return "TreeBudgetExceeded";
        case ErrorCode::EmptySelection: return "EmptySelection";
        case ErrorCode::OffsetNotFound: return "OffsetNotFound";
        case ErrorCode::InsufficientAtoms: return "InsufficientAtoms";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::ExpressionError: return "ExpressionError";
    }
    return "Unknown";
}

double Domain::reduce(double x) const {
    if (!is_circle()) return x;
    double y = x - std::floor(x);
    return y >= 1.0 ? 0.0 : y;
}

double Domain::distance(double x, double y) const {
    double d = std::fabs(x - y);
    if (!is_circle()) return d;
    d -= std::floor(d);
    return std::min(d, 1.0 - d);
}

bool Domain::contains(double x, double tol) const {
    if (is_circle()) return x >= 0.0 && x < 1.0;
    return x >= -tol && x <= 1.0 + tol;
}

namespace {

double estimate_holder(const SmoothMap1D& f) {
    // Integer r: sup |d^r f|. Otherwise sup |d^{floor r + 1} f|, which bounds the
    // Hoelder constant of d^{floor r} f on sets of diameter at most one.
    int k = f.r_is_integer() ? f.floor_r() : f.floor_r() + 1;
    if (k > Jet::kMaxOrder) return std::numeric_limits<double>::infinity();
    const int n = 2048;
    double best = 0.0;
    for (int i = 0; i <= n; ++i) {
        double x = static_cast<double>(i) / n;
        if (f.domain().is_circle() && i == n) break;
        double v = std::fabs(f.deriv(k, x));
        if (std::isfinite(v)) best = std::max(best, v);
    }
    return best;
}

}  // namespace

SmoothMap1D::SmoothMap1D(std::string name, Domain domain, double r, ScalarFn lift, JetFn lift_jet,
                         std::optional<double> holder_const)
    : name_(std::move(name)), domain_(domain), r_(r), floor_r_(static_cast<int>(std::floor(r))),
      lift_(std::move(lift)), lift_jet_(std::move(lift_jet)) {
    if (!(r > 1.0)) throw std::invalid_argument("SmoothMap1D: smoothness r must exceed 1");
    if (floor_r_ + (r_is_integer() ? 0 : 1) > Jet::kMaxOrder)
        throw std::invalid_argument("SmoothMap1D: smoothness r too large for the jet order");
    holder_const_ = holder_const ? *holder_const : estimate_holder(*this);
}

double SmoothMap1D::deriv(int k, double x) const {
    if (k == 0) return lift_(x);
    return lift_jet_(Jet::variable(x, k)).deriv(k);
}

namespace presets {

SmoothMap1D logistic(double a, double r) {
    SmoothMap1D f(
        "logistic", Domain{DomainKind::UnitInterval}, r, [a](double x) { return a * x * (1.0 - x); },
        [a](const Jet& x) { return a * x * (1.0 - x); }, r <= 2.0 ? 2.0 * a : 0.0);
    f.family = "logistic";
    f.params = {{"a", a}};
    return f;
}

SmoothMap1D tent(double s, double r) {
    SmoothMap1D f(
        "tent", Domain{DomainKind::UnitInterval}, r,
        [s](double x) { return x <= 0.5 ? s * x : s * (1.0 - x); },
        [s](const Jet& x) { return x.value() <= 0.5 ? s * x : s * (1.0 - x); }, 0.0);
    f.family = "tent";
    f.params = {{"slope", s}};
    f.constant_slope = s;
    return f;
}

SmoothMap1D linear_circle(int d, double r) {
    double dd = d;
    SmoothMap1D f(
        d == 2 ? "doubling" : "linear" + std::to_string(d), Domain{DomainKind::Circle}, r,
        [dd](double x) { return dd * x; }, [dd](const Jet& x) { return dd * x; }, 0.0);
    f.family = d == 2 ? "doubling" : "linear_circle";
    f.params = {{"d", dd}};
    f.constant_slope = std::fabs(dd);
    return f;
}

SmoothMap1D doubling(double r) { return linear_circle(2, r); }

SmoothMap1D perturbed_circle(int d, double delta, double r) {
    double dd = d;
    const double tp = 2.0 * std::numbers::pi;
    SmoothMap1D f(
        "perturbed_circle", Domain{DomainKind::Circle}, r,
        [dd, delta, tp](double x) { return dd * x + delta * std::sin(tp * x); },
        [dd, delta, tp](const Jet& x) { return dd * x + delta * sin(tp * x); });
    f.family = "perturbed_circle";
    f.params = {{"d", dd}, {"delta", delta}};
    return f;
}

SmoothMap1D affine(double a, double c, Domain domain, double r) {
    if (domain.is_circle() && std::round(a) != a)
        throw std::invalid_argument("affine circle map needs an integer slope");
    SmoothMap1D f(
        "affine", domain, r, [a, c](double x) { return a * x + c; }, [a, c](const Jet& x) { return a * x + c; },
        0.0);
    f.family = "affine";
    f.params = {{"a", a}, {"c", c}};
    f.constant_slope = std::fabs(a);
    return f;
}

SmoothMap1D cubic(double a, double r) {
    const double third = 1.0 / 3.0;
    SmoothMap1D f(
        "cubic", Domain{DomainKind::UnitInterval}, r,
        [a, third](double x) {
            double u = x - third;
            return third + a * u * u * u;
        },
        [a, third](const Jet& x) { return third + a * ipow(x - third, 3); });
    f.family = "cubic";
    f.params = {{"a", a}};
    return f;
}

SmoothMap1D from_expression(const std::string& text, Domain domain, double r, const std::string& name) {
    Expression e = Expression::parse(text);
    SmoothMap1D f(
        name, domain, r, [e](double x) { return e.eval(x); }, [e](const Jet& x) { return e.eval(x); });
    f.family = "expression";
    return f;
}

SmoothMap1D by_name(const std::string& family, const std::map<std::string, double>& params, double r,
                    const std::string& expression, Domain domain) {
    auto get = [&](const std::string& key, double def) {
        auto it = params.find(key);
        return it == params.end() ? def : it->second;
    };
    if (family == "logistic") return logistic(get("a", 4.0), r);
    if (family == "tent") return tent(get("slope", 2.0), r);
    if (family == "doubling") return doubling(r);
    if (family == "linear_circle") return linear_circle(static_cast<int>(get("d", 3.0)), r);
    if (family == "perturbed_circle")
        return perturbed_circle(static_cast<int>(get("d", 2.0)), get("delta", 0.05), r);
    if (family == "affine") return affine(get("a", 1.0), get("c", 0.0), domain, r);
    if (family == "cubic") return cubic(get("a", 2.0), r);
    if (family == "expression") return from_expression(expression, domain, r);
    throw std::invalid_argument("unknown map family '" + family + "'");
}

}  // namespace presets

double log_abs_deriv(const SmoothMap1D& f, double x, double log_floor) {
    double d = std::fabs(f.deriv1(x));
    if (!(d > 0.0)) return -std::numeric_limits<double>::infinity();
    double l = std::log(d);
    return l < log_floor ? -std::numeric_limits<double>::infinity() : l;
}

OrbitRecord eval_orbit(const SmoothMap1D& f, double x, int n, double log_floor) {
    OrbitRecord o;
    o.start = x;
    o.points.resize(n + 1);
    o.log_derivs.resize(n);
    o.chain_log_deriv.resize(n + 1);
    o.points[0] = x;
    o.chain_log_deriv[0] = 0.0;
    for (int k = 0; k < n; ++k) {
        o.log_derivs[k] = log_abs_deriv(f, o.points[k], log_floor);
        o.chain_log_deriv[k + 1] = o.chain_log_deriv[k] + o.log_derivs[k];
        o.points[k + 1] = f.eval(o.points[k]);
    }
    return o;
}

double lyapunov_ft(const SmoothMap1D& f, double x, int n) {
    double s = 0.0;
    double y = x;
    for (int k = 0; k < n; ++k) {
        s += log_abs_deriv(f, y);
        y = f.eval(y);
    }
    return s / n;
}

ArgMax maximize(const std::function<double(double)>& h, double a, double b, int grid, int refine_iters) {
    grid = std::max(grid, 2);
    std::vector<double> xs(grid + 1), vs(grid + 1);
    for (int i = 0; i <= grid; ++i) {
        xs[i] = a + (b - a) * static_cast<double>(i) / grid;
        double v = h(xs[i]);
        vs[i] = std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    }
    ArgMax best{xs[0], vs[0]};
    for (int i = 1; i <= grid; ++i)
        if (vs[i] > best.value) best = {xs[i], vs[i]};
    // Refine around the three best grid points.
    std::vector<int> idx(grid + 1);
    for (int i = 0; i <= grid; ++i) idx[i] = i;
    int top = std::min(3, grid + 1);
    std::partial_sort(idx.begin(), idx.begin() + top, idx.end(), [&](int p, int q) { return vs[p] > vs[q]; });
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int t = 0; t < top; ++t) {
        int i = idx[t];
        double lo = xs[std::max(i - 1, 0)], hi = xs[std::min(i + 1, grid)];
        double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
        double fc = h(c), fd = h(d);
        for (int it = 0; it < refine_iters && hi - lo > 1e-15; ++it) {
            if (fc > fd) {
                hi = d;
                d = c;
                fd = fc;
                c = hi - phi * (hi - lo);
                fc = h(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + phi * (hi - lo);
                fd = h(d);
            }
        }
        if (fc > best.value) best = {c, fc};
        if (fd > best.value) best = {d, fd};
    }
    return best;
}

const NormEntry& MapNorms::entry(double order) const {
    for (const auto& e : sup_abs_deriv)
        if (e.order == order) return e;
    throw std::out_of_range("MapNorms: no entry for the requested order");
}

namespace {

NormEntry sup_entry(const SmoothMap1D& f, int k, int grid, int refine) {
    auto h = [&](double x) { return std::fabs(f.deriv(k, x)); };
    ArgMax m = maximize(h, 0.0, 1.0, grid, refine);
    double jump = 0.0, prev = h(0.0);
    for (int i = 1; i <= grid; ++i) {
        double v = h(static_cast<double>(i) / grid);
        jump = std::max(jump, std::fabs(v - prev));
        prev = v;
    }
    return {static_cast<double>(k), m.value, m.value + jump};
}

NormEntry holder_entry(const SmoothMap1D& f, int grid) {
    const int k = f.floor_r();
    const double alpha = f.r() - k;
    std::vector<double> v(grid + 1);
    for (int i = 0; i <= grid; ++i) v[i] = f.deriv(k, static_cast<double>(i) / grid);
    double lower = 0.0;
    for (int s = 1; s <= grid / 2; s *= 2) {
        double h = static_cast<double>(s) / grid;
        double denom = std::pow(h, alpha);
        for (int i = 0; i + s <= grid; ++i) lower = std::max(lower, std::fabs(v[i + s] - v[i]) / denom);
    }
    double upper = lower;
    if (k + 1 <= Jet::kMaxOrder) upper = std::max(upper, sup_entry(f, k + 1, grid, 40).upper);
    return {f.r(), lower, upper};
}

}  // namespace

MapNorms estimate_norms(const SmoothMap1D& f, int grid_size, int refine_iters, int n_used) {
    if (grid_size < 64) throw std::invalid_argument("estimate_norms: grid_size must be at least 64");
    MapNorms out;
    for (int k = 1; k <= f.floor_r(); ++k) out.sup_abs_deriv.push_back(sup_entry(f, k, grid_size, refine_iters));
    if (!f.r_is_integer()) out.sup_abs_deriv.push_back(holder_entry(f, grid_size));
    for (const auto& e : out.sup_abs_deriv) {
        out.f_prime_r_minus_1 = std::max(out.f_prime_r_minus_1, e.lower);
        out.f_prime_r_minus_1_upper = std::max(out.f_prime_r_minus_1_upper, e.upper);
    }
    // R(f) from the sup of |(f^n)'|, with a grid fine enough to see each branch of f^n.
    n_used = std::max(n_used, 1);
    double growth = std::pow(std::max(out.sup_first(), 1.0), n_used);
    int grid = static_cast<int>(std::min<double>(1 << 18, std::max<double>(grid_size, 16.0 * growth)));
    auto chain = [&](double x) {
        double s = 0.0, y = x;
        for (int j = 0; j < n_used; ++j) {
            s += log_abs_deriv(f, y);
            y = f.eval(y);
        }
        return s;
    };
    ArgMax m = maximize(chain, 0.0, f.domain().is_circle() ? 1.0 - 1.0 / grid : 1.0, grid, refine_iters);
    out.n_used = n_used;
    out.R_estimate = std::max(0.0, m.value / n_used);
    return out;
}

std::vector<CriticalPiece> critical_set(const SmoothMap1D& f, double tol, int grid_size) {
    const bool circle = f.domain().is_circle();
    const int n = std::max(grid_size, 64);
    const int npts = circle ? n : n + 1;
    std::vector<double> xs(npts), d(npts);
    double scale = 0.0;
    for (int i = 0; i < npts; ++i) {
        xs[i] = static_cast<double>(i) / n;
        d[i] = f.deriv1(xs[i]);
        scale = std::max(scale, std::fabs(d[i]));
    }
    const bool have_second = f.floor_r() >= 2;
    double scale2 = 0.0;
    if (have_second)
        for (int i = 0; i < npts; ++i) scale2 = std::max(scale2, std::fabs(f.deriv(2, xs[i])));
    const double zero = 1e-14 * std::max(scale, 1e-300);
    const double touch_zero = std::max(zero, scale2 * tol);
    const double ambiguous = 1e-6 * scale;

    auto is_zero = [&](double v) { return std::fabs(v) <= zero; };
    auto bisect = [&](double lo, double hi, const std::function<bool(double)>& left_pred) {
        // left_pred holds at lo and fails at hi.
        while (hi - lo > tol) {
            double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (left_pred(mid)) lo = mid;
            else hi = mid;
        }
        return std::pair<double, double>{lo, hi};
    };

    std::vector<CriticalPiece> out;
    const int ncells = circle ? n : n;
    int i = 0;
    // Zero runs at grid points.
    std::vector<char> zero_at(npts);
    for (int j = 0; j < npts; ++j) zero_at[j] = is_zero(d[j]);
    while (i < npts) {
        if (!zero_at[i]) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < npts && zero_at[j + 1]) ++j;
        if (j == i) {
            out.push_back({xs[i], xs[i], false});
        } else {
            double left = xs[i], right = xs[j];
            if (i > 0) left = bisect(xs[i - 1], xs[i], [&](double x) { return !is_zero(f.deriv1(x)); }).second;
            if (j + 1 < npts) right = bisect(xs[j], xs[j + 1], [&](double x) { return is_zero(f.deriv1(x)); }).first;
            out.push_back({left, right, true});
        }
        i = j + 1;
    }
    for (int c = 0; c < ncells; ++c) {
        int a = c, b = c + 1;
        double xa = xs[a];
        double xb = (b == npts) ? 1.0 : xs[b];
        double da = d[a], db = (b == npts) ? d[0] : d[b];
        if (is_zero(da) || is_zero(db)) continue;
        if ((da < 0) != (db < 0)) {
            bool neg_left = da < 0;
            auto br = bisect(xa, xb, [&](double x) { return (f.deriv1(x) < 0) == neg_left; });
            out.push_back({br.first, br.second, false});
            continue;
        }
        if (!have_second) continue;
        // Same sign at both ends: look for an interior minimum of |f'| touching zero.
        double sgn = da > 0 ? 1.0 : -1.0;
        double sa = sgn * f.deriv(2, xa), sb = sgn * f.deriv(2, xb);
        if (!(sa < 0 && sb >= 0)) continue;
        auto br = bisect(xa, xb, [&](double x) { return sgn * f.deriv(2, x) < 0; });
        double xm = 0.5 * (br.first + br.second);
        double dm = std::fabs(f.deriv1(xm));
        if (dm <= touch_zero) {
            out.push_back({br.first, br.second, false});
        } else if (dm <= ambiguous) {
            throw Error(ErrorCode::UnresolvedCritical, "map1d",
                        "near-tangency of f' to zero at x=" + std::to_string(xm) + " cannot be resolved");
        }
    }
    std::sort(out.begin(), out.end(), [](const CriticalPiece& p, const CriticalPiece& q) { return p.left < q.left; });
    // Merge pieces that overlap after localization.
    std::vector<CriticalPiece> merged;
    for (const auto& p : out) {
        if (!merged.empty() && p.left <= merged.back().right + tol) {
            merged.back().right = std::max(merged.back().right, p.right);
            merged.back().flat = merged.back().flat || p.flat;
        } else {
            merged.push_back(p);
        }
    }
    return merged;
}

SmoothMap1D power_map(const SmoothMap1D& f, int p, double A) {
    if (p < 1) throw std::invalid_argument("power_map: p must be at least 1");
    if (p == 1) return f;
    auto lift = [f, p](double x) {
        for (int i = 0; i < p - 1; ++i) x = f.eval(x);
        return f.lift(x);
    };
    const Domain dom = f.domain();
    auto lift_jet = [f, p, dom](const Jet& x) {
        Jet y = x;
        for (int i = 0; i < p - 1; ++i) {
            y = f.jet(y);
            double v = y.value();
            double red = dom.reduce(v);
            if (red != v) y = y + (red - v);
        }
        return f.jet(y);
    };
    MapNorms nf = estimate_norms(f, 512, 40, 1);
    double bound = std::pow(A * std::max(nf.f_prime_r_minus_1_upper, 1.0), p * f.r());
    SmoothMap1D g(f.name() + "^" + std::to_string(p), dom, f.r(), lift, lift_jet, bound);
    g.family = f.family;
    g.params = f.params;
    g.params["p"] = p;
    if (f.constant_slope) g.constant_slope = std::pow(*f.constant_slope, p);
    return g;
}

MapValidation validate_map(const SmoothMap1D& f, int grid) {
    MapValidation v;
    const bool circle = f.domain().is_circle();
    for (int i = 0; i <= grid; ++i) {
        double x = static_cast<double>(i) / grid;
        if (circle && i == grid) break;
        double y = f.eval(x);
        if (!f.domain().contains(y, 1e-12)) v.maps_into_domain = false;
        // Central differences of the lift, away from the interval ends.
        const double h = 1e-6;
        if (!circle && (x < h || x > 1.0 - h)) continue;
        double fd = (f.lift(x + h) - f.lift(x - h)) / (2.0 * h);
        double d1 = f.deriv1(x);
        double rel = std::fabs(fd - d1) / std::max(1.0, std::fabs(d1));
        v.worst_fd_rel_error = std::max(v.worst_fd_rel_error, rel);
        if (rel > 1e-6) v.derivative_matches_fd = false;
    }
    // Integer r: Lipschitz check of d^{r-1} f; otherwise Hoelder check of d^{floor r} f.
    int k = f.r_is_integer() ? f.floor_r() - 1 : f.floor_r();
    double alpha = f.r_is_integer() ? 1.0 : f.r() - f.floor_r();
    for (int i = 0; i < grid; ++i) {
        for (int s : {1, 3, 17, grid / 3}) {
            int j = i + s;
            if (j > grid || s <= 0) continue;
            double x = static_cast<double>(i) / grid, y = static_cast<double>(j) / grid;
            double dist = f.domain().distance(x, y);
            if (dist <= 0) continue;
            double lhs = std::fabs(f.deriv(k, x) - f.deriv(k, y));
            double rhs = f.holder_const() * std::pow(dist, alpha);
            double ratio = rhs > 0 ? lhs / rhs : (lhs > 0 ? std::numeric_limits<double>::infinity() : 0.0);
            v.worst_holder_ratio = std::max(v.worst_holder_ratio, ratio);
            if (lhs > rhs * (1.0 + 1e-9) + 1e-12) v.holder_bound_holds = false;
        }
    }
    return v;
}

}  // namespace acip
