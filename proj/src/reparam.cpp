#include "acip/reparam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "acip/csv.hpp"
#include "acip/error.hpp"
#include "acip/parallel.hpp"

namespace acip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxRate = 0.01;
constexpr double kParamTol = 1e-9;

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

Jet to_jet(const Poly& P, int order) {
    Jet j(P.c.empty() ? 0.0 : P.c[0], order);
    for (int k = 1; k <= order && k <= P.degree(); ++k) j.coeff_ref(k) = P.c[k];
    return j;
}

Poly from_jet(const Jet& j) {
    Poly P;
    P.c.resize(j.order() + 1);
    for (int k = 0; k <= j.order(); ++k) P.c[k] = j.coeff(k);
    return P;
}

void reduce_constant(Poly& P, const Domain& dom) {
    if (dom.is_circle() && !P.c.empty()) P.c[0] -= std::floor(P.c[0]);
}

// g ∘ Q as a Taylor model at t = 0 of the same order.
Poly compose_map(const SmoothMap1D& g, const Poly& Q) {
    Poly out = from_jet(g.jet(to_jet(Q, Q.degree())));
    reduce_constant(out, g.domain());
    return out;
}

// Accumulates sup norms of derivatives from Taylor coefficients at grid points.
struct SupAccumulator {
    std::vector<double> orders;
    int fl;
    double alpha;
    DerivSups s;

    explicit SupAccumulator(double r) : orders(higher_orders(r)), fl(static_cast<int>(std::floor(r))), alpha(r - fl) {
        s.first_min = kInf;
        for (double o : orders) s.higher.push_back({o, 0.0, 0.0});
    }
    // coeff(k) = d^k/k! at the point, k <= order.
    template <class Coeff>
    void add(Coeff coeff, int order) {
        double d1 = std::fabs(coeff(1));
        s.first = std::max(s.first, d1);
        s.first_min = std::min(s.first_min, d1);
        for (auto& e : s.higher) {
            double v;
            if (e.order == std::floor(e.order)) {
                int k = static_cast<int>(e.order);
                v = k <= order ? std::fabs(coeff(k)) * factorial(k) : 0.0;
            } else {
                int k = fl + 1;
                v = k <= order ? std::fabs(coeff(k)) * factorial(k) * std::pow(2.0, 1.0 - alpha) : 0.0;
            }
            e.lower = std::max(e.lower, v);
            e.upper = e.lower;
        }
    }
};

double grid_point(int i, int grid) { return -1.0 + 2.0 * i / (grid - 1); }

}  // namespace

// ---------------------------------------------------------------------------
// Reparametrization

Reparametrization Reparametrization::affine(double left, double right, Domain domain) {
    Reparametrization s;
    s.base.c = {0.5 * (left + right), 0.5 * (right - left)};
    s.domain = domain;
    return s;
}

Affine Reparametrization::theta() const {
    Affine t;
    for (const auto& a : chain) t = t.after(a);
    return t;
}

Poly Reparametrization::composed() const {
    Affine t = theta();
    return base.compose_affine(t.c, t.h);
}

double Reparametrization::eval(double t) const { return base.eval(theta()(t)); }

std::pair<double, double> Reparametrization::image() const {
    Poly P = composed();
    double lo = kInf, hi = -kInf;
    for (int i = 0; i < 1001; ++i) {
        double v = P.eval(grid_point(i, 1001));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

bool Reparametrization::is_reparametrization(int grid) const {
    Poly P = composed();
    int sign = 0;
    double prev = P.eval(-1.0);
    for (int i = 0; i < grid; ++i) {
        double t = grid_point(i, grid);
        double d = P.deriv(1, t);
        int s = d > 0 ? 1 : (d < 0 ? -1 : 0);
        if (s == 0 || (sign != 0 && s != sign)) return false;
        sign = s;
        double v = P.eval(t);
        if (i > 0) {
            if (domain.is_circle()) {
                if (std::floor(v) != std::floor(prev) || v == std::floor(v)) return false;
            } else if (v <= 0.0) {
                return false;
            }
        }
        prev = v;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Boundedness

std::vector<double> higher_orders(double r) {
    std::vector<double> out;
    int fl = static_cast<int>(std::floor(r));
    for (int k = 2; k <= fl; ++k) out.push_back(k);
    if (r != fl) out.push_back(r);
    return out;
}

int model_order(double r) { return std::min(Jet::kMaxOrder, static_cast<int>(std::floor(r)) + 3); }

double DerivSups::max_higher() const {
    double m = 0.0;
    for (const auto& e : higher) m = std::max(m, e.upper);
    return m;
}

double BoundednessCertificate::max_higher() const {
    double m = 0.0;
    for (const auto& e : sup_higher) m = std::max(m, e.upper);
    return m;
}

DerivSups poly_sups(const Poly& P, double r, int grid) {
    SupAccumulator acc(r);
    for (int i = 0; i < grid; ++i) {
        Poly s = P.shift(grid_point(i, grid));
        acc.add([&](int k) { return k <= s.degree() ? s.c[k] : 0.0; }, s.degree());
    }
    return acc.s;
}

BoundednessCertificate check_bounded(const Reparametrization& sig, const SmoothMap1D& g, double eps, int n, int grid) {
    BoundednessCertificate cert;
    cert.eps = eps;
    const Poly P = sig.composed();
    const int order = std::min(Jet::kMaxOrder, static_cast<int>(std::floor(g.r())) + 1);
    std::vector<SupAccumulator> acc(n + 1, SupAccumulator(g.r()));
    for (int i = 0; i < grid; ++i) {
        Poly s = P.shift(grid_point(i, grid));
        Jet j = to_jet(s, order);
        for (int k = 0; k <= n; ++k) {
            if (k > 0) {
                j = g.jet(j);
                if (g.domain().is_circle()) j = j - std::floor(j.value());
            }
            acc[k].add([&](int m) { return j.coeff(m); }, j.order());
        }
    }
    const DerivSups& s0 = acc[0].s;
    cert.sup_first_deriv = s0.first;
    cert.sup_higher = s0.higher;
    cert.is_bounded = s0.bounded();
    cert.is_eps_bounded = s0.eps_bounded(eps);
    for (int k = 0; k <= n && acc[k].s.eps_bounded(eps); ++k) cert.n_eps_bounded_up_to = k;
    return cert;
}

double distortion_ratio(const Poly& P, int grid) {
    double hi = 0.0, lo = kInf;
    for (int i = 0; i < grid; ++i) {
        double d = std::fabs(P.deriv(1, grid_point(i, grid)));
        hi = std::max(hi, d);
        lo = std::min(lo, d);
    }
    return lo > 0 ? hi / lo : kInf;
}

double distortion_ratio(const Reparametrization& sig, double r, int grid) {
    Poly P = sig.composed();
    if (!poly_sups(P, r, grid).bounded())
        throw Error(ErrorCode::NotBounded, "reparam", "distortion_ratio needs a bounded reparametrization");
    return distortion_ratio(P, grid);
}

// ---------------------------------------------------------------------------
// Epsilon

EpsilonChoice choose_epsilon(const SmoothMap1D& g) { return choose_epsilon(g, estimate_norms(g, 1024, 60, 1)); }

EpsilonChoice choose_epsilon(const SmoothMap1D& g, const MapNorms& norms) {
    EpsilonChoice ch;
    ch.r_prime = g.r_prime();
    ch.norm_r_minus_1 = norms.f_prime_r_minus_1_upper;
    const double rhs = 1.0 / (2.0 * ch.norm_r_minus_1);
    double eps = 0.5;
    while (!(std::pow(2.0 * eps, ch.r_prime - 1.0) < rhs)) eps *= 0.5;
    ch.eps = eps;

    // ||d^s g^x_{2ε}|| <= 3 ε max(1, |g'(x)|) with g^x_{2ε}(t) = g(x + 2εt).
    ch.aux_worst_margin = kInf;
    const auto orders = higher_orders(g.r());
    for (int i = 0; i <= 256; ++i) {
        double x = i / 256.0;
        double rhs_x = 3.0 * eps * std::max(1.0, std::fabs(g.deriv1(x)));
        double first = 0.0;
        for (int j = 0; j <= 32; ++j) first = std::max(first, std::fabs(g.deriv1(x + 2.0 * eps * (j / 16.0 - 1.0))));
        double worst = 2.0 * eps * first;
        for (double s : orders) worst = std::max(worst, std::pow(2.0 * eps, s) * norms.entry(s).upper);
        ch.aux_worst_margin = std::min(ch.aux_worst_margin, rhs_x - worst);
    }
    ch.aux_bound_holds = ch.aux_worst_margin >= -1e-12;
    return ch;
}

// ---------------------------------------------------------------------------
// Splitting

SplitResult split_reparam(const Poly& gamma, double r, double eps, int grid) {
    const DerivSups s = poly_sups(gamma, r, grid);
    if (!s.bounded()) throw Error(ErrorCode::NotBounded, "reparam", "split_reparam needs a bounded reparametrization");
    SplitResult out;
    double rho = std::min(1.0, eps / s.first);
    for (const auto& e : s.higher) {
        if (e.upper <= 0.0) continue;
        rho = std::min(rho, std::pow(s.first_min / (6.0 * e.upper), 1.0 / (e.order - 1.0)));
    }
    if (rho >= 1.0) {
        out.plain.push_back(Affine{});
        out.rho = 1.0;
        return out;
    }
    // Sampled sups can sit just below the truth; shrink until every piece certifies.
    for (int attempt = 0; attempt < 60; ++attempt, rho *= 0.95) {
        out = SplitResult{};
        out.rho = rho;
        out.plain.push_back({-(1.0 - rho), rho});
        out.plain.push_back({1.0 - rho, rho});
        const double lo = -1.0 + 2.0 * rho, hi = 1.0 - 2.0 * rho;
        if (hi > lo) {
            const int count = static_cast<int>(std::ceil(3.0 * (hi - lo) / (2.0 * rho) - 1e-12));
            const double step = (hi - lo) / count;
            for (int j = 0; j < count; ++j) out.expanding.push_back({lo + (j + 0.5) * step, rho});
        }
        bool ok = true;
        auto certify = [&](const Affine& a) {
            Poly q = gamma.compose_affine(a.c, a.h);
            DerivSups qs = poly_sups(q, r, std::min(grid, 257));
            return qs.eps_bounded(eps) && std::fabs(q.c.size() > 1 ? q.c[1] : 0.0) >= eps / 6.0;
        };
        for (const auto& a : out.plain) ok = ok && certify(a);
        for (const auto& a : out.expanding) ok = ok && certify(a);
        if (ok) return out;
    }
    throw Error(ErrorCode::NotBounded, "reparam", "split_reparam could not certify its pieces");
}

SplitResult split_reparam(const Reparametrization& gamma, double r, double eps, int grid) {
    return split_reparam(gamma.composed(), r, eps, grid);
}

const char* vertex_type_name(VertexType t) { return t == VertexType::Expanding ? "expanding" : "plain"; }

// ---------------------------------------------------------------------------
// Tree

Affine ReparamTree::theta(std::size_t id) const {
    std::vector<Affine> chain;
    for (long v = static_cast<long>(id); v > 0; v = vertices[v].parent) chain.push_back(vertices[v].contraction);
    Affine t;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) t = t.after(*it);
    return t;
}

Poly ReparamTree::model_at(std::size_t id, int k) const {
    Affine phi;
    long v = static_cast<long>(id);
    while (vertices[v].level > k) {
        phi = vertices[v].contraction.after(phi);
        v = vertices[v].parent;
    }
    Poly P = vertices[v].model.compose_affine(phi.c, phi.h);
    return P;
}

namespace {

struct BuildContext {
    const SmoothMap1D& g;
    double eps;
    double r;
    int order;
    const TreeOptions& opts;
};

double log_abs_gprime(const SmoothMap1D& g, double lift_value) {
    return std::log(std::fabs(g.deriv1(g.domain().reduce(lift_value))));
}

bool near_marked_point(const Domain& dom, double v) {
    if (dom.is_circle()) {
        double f = v - std::floor(v);
        return std::min(f, 1.0 - f) < 1e-10;
    }
    return std::fabs(v) < 1e-10;
}

// Cut points of the parent's usable parameter range [lo, hi] for the next level.
struct Cuts {
    std::vector<double> t;
    std::vector<char> zero;  // cut where g ∘ P is the marked point
};

Cuts find_cuts(const BuildContext& ctx, const Poly& P, double lo, double hi) {
    const SmoothMap1D& g = ctx.g;
    const int G = 2048;
    std::vector<double> ts(G + 1), us(G + 1), ds(G + 1), ys(G + 1);
    for (int i = 0; i <= G; ++i) {
        ts[i] = lo + (hi - lo) * i / G;
        double x = P.eval(ts[i]);
        double xr = g.domain().reduce(x);
        ds[i] = g.deriv1(xr);
        us[i] = std::log(std::fabs(ds[i]));
        ys[i] = g.eval(xr);
    }
    auto bisect = [&](double a, double b, auto&& left_pred) {
        for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
            double m = 0.5 * (a + b);
            if (m <= a || m >= b) break;
            if (left_pred(m)) a = m;
            else b = m;
        }
        return 0.5 * (a + b);
    };
    auto u_at = [&](double t) { return log_abs_gprime(g, P.eval(t)); };
    Cuts c;
    auto level_crossings = [&](double a, double b, double ua, double ub) {
        // Integers strictly between floor-bands of ua and ub.
        double top = std::max(ua, ub), bot = std::min(ua, ub);
        bot = std::max(bot, -(ctx.opts.kprime_max + 2.0));
        for (double j = std::floor(bot) + 1.0; j <= top; j += 1.0) {
            if (!(j > bot)) continue;
            bool below_left = ua < j;
            c.t.push_back(bisect(a, b, [&](double t) { return (u_at(t) < j) == below_left; }));
            c.zero.push_back(0);
        }
    };
    for (int i = 0; i < G; ++i) {
        const double a = ts[i], b = ts[i + 1];
        if ((ds[i] > 0) != (ds[i + 1] > 0) && ds[i] != 0 && ds[i + 1] != 0) {
            bool pos_left = ds[i] > 0;
            double z = bisect(a, b, [&](double t) { return (g.deriv1(g.domain().reduce(P.eval(t))) > 0) == pos_left; });
            c.t.push_back(z);
            c.zero.push_back(0);
            level_crossings(a, z, us[i], -kInf);
            level_crossings(z, b, -kInf, us[i + 1]);
        } else if (std::floor(us[i]) != std::floor(us[i + 1])) {
            level_crossings(a, b, us[i], us[i + 1]);
        }
        if (g.domain().is_circle() && std::fabs(ys[i + 1] - ys[i]) > 0.5) {
            bool high_left = ys[i] > 0.5;
            c.t.push_back(bisect(a, b, [&](double t) { return (g.eval(g.domain().reduce(P.eval(t))) > 0.5) == high_left; }));
            c.zero.push_back(1);
        }
    }
    return c;
}

struct Piece {
    double a, b;
    bool zero_a, zero_b;
};

// Children of one parent, in parameter order.
std::vector<TreeVertex> expand_vertex(const BuildContext& ctx, const TreeVertex& parent, std::size_t& dropped) {
    const SmoothMap1D& g = ctx.g;
    const Domain& dom = g.domain();
    const Poly& P = parent.model;
    const double lo = parent.vtype == VertexType::Expanding ? -1.0 / 3.0 : -1.0;
    const double hi = -lo;

    Cuts cuts = find_cuts(ctx, P, lo, hi);
    std::vector<std::pair<double, char>> pts;
    for (std::size_t i = 0; i < cuts.t.size(); ++i) pts.emplace_back(cuts.t[i], cuts.zero[i]);
    std::sort(pts.begin(), pts.end());
    std::vector<std::pair<double, char>> merged;
    merged.emplace_back(lo, 0);
    for (const auto& p : pts) {
        if (p.first - merged.back().first < 1e-13) {
            merged.back().second |= p.second;
            continue;
        }
        merged.push_back(p);
    }
    if (hi - merged.back().first < 1e-13) merged.back().first = hi;
    else merged.emplace_back(hi, 0);
    merged.front().first = lo;
    merged.back().first = hi;

    auto end_is_zero = [&](double t, char flagged) {
        if (flagged) return true;
        if (t == -1.0 && parent.zero_at_left) return true;
        return near_marked_point(dom, g.eval(dom.reduce(P.eval(t))));
    };

    std::vector<Piece> pieces;
    for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
        Piece pc{merged[i].first, merged[i + 1].first, end_is_zero(merged[i].first, merged[i].second),
                 end_is_zero(merged[i + 1].first, merged[i + 1].second)};
        if (pc.b <= pc.a) continue;
        if (pc.zero_a && pc.zero_b) {
            double m = 0.5 * (pc.a + pc.b);
            pieces.push_back({pc.a, m, true, false});
            pieces.push_back({m, pc.b, false, true});
        } else {
            pieces.push_back(pc);
        }
    }

    std::vector<TreeVertex> out;
    for (const Piece& pc : pieces) {
        const double mid = 0.5 * (pc.a + pc.b);
        const double u = log_abs_gprime(g, P.eval(mid));
        if (!std::isfinite(u)) {
            ++dropped;
            continue;
        }
        const int k = static_cast<int>(std::floor(std::max(0.0, u)));
        const int kp = static_cast<int>(std::floor(std::max(0.0, -u)));
        if (kp > ctx.opts.kprime_max) {
            ++dropped;
            continue;
        }
        // Tiles of half-length <= 1/100, refined until g ∘ P ∘ ψ is bounded.
        int N = std::max(1, static_cast<int>(std::ceil((pc.b - pc.a) / (2.0 * kMaxRate) - 1e-9)));
        std::vector<std::pair<Affine, Poly>> tiles;
        for (;;) {
            tiles.clear();
            bool all_bounded = true;
            const double w = (pc.b - pc.a) / N;
            for (int j = 0; j < N && all_bounded; ++j) {
                Affine psi{pc.a + (j + 0.5) * w, 0.5 * w};
                if (j == N - 1 && pc.zero_b && !(j == 0 && pc.zero_a)) psi.h = -psi.h;
                Poly gamma = compose_map(g, P.compose_affine(psi.c, psi.h));
                if (!poly_sups(gamma, ctx.r, ctx.opts.build_grid).bounded()) all_bounded = false;
                tiles.emplace_back(psi, std::move(gamma));
            }
            if (all_bounded) break;
            N *= 2;
            if (N > (1 << 22))
                throw Error(ErrorCode::NotBounded, "reparam", "no bounded subdivision near t=" + fmt_double(mid));
        }
        for (std::size_t j = 0; j < tiles.size(); ++j) {
            const Affine& psi = tiles[j].first;
            const Poly& gamma = tiles[j].second;
            const bool tile_zero_left = (j == 0 && pc.zero_a) || (j + 1 == tiles.size() && pc.zero_b);
            auto make = [&](const Affine& iota, VertexType vt, bool zero_left) {
                TreeVertex c;
                c.level = parent.level + 1;
                c.contraction = psi.after(iota);
                c.label_k = k;
                c.label_kprime = kp;
                c.vtype = vt;
                c.model = gamma.compose_affine(iota.c, iota.h);
                c.zero_at_left = zero_left;
                if (vt == VertexType::Expanding) c.margin_item3 = std::fabs(c.model.c[1]) - ctx.eps / 6.0;
                out.push_back(std::move(c));
            };
            if (poly_sups(gamma, ctx.r, ctx.opts.build_grid).eps_bounded(ctx.eps)) {
                make(Affine{}, VertexType::Plain, tile_zero_left);
                continue;
            }
            SplitResult sp = split_reparam(gamma, ctx.r, ctx.eps, ctx.opts.build_grid);
            for (std::size_t q = 0; q < sp.plain.size(); ++q)
                make(sp.plain[q], VertexType::Plain, tile_zero_left && sp.plain[q](-1.0) == -1.0);
            for (const auto& iota : sp.expanding) make(iota, VertexType::Expanding, false);
        }
    }
    return out;
}

// Parameter s in [-1,1] with model(s) = y mod 1 near the guess s0 (Newton, then bisection fallback).
double invert_model(const Poly& Q, const Domain& dom, double y, double s0) {
    double v0 = Q.eval(s0);
    double target = y;
    if (dom.is_circle()) target = y + std::round(v0 - y);
    double s = std::clamp(s0, -1.5, 1.5);
    for (int it = 0; it < 30; ++it) {
        double d = Q.deriv(1, s);
        if (d == 0) break;
        double step = (Q.eval(s) - target) / d;
        s -= step;
        if (std::fabs(step) < 1e-16) break;
    }
    return s;
}

// k and k' labels of the orbit steps 0..levels-1; false if a step has no label below the cap.
bool orbit_labels(const SmoothMap1D& g, const std::vector<double>& orbit, int levels, int kprime_max,
                  std::vector<int>& kseq, std::vector<int>& kpseq) {
    kseq.clear();
    kpseq.clear();
    for (int i = 0; i < levels; ++i) {
        double u = std::log(std::fabs(g.deriv1(orbit[i])));
        if (!std::isfinite(u) || std::floor(std::max(0.0, -u)) > kprime_max) return false;
        kseq.push_back(static_cast<int>(std::floor(std::max(0.0, u))));
        kpseq.push_back(static_cast<int>(std::floor(std::max(0.0, -u))));
    }
    return true;
}

bool chain_labels_match(const ReparamTree& tree, std::size_t id, const std::vector<int>& kseq,
                        const std::vector<int>& kpseq) {
    for (long a = static_cast<long>(id); a > 0; a = tree.vertices[a].parent) {
        const TreeVertex& av = tree.vertices[a];
        if (av.label_k != kseq[av.level - 1] || av.label_kprime != kpseq[av.level - 1]) return false;
    }
    return true;
}

bool usable(const TreeVertex& v, double t) {
    double lim = v.vtype == VertexType::Expanding ? 1.0 / 3.0 : 1.0;
    return std::fabs(t) <= lim + kParamTol;
}

// Children of `hit` containing the point whose next orbit value is y_next.
void descend(const ReparamTree& tree, const Domain& dom, const TreeWalk::Hit& hit, double y_next,
             std::vector<TreeWalk::Hit>& out) {
    const TreeVertex& v = tree.vertices[hit.id];
    if (!usable(v, hit.t)) return;
    for (long c = v.child_begin; c < v.child_end; ++c) {
        const TreeVertex& ch = tree.vertices[c];
        double s0 = ch.contraction.inverse(hit.t);
        if (std::fabs(s0) > 1.0 + 1e-6) continue;
        double s = invert_model(ch.model, dom, y_next, s0);
        if (std::fabs(s) <= 1.0 + kParamTol) out.push_back({static_cast<std::size_t>(c), s});
    }
}

}  // namespace

ReparamTree build_tree(const Reparametrization& sigma, const SmoothMap1D& g, int p, int n_levels, double eps,
                       const TreeOptions& opts) {
    ReparamTree tree;
    tree.map_name = g.name();
    tree.p = p;
    tree.eps = eps;
    tree.r = g.r();
    tree.sigma = sigma;
    tree.options = opts;
    tree.log_sup_gprime = std::log(std::max(estimate_norms(g, 1024, 40, 1).sup_abs_deriv.front().upper, 1.0));
    const int order = model_order(g.r());
    BuildContext ctx{g, eps, g.r(), order, opts};

    TreeVertex root;
    root.model = sigma.composed();
    if (root.model.degree() > order)
        throw Error(ErrorCode::ConfigError, "reparam", "base polynomial degree exceeds the model order");
    root.model.c.resize(order + 1, 0.0);
    reduce_constant(root.model, g.domain());
    root.zero_at_left = near_marked_point(g.domain(), sigma.eval(-1.0));
    if (!poly_sups(root.model, g.r(), 1001).eps_bounded(eps))
        throw Error(ErrorCode::NotBounded, "reparam", "root reparametrization is not eps-bounded");
    tree.vertices.push_back(root);
    tree.level_begin = {0, 1};

    std::vector<TreeWalk::Hit> focus_hits;
    double focus_y = 0.0;
    if (opts.focus) {
        focus_y = *opts.focus;
        double t = invert_model(root.model, g.domain(), focus_y, 0.0);
        if (std::fabs(t) <= 1.0 + kParamTol) focus_hits.push_back({0, t});
    }

    std::vector<std::size_t> growth = {1};
    for (int n = 0; n < n_levels; ++n) {
        std::vector<std::size_t> parents;
        if (opts.focus) {
            for (const auto& h : focus_hits)
                if (usable(tree.vertices[h.id], h.t)) parents.push_back(h.id);
        } else {
            for (std::size_t id = tree.level_begin[n]; id < tree.level_begin[n + 1]; ++id) parents.push_back(id);
        }
        std::vector<std::vector<TreeVertex>> kids(parents.size());
        std::vector<std::size_t> dropped(parents.size(), 0);
        parallel_for(parents.size(), opts.jobs,
                     [&](std::size_t i) { kids[i] = expand_vertex(ctx, tree.vertices[parents[i]], dropped[i]); });
        std::size_t total = 0;
        for (const auto& k : kids) total += k.size();
        growth.push_back(total);
        if (total > opts.budget) {
            std::ostringstream msg;
            msg << "level " << n + 1 << " would hold " << total << " vertices (cap " << opts.budget
                << "); vertices per level so far:";
            for (auto c : growth) msg << ' ' << c;
            throw Error(ErrorCode::TreeBudgetExceeded, "reparam", msg.str());
        }
        for (std::size_t i = 0; i < parents.size(); ++i) {
            TreeVertex& par = tree.vertices[parents[i]];
            par.child_begin = static_cast<long>(tree.vertices.size());
            for (auto& c : kids[i]) {
                c.parent = static_cast<long>(parents[i]);
                tree.vertices.push_back(std::move(c));
            }
            tree.vertices[parents[i]].child_end = static_cast<long>(tree.vertices.size());
            tree.dropped_kprime += dropped[i];
        }
        tree.level_begin.push_back(tree.vertices.size());
        if (opts.focus) {
            focus_y = g.eval(focus_y);
            std::vector<TreeWalk::Hit> next;
            for (const auto& h : focus_hits) descend(tree, g.domain(), h, focus_y, next);
            focus_hits = std::move(next);
        }
    }
    return tree;
}

TreeWalk walk_tree(const ReparamTree& tree, const SmoothMap1D& g, double x, int n_max) {
    TreeWalk w;
    const Domain& dom = g.domain();
    w.orbit.push_back(x);
    w.levels.emplace_back();
    double t = invert_model(tree.vertices[0].model, dom, x, 0.0);
    if (std::fabs(t) <= 1.0 + kParamTol) w.levels[0].push_back({0, t});
    const int top = std::min(n_max, tree.n_levels());
    for (int n = 0; n < top; ++n) {
        w.orbit.push_back(g.eval(w.orbit.back()));
        std::vector<TreeWalk::Hit> next;
        for (const auto& h : w.levels[n]) descend(tree, dom, h, w.orbit.back(), next);
        w.levels.push_back(std::move(next));
    }
    return w;
}

// ---------------------------------------------------------------------------
// Verification

ItemStats::ItemStats() : worst_margin(kInf) {}

void ItemStats::add(double margin, double tol) {
    ++checked;
    worst_margin = std::min(worst_margin, margin);
    if (!(margin >= -tol)) ++failed;
}

bool TreeReport::ok() const {
    for (int i = 1; i <= 6; ++i)
        if (!item[i].ok()) return false;
    return distortion.ok();
}

TreeReport verify_tree(const ReparamTree& tree, const SmoothMap1D& g, const std::vector<double>& sample, int grid) {
    TreeReport rep;
    const double eps = tree.eps;
    const double r = tree.r;

    // Items 1-3 and distortion, per vertex.
    for (std::size_t id = 0; id < tree.vertices.size(); ++id) {
        const TreeVertex& v = tree.vertices[id];
        for (int k = 0; k <= v.level; ++k) {
            DerivSups s = poly_sups(tree.model_at(id, k), r, grid);
            rep.item[1].add(std::min(eps - s.first, s.first / 6.0 - s.max_higher()), 1e-12 * eps);
            if (s.bounded()) rep.distortion.add(1.5 - (s.first_min > 0 ? s.first / s.first_min : kInf), 1e-9);
        }
        if (id == 0) continue;
        rep.item[2].add(kMaxRate - v.contraction.rate(), 1e-15);
        if (tree.vertices[v.parent].vtype == VertexType::Expanding)
            rep.item[2].add(1.0 / 3.0 - (std::fabs(v.contraction.c) + v.contraction.rate()), 1e-12);
        if (v.vtype == VertexType::Expanding) rep.item[3].add(std::fabs(v.model.c[1]) - eps / 6.0, 0.0);
    }

    // Item 5: children per parent and k'.
    const double log_sup = tree.log_sup_gprime;
    const double kcount = std::floor(std::max(0.0, log_sup)) + 1.0;
    for (std::size_t id = 0; id < tree.vertices.size(); ++id) {
        const TreeVertex& v = tree.vertices[id];
        if (v.child_end <= v.child_begin) continue;
        std::map<std::pair<int, int>, long> counts;
        for (long c = v.child_begin; c < v.child_end; ++c)
            ++counts[{tree.vertices[c].label_kprime, static_cast<int>(tree.vertices[c].vtype)}];
        for (const auto& [key, cnt] : counts) {
            const double kp = key.first;
            const bool exp_type = key.second == static_cast<int>(VertexType::Expanding);
            const double expo = exp_type ? std::max(log_sup, kp / (r - 1.0)) : kp / (r - 1.0);
            const double bound = tree.options.C_r * kcount * std::exp(expo);
            rep.item[5].add(bound - static_cast<double>(cnt), 0.0);
        }
    }

    // Items 4 and 6 on witnesses.
    const int levels = tree.n_levels();
    for (double x : sample) {
        TreeWalk w = walk_tree(tree, g, x, levels);
        if (w.levels[0].empty()) {
            ++rep.witnesses_skipped;
            continue;
        }
        std::vector<int> kseq, kpseq;
        if (!orbit_labels(g, w.orbit, levels, tree.options.kprime_max, kseq, kpseq)) {
            ++rep.witnesses_skipped;
            continue;
        }
        ++rep.witnesses;
        for (int n = 1; n <= levels; ++n) {
            rep.item[6].add(w.levels[n].empty() ? -1.0 : 0.0);
            bool covered = false;
            for (const auto& h : w.levels[n]) {
                if (!usable(tree.vertices[h.id], h.t)) continue;
                if (chain_labels_match(tree, h.id, kseq, kpseq)) {
                    covered = true;
                    break;
                }
            }
            rep.item[4].add(covered ? 0.0 : -1.0);
        }
    }
    return rep;
}

void write_tree_csv(std::ostream& os, const ReparamTree& tree) {
    CsvWriter w(os, {"level", "parent_id", "rate", "k", "kprime", "vtype", "image_left", "image_right", "margin_item3"});
    for (const auto& v : tree.vertices) {
        double a = v.model.eval(-1.0), b = v.model.eval(1.0);
        w.write(v.level, v.parent, v.contraction.rate(), v.label_k, v.label_kprime, vertex_type_name(v.vtype),
                std::min(a, b), std::max(a, b), v.margin_item3);
    }
}

TimeSet geometric_times_tree(const ReparamTree& tree, const SmoothMap1D& g, double x, int n_max) {
    TimeSet E;
    const int levels = std::min(n_max, tree.n_levels());
    E.horizon = n_max;
    TreeWalk w = walk_tree(tree, g, x, levels);
    std::vector<int> kseq, kpseq;
    if (w.levels[0].empty()) return E;
    // Labels past a step without one cannot match any vertex.
    orbit_labels(g, w.orbit, levels, tree.options.kprime_max, kseq, kpseq);
    for (int m = 1; m <= levels && m <= static_cast<int>(kseq.size()); ++m) {
        for (const auto& h : w.levels[m]) {
            const TreeVertex& v = tree.vertices[h.id];
            if (v.vtype == VertexType::Expanding && std::fabs(h.t) <= 1.0 / 3.0 + kParamTol &&
                chain_labels_match(tree, h.id, kseq, kpseq)) {
                E.elems.push_back(m);
                break;
            }
        }
    }
    return E;
}

}  // namespace acip
