#include "acip/branch.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "acip/csv.hpp"
#include "acip/error.hpp"

namespace acip {

const char* cut_reason_name(CutReason r) {
    switch (r) {
        case CutReason::Critical: return "critical";
        case CutReason::PreimageOfZero: return "preimage_of_zero";
        case CutReason::DomainBoundary: return "domain_boundary";
    }
    return "unknown";
}

int BranchPartition::index_of(double x) const {
    if (branches.empty()) return -1;
    if (domain.is_circle()) x = domain.reduce(x);
    // Largest a <= x.
    auto it = std::upper_bound(branches.begin(), branches.end(), x,
                               [](double v, const Branch& b) { return v < b.a; });
    if (domain.is_circle()) {
        const Branch& cand = it == branches.begin() ? branches.back() : *(it - 1);
        double off = x - cand.a;
        off -= std::floor(off);
        if (off < cand.length()) return static_cast<int>(&cand - branches.data());
        return -1;
    }
    if (it == branches.begin()) return -1;
    int i = static_cast<int>(it - branches.begin()) - 1;
    const Branch& b = branches[i];
    if (x < b.b) return i;
    if (x == b.b && b.b == 1.0 && i + 1 == static_cast<int>(branches.size())) return i;
    return -1;
}

namespace {

double bisect(double lo, double hi, double tol, const std::function<bool(double)>& left_pred) {
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (left_pred(mid)) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

double sup_abs_deriv_on(const SmoothMap1D& g, double a, double b, int depth) {
    auto h = [&](double x) {
        double s = 0.0, y = x;
        for (int j = 0; j < depth; ++j) {
            double d = std::fabs(g.deriv1(y));
            if (!(d > 0)) return 0.0;
            s += std::log(d);
            y = g.eval(y);
        }
        return std::exp(s);
    };
    return maximize(h, a, b, 64, 50).value;
}

int sign_on(const SmoothMap1D& g, double a, double b, int depth) {
    double x = 0.5 * (a + b);
    if (g.domain().is_circle()) x = g.domain().reduce(x);
    int s = 1;
    for (int j = 0; j < depth; ++j) {
        if (g.deriv1(x) < 0) s = -s;
        x = g.eval(x);
    }
    return s;
}

int rank(CutReason r) {
    switch (r) {
        case CutReason::DomainBoundary: return 0;
        case CutReason::Critical: return 1;
        case CutReason::PreimageOfZero: return 2;
    }
    return 3;
}

std::vector<CutPoint> normalize_cuts(std::vector<CutPoint> cuts, double tol) {
    std::sort(cuts.begin(), cuts.end(), [](const CutPoint& p, const CutPoint& q) { return p.x < q.x; });
    std::vector<CutPoint> out;
    for (const auto& c : cuts) {
        if (!out.empty() && c.x - out.back().x <= 4 * tol) {
            if (rank(c.reason) < rank(out.back().reason)) out.back().reason = c.reason;
            continue;
        }
        out.push_back(c);
    }
    return out;
}

bool inside_flat(const std::vector<CriticalPiece>& flats, double a, double b) {
    for (const auto& f : flats)
        if (a >= f.left - 1e-15 && b <= f.right + 1e-15) return true;
    return false;
}

void build_branches(BranchPartition& P, const SmoothMap1D& g) {
    const auto& cuts = P.cut_points;
    P.branches.clear();
    if (P.domain.is_circle()) {
        if (cuts.empty()) {
            P.branches.push_back({0.0, 1.0, 1, 0.0});
            return;
        }
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            double a = cuts[i].x;
            double b = i + 1 < cuts.size() ? cuts[i + 1].x : cuts[0].x + 1.0;
            if (inside_flat(P.flat_pieces, a, b)) continue;
            P.branches.push_back({a, b, 1, 0.0});
        }
    } else {
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            double a = cuts[i].x, b = cuts[i + 1].x;
            if (inside_flat(P.flat_pieces, a, b)) continue;
            P.branches.push_back({a, b, 1, 0.0});
        }
    }
    for (auto& br : P.branches) {
        br.sign = sign_on(g, br.a, br.b, P.depth);
        br.sup_slope = sup_abs_deriv_on(g, br.a, br.b, P.depth);
    }
}

}  // namespace

BranchPartition monotone_branches(const SmoothMap1D& g, double tol) {
    BranchPartition P;
    P.map_name = g.name();
    P.domain = g.domain();
    MapNorms norms = estimate_norms(g, 512, 30, 1);
    const double slope = std::max(norms.sup_first(), 1.0);
    const int grid = static_cast<int>(std::min<double>(1 << 20, std::max(4096.0, 64.0 * slope)));
    auto crit = critical_set(g, tol, grid);
    std::vector<CutPoint> cuts;
    for (const auto& c : crit) {
        if (c.flat) {
            P.flat_pieces.push_back(c);
            cuts.push_back({c.left, CutReason::Critical});
            cuts.push_back({c.right, CutReason::Critical});
        } else {
            cuts.push_back({c.center(), CutReason::Critical});
        }
    }
    if (P.domain.is_circle()) {
        // Zeros of g: wraps of the reduced value between neighbouring grid points.
        std::vector<double> v(grid + 1);
        for (int i = 0; i <= grid; ++i) v[i] = g.eval(static_cast<double>(i) / grid);
        for (int i = 0; i < grid; ++i) {
            double xa = static_cast<double>(i) / grid, xb = static_cast<double>(i + 1) / grid;
            if (v[i] == 0.0) {
                cuts.push_back({xa, CutReason::PreimageOfZero});
                continue;
            }
            if (std::fabs(v[i + 1] - v[i]) <= 0.5 || v[i + 1] == 0.0) continue;
            bool high_left = v[i] > 0.5;
            double x = bisect(xa, xb, tol, [&](double t) { return (g.eval(t) > 0.5) == high_left; });
            cuts.push_back({P.domain.reduce(x), CutReason::PreimageOfZero});
        }
    } else {
        cuts.push_back({0.0, CutReason::DomainBoundary});
        cuts.push_back({1.0, CutReason::DomainBoundary});
    }
    P.cut_points = normalize_cuts(cuts, tol);
    if (P.domain.is_circle() && P.cut_points.size() >= 2 &&
        P.cut_points.back().x + 4 * tol >= 1.0 + P.cut_points.front().x)
        P.cut_points.pop_back();
    build_branches(P, g);
    for (std::size_t i = 0; i < P.branches.size(); ++i) {
        auto& br = P.branches[i];
        auto end_value = [&](double x, bool left_end) {
            // Zero cuts: the limit is 0 on the side where g leaves 0 and 1 on the side where it arrives.
            auto it = std::find_if(P.cut_points.begin(), P.cut_points.end(),
                                   [&](const CutPoint& c) { return std::fabs(c.x - P.domain.reduce(x)) <= 4 * tol; });
            if (it != P.cut_points.end() && it->reason == CutReason::PreimageOfZero) {
                bool increasing = br.sign > 0;
                return (left_end == increasing) ? 0.0 : 1.0;
            }
            return g.eval(P.domain.reduce(x));
        };
        br.left_value = end_value(br.a, true);
        br.right_value = end_value(br.b, false);
    }
    return P;
}

bool branch_inverse(const SmoothMap1D& g, const BranchPartition& J, std::size_t br, double y, double tol, double& x) {
    const Branch& B = J.branches[br];
    double lo_v = std::min(B.left_value, B.right_value), hi_v = std::max(B.left_value, B.right_value);
    if (!(y > lo_v && y < hi_v)) return false;
    const bool increasing = B.left_value < B.right_value;
    const Domain& dom = J.domain;
    auto below = [&](double t) {
        double v = g.eval(dom.reduce(t));
        return increasing ? v < y : v > y;
    };
    double t = bisect(B.a, B.b, tol, below);
    x = dom.reduce(t);
    double resid = dom.is_circle() ? dom.distance(g.eval(x), y) : std::fabs(g.eval(x) - y);
    if (resid > std::max(1e-9, 8.0 * B.sup_slope * tol))
        throw Error(ErrorCode::InverseNotBracketed, "branch",
                    "no bracketed preimage of y=" + fmt_double(y) + " in branch [" + fmt_double(B.a) + ", " +
                        fmt_double(B.b) + ")");
    return true;
}

SlopeCountReport count_branches_with_min_slope(const SmoothMap1D& g, const BranchPartition& J, const MapNorms& norms,
                                               double s) {
    SlopeCountReport rep;
    rep.r_prime = g.r_prime();
    for (const auto& b : J.branches)
        if (b.sup_slope >= s) ++rep.count;
    double higher = g.r() >= 2.0 ? norms.entry(2).upper : norms.entry(g.r()).upper;
    double e = 1.0 / (rep.r_prime - 1.0);
    rep.constant = std::pow(higher, e);
    rep.bound = rep.constant * std::pow(s, -e) + 1.0;
    if (g.domain().is_circle()) rep.bound *= norms.sup_abs_deriv.front().upper;
    rep.within_bound = rep.count <= rep.bound;
    return rep;
}

SlopeCountReport count_branches_with_min_slope(const SmoothMap1D& g, double s) {
    BranchPartition J = monotone_branches(g);
    MapNorms n = estimate_norms(g, 2048, 60, 1);
    return count_branches_with_min_slope(g, J, n, s);
}

BranchPartition refine_branches(const SmoothMap1D& g, int n, double tol, std::size_t cap) {
    BranchPartition J = monotone_branches(g, tol);
    if (n <= 1) return J;
    // Cut values that get pulled back: everything except the interval ends, whose
    // preimages already lie among the depth-1 cuts.
    std::vector<CutPoint> base = J.cut_points;
    std::vector<CutPoint> current = base;
    bool truncated = false;
    for (int level = 2; level <= n && !truncated; ++level) {
        std::vector<CutPoint> next = base;
        std::vector<CutPoint> targets;
        for (const auto& c : current) {
            if (c.reason == CutReason::DomainBoundary) continue;
            if (J.domain.is_circle() && c.reason == CutReason::PreimageOfZero && c.x == 0.0) continue;
            targets.push_back(c);
        }
        std::sort(targets.begin(), targets.end(), [](const CutPoint& p, const CutPoint& q) { return p.x < q.x; });
        for (std::size_t bi = 0; bi < J.branches.size() && !truncated; ++bi) {
            const Branch& B = J.branches[bi];
            double lo_v = std::min(B.left_value, B.right_value), hi_v = std::max(B.left_value, B.right_value);
            auto first = std::upper_bound(targets.begin(), targets.end(), lo_v,
                                          [](double v, const CutPoint& c) { return v < c.x; });
            for (auto it = first; it != targets.end() && it->x < hi_v; ++it) {
                double x;
                if (branch_inverse(g, J, bi, it->x, tol, x)) next.push_back({x, it->reason});
                if (next.size() > cap) {
                    truncated = true;
                    break;
                }
            }
        }
        current = normalize_cuts(next, tol);
        if (J.domain.is_circle() && current.size() >= 2 && current.back().x + 4 * tol >= 1.0 + current.front().x)
            current.pop_back();
    }
    BranchPartition P;
    P.map_name = g.name();
    P.domain = J.domain;
    P.depth = n;
    P.flat_pieces = J.flat_pieces;
    P.cut_points = current;
    P.truncated = truncated;
    build_branches(P, g);
    return P;
}

void write_branches_csv(std::ostream& os, const BranchPartition& P) {
    CsvWriter w(os, {"map", "index", "a", "b", "sign", "sup_slope"});
    for (std::size_t i = 0; i < P.branches.size(); ++i) {
        const auto& b = P.branches[i];
        w.write(P.map_name, i, b.a, b.b, b.sign, b.sup_slope);
    }
}

}  // namespace acip
