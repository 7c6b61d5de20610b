#include "acip/entropy.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <tuple>

#include "acip/csv.hpp"
#include "acip/error.hpp"
#include "acip/parallel.hpp"
#include "acip/sum.hpp"

namespace acip {

namespace {

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Sorts and merges the cut list, labels every cell at its midpoint, fuses
// neighbouring cells with equal labels and numbers atoms by first appearance.
Partition1D finish(std::string id, const Domain& domain, std::vector<double> cuts,
                   const std::function<Label(double)>& label_at, double tol) {
    cuts.push_back(0.0);
    cuts.push_back(1.0);
    for (auto& c : cuts) c = std::clamp(c, 0.0, 1.0);
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> clean{0.0};
    for (double c : cuts)
        if (c - clean.back() > tol && 1.0 - c > tol) clean.push_back(c);
    clean.push_back(1.0);

    Partition1D P;
    P.id = std::move(id);
    P.domain = domain;
    std::map<Label, int> index;
    std::vector<Label> cell_labels;
    P.cuts.push_back(0.0);
    for (std::size_t i = 0; i + 1 < clean.size(); ++i) {
        Label lab = label_at(0.5 * (clean[i] + clean[i + 1]));
        if (!cell_labels.empty() && cell_labels.back() == lab) {
            P.cuts.back() = clean[i + 1];
            continue;
        }
        cell_labels.push_back(lab);
        P.cuts.push_back(clean[i + 1]);
    }
    for (auto& lab : cell_labels) {
        auto [it, fresh] = index.try_emplace(lab, static_cast<int>(P.labels.size()));
        if (fresh) P.labels.push_back(lab);
        P.cell_atom.push_back(it->second);
    }
    return P;
}

Label concat(const Label& a, const Label& b) {
    Label out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

double level(int q, long long k, double a) { return static_cast<double>(k) / q + a; }

long long first_regular_bin(int q, double a) {
    return static_cast<long long>(std::floor(q * (kDeepFloor - a)));
}

double log_abs_slope(const SmoothMap1D& g, double x) {
    const double d = std::fabs(g.deriv1(x));
    return d > 0.0 ? std::log(d) : -std::numeric_limits<double>::infinity();
}

// Splits [0,1] where |g'| may stop being monotone: critical points and sign changes of g''.
std::vector<double> monotone_slope_splits(const SmoothMap1D& g) {
    std::vector<double> s;
    for (const auto& c : critical_set(g)) {
        if (c.flat) {
            s.push_back(c.left);
            s.push_back(c.right);
        } else {
            s.push_back(c.center());
        }
    }
    const int grid = 4096;
    double x0 = 0.0, d0 = g.deriv(2, 0.0);
    for (int i = 1; i <= grid; ++i) {
        const double x1 = static_cast<double>(i) / grid, d1 = g.deriv(2, x1);
        if ((d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0)) {
            double lo = x0, hi = x1, dlo = d0;
            for (int it = 0; it < 80 && hi - lo > 1e-16; ++it) {
                const double mid = 0.5 * (lo + hi), dm = g.deriv(2, mid);
                if ((dm < 0.0) == (dlo < 0.0)) {
                    lo = mid;
                    dlo = dm;
                } else {
                    hi = mid;
                }
            }
            s.push_back(0.5 * (lo + hi));
        }
        x0 = x1;
        d0 = d1;
    }
    std::sort(s.begin(), s.end());
    return s;
}

long double entropy_ld(const std::vector<long double>& masses) {
    long double h = 0;
    for (long double p : masses)
        if (p > 0) h -= p * std::log(p);
    return h;
}

double orbit_deriv(const SmoothMap1D& g, double y, int k, double* image) {
    double d = 1.0;
    for (int i = 0; i < k; ++i) {
        d *= std::fabs(g.deriv1(y));
        y = g.eval(y);
    }
    if (image) *image = y;
    return d;
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

// Wilson score interval for `hits` successes out of `n`.
std::pair<double, double> wilson(std::size_t hits, std::size_t n, double z) {
    if (n == 0) return {0.0, 1.0};
    const double N = static_cast<double>(n), ph = hits / N, z2 = z * z;
    const double denom = 1.0 + z2 / N;
    const double center = (ph + z2 / (2 * N)) / denom;
    const double half = z * std::sqrt(ph * (1 - ph) / N + z2 / (4 * N * N)) / denom;
    // center - half is exactly 0 at zero hits but rounds to a tiny positive value.
    return {hits == 0 ? 0.0 : std::max(0.0, center - half), hits == n ? 1.0 : std::min(1.0, center + half)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Partitions

std::size_t Partition1D::cell_of(double x) const {
    x = domain.is_circle() ? domain.reduce(x) : std::clamp(x, 0.0, 1.0);
    const auto it = std::upper_bound(cuts.begin(), cuts.end(), x);
    const std::ptrdiff_t i = (it - cuts.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(cell_count()) - 1));
}

int Partition1D::atom_of(double x) const { return cell_atom[cell_of(x)]; }

double Partition1D::atom_length(int atom) const {
    Sum s;
    for (std::size_t i = 0; i < cell_count(); ++i)
        if (cell_atom[i] == atom) s.add(cuts[i + 1] - cuts[i]);
    return s.value();
}

long long qq_deep_bin(int q, double a) { return first_regular_bin(q, a) - 1; }

long long qq_bin(const SmoothMap1D& g, int q, double a, double x) {
    const long long k0 = first_regular_bin(q, a);
    const double L = log_abs_slope(g, x);
    if (!(L > level(q, k0, a))) return k0 - 1;
    return std::max(k0, static_cast<long long>(std::ceil(q * (L - a))) - 1);
}

Partition1D build_Qq(const SmoothMap1D& g, int q, double a, double tol) {
    if (q < 1) throw Error(ErrorCode::ConfigError, "entropy", "q must be at least 1");
    std::vector<double> splits = monotone_slope_splits(g);
    splits.insert(splits.begin(), 0.0);
    splits.push_back(1.0);
    const long long k0 = first_regular_bin(q, a);
    std::vector<double> cuts;
    for (std::size_t i = 0; i + 1 < splits.size(); ++i) {
        const double u = splits[i], v = splits[i + 1];
        if (v - u <= tol) continue;
        const double Lu = log_abs_slope(g, u), Lv = log_abs_slope(g, v);
        const double lo = std::min(Lu, Lv), hi = std::max(Lu, Lv);
        const bool increasing = Lv > Lu;
        long long kfirst = std::max(k0, static_cast<long long>(std::floor(q * (std::max(lo, kDeepFloor - 1.0) - a))));
        for (long long k = kfirst; level(q, k, a) < hi; ++k) {
            const double ell = level(q, k, a);
            if (!(ell > lo)) continue;
            double x0 = u, x1 = v;
            for (int it = 0; it < 200 && x1 - x0 > tol * 0.01; ++it) {
                const double mid = 0.5 * (x0 + x1);
                const bool above = log_abs_slope(g, mid) > ell;
                if (above == increasing) x1 = mid; else x0 = mid;
            }
            cuts.push_back(0.5 * (x0 + x1));
        }
    }
    Partition1D P = finish("Q_" + std::to_string(q), g.domain(), std::move(cuts),
                           [&](double x) { return Label{qq_bin(g, q, a, x)}; }, tol);
    P.offset_a = a;
    return P;
}

double choose_offset(const SmoothMap1D& g, int q, const std::vector<double>& points, std::uint64_t rng_seed,
                     double min_distance, int max_draws) {
    std::mt19937_64 rng(splitmix(rng_seed));
    std::vector<double> sorted;
    sorted.reserve(points.size());
    for (double y : points) sorted.push_back(g.domain().is_circle() ? g.domain().reduce(y) : y);
    std::sort(sorted.begin(), sorted.end());
    for (int draw = 0; draw < max_draws; ++draw) {
        double u = unit(rng);
        if (u == 0.0) continue;
        const double a = -u / q;
        const Partition1D Q = build_Qq(g, q, a);
        std::vector<double> bounds(Q.cuts.begin() + 1, Q.cuts.end() - 1);
        if (Q.domain.is_circle() && Q.cell_atom.front() != Q.cell_atom.back()) {
            bounds.push_back(0.0);
            bounds.push_back(1.0);
        }
        bool clear = true;
        for (double c : bounds) {
            auto it = std::lower_bound(sorted.begin(), sorted.end(), c - min_distance);
            if (it != sorted.end() && *it < c + min_distance) {
                clear = false;
                break;
            }
        }
        if (clear) return a;
    }
    throw Error(ErrorCode::OffsetNotFound, "entropy",
                "no offset in (-1/q, 0) keeps every orbit point " + fmt_double(min_distance) +
                    " away from the boundaries of Q_" + std::to_string(q) + " after " + std::to_string(max_draws) +
                    " draws");
}

Partition1D branch_partition(const SmoothMap1D& g, const BranchPartition& J) {
    std::vector<double> cuts;
    for (const auto& br : J.branches) {
        cuts.push_back(g.domain().reduce(br.a));
        cuts.push_back(br.b >= 1.0 && g.domain().is_circle() ? br.b - 1.0 : br.b);
    }
    for (const auto& f : J.flat_pieces) {
        cuts.push_back(f.left);
        cuts.push_back(f.right);
    }
    return finish("J", g.domain(), std::move(cuts), [&](double x) { return Label{J.index_of(x)}; }, 1e-14);
}

Partition1D branch_partition(const SmoothMap1D& g) { return branch_partition(g, monotone_branches(g)); }

Partition1D critical_partition(const SmoothMap1D& g) {
    std::vector<double> pts;
    for (const auto& c : critical_set(g)) {
        if (c.flat) {
            pts.push_back(c.left);
            pts.push_back(c.right);
        } else {
            pts.push_back(c.center());
        }
    }
    std::sort(pts.begin(), pts.end());
    const bool circle = g.domain().is_circle();
    const long long count = static_cast<long long>(pts.size());
    auto label = [&](double x) {
        long long idx = std::upper_bound(pts.begin(), pts.end(), x) - pts.begin();
        if (circle && idx == count) idx = 0;
        return Label{idx};
    };
    return finish("J_crit", g.domain(), pts, label, 1e-14);
}

Partition1D join(const Partition1D& P, const Partition1D& Q, double tol) {
    std::vector<double> cuts = P.cuts;
    cuts.insert(cuts.end(), Q.cuts.begin(), Q.cuts.end());
    auto label = [&](double x) { return concat(P.labels[P.atom_of(x)], Q.labels[Q.atom_of(x)]); };
    Partition1D out = finish(P.id + "∨" + Q.id, P.domain, std::move(cuts), label, tol);
    out.offset_a = P.offset_a != 0.0 ? P.offset_a : Q.offset_a;
    return out;
}

Partition1D refine(const Partition1D& P, const SmoothMap1D& g, int m, double tol) {
    if (m < 1) throw Error(ErrorCode::ConfigError, "entropy", "refinement depth must be at least 1");
    const BranchPartition J = monotone_branches(g);
    const Partition1D Jp = branch_partition(g, J);
    Partition1D cur = P;
    for (int step = 1; step < m; ++step) {
        std::vector<double> cuts = P.cuts;
        cuts.insert(cuts.end(), Jp.cuts.begin(), Jp.cuts.end());
        for (std::size_t b = 0; b < J.branches.size(); ++b) {
            for (std::size_t i = 1; i + 1 < cur.cuts.size(); ++i) {
                double x = 0.0;
                if (branch_inverse(g, J, b, cur.cuts[i], 1e-15, x)) cuts.push_back(g.domain().reduce(x));
            }
        }
        auto label = [&](double x) { return concat(P.labels[P.atom_of(x)], cur.labels[cur.atom_of(g.eval(x))]); };
        Partition1D next = finish(P.id + "^" + std::to_string(step + 1), P.domain, std::move(cuts), label, tol);
        next.offset_a = P.offset_a;
        cur = std::move(next);
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Entropy of measures

EntropyReport entropy_of_masses(const std::vector<double>& masses) {
    EntropyReport rep;
    Sum total;
    for (double w : masses) total.add(w);
    const double t = total.value();
    if (!(t > 0.0)) return rep;
    Sum h;
    for (double w : masses) {
        if (!(w > 0.0)) continue;
        const double p = w / t;
        rep.per_atom_masses.push_back(p);
        h.add(-p * std::log(p));
    }
    rep.H_value = std::max(0.0, h.value());
    return rep;
}

EntropyReport partition_entropy(const EmpiricalMeasure& mu, const Partition1D& P) {
    std::vector<Sum> mass(P.labels.size());
    for (const auto& at : mu.atoms) mass[P.atom_of(at.point)].add(at.weight);
    std::vector<double> masses;
    for (const auto& s : mass) masses.push_back(s.value());
    EntropyReport rep = entropy_of_masses(masses);
    rep.partition_id = P.id;
    rep.measure_id = "n=" + std::to_string(mu.n) + ",M=" + std::to_string(mu.M) + ",m=" + std::to_string(mu.m);
    return rep;
}

PqLabeler::PqLabeler(const SmoothMap1D& map, int q_, double a_) : g(&map), J(monotone_branches(map)), q(q_), a(a_) {}

long long PqLabeler::operator()(double x) const {
    const long long b = J.index_of(x);
    const long long k = qq_bin(*g, q, a, x);
    return ((b + 1) << 32) + (k + (1LL << 31));
}

std::vector<EntropyReport> itinerary_entropies(const EmpiricalMeasure& mu, const SmoothMap1D& g,
                                               const std::function<long long(double)>& label,
                                               const std::vector<int>& m_list, int jobs) {
    if (m_list.empty()) return {};
    const int m_max = *std::max_element(m_list.begin(), m_list.end());
    if (m_max < 1) throw Error(ErrorCode::ConfigError, "entropy", "refinement depths must be positive");
    const std::size_t N = mu.atoms.size();
    std::vector<long long> sym(N * m_max);
    parallel_for(N, jobs, [&](std::size_t i) {
        double y = mu.atoms[i].point;
        for (int j = 0; j < m_max; ++j) {
            sym[i * m_max + j] = label(y);
            y = g.eval(y);
        }
    });

    // Class of each atom under P^j, numbered by the lexicographic order of itineraries.
    std::vector<std::uint32_t> cls(N, 0);
    std::vector<std::size_t> order(N);
    std::map<int, EntropyReport> by_m;
    for (int j = 0; j < m_max; ++j) {
        for (std::size_t i = 0; i < N; ++i) order[i] = i;
        auto key = [&](std::size_t i) { return std::make_pair(cls[i], sym[i * m_max + j]); };
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            const auto kx = key(x), ky = key(y);
            return kx != ky ? kx < ky : x < y;
        });
        std::vector<std::uint32_t> next(N);
        std::vector<double> masses;
        std::uint32_t c = 0;
        Sum run;
        for (std::size_t r = 0; r < N; ++r) {
            if (r > 0 && key(order[r]) != key(order[r - 1])) {
                masses.push_back(run.value());
                run = Sum{};
                ++c;
            }
            next[order[r]] = c;
            run.add(mu.atoms[order[r]].weight);
        }
        if (N > 0) masses.push_back(run.value());
        cls.swap(next);
        const int m = j + 1;
        if (std::find(m_list.begin(), m_list.end(), m) != m_list.end()) {
            EntropyReport rep = entropy_of_masses(masses);
            rep.m = m;
            rep.partition_id = "P^" + std::to_string(m);
            by_m[m] = std::move(rep);
        }
    }
    std::vector<EntropyReport> out;
    for (int m : m_list) out.push_back(by_m.at(m));
    return out;
}

double entropy_slope(const std::vector<int>& m, const std::vector<double>& H, int last) {
    std::vector<std::pair<int, double>> pts;
    for (std::size_t i = 0; i < m.size(); ++i) pts.emplace_back(m[i], H[i]);
    std::sort(pts.begin(), pts.end());
    if (pts.empty()) return 0.0;
    if (static_cast<int>(pts.size()) > last) pts.erase(pts.begin(), pts.end() - last);
    if (pts.size() == 1) return pts[0].second / pts[0].first;
    double mx = 0, my = 0;
    for (auto [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= pts.size();
    my /= pts.size();
    double sxy = 0, sxx = 0;
    for (auto [x, y] : pts) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Checks

void write_checks_csv(std::ostream& os, const std::vector<InequalityCheck>& rows) {
    CsvWriter w(os, {"check_name", "instance_id", "lhs", "rhs", "margin", "ci_low", "ci_high", "pass"});
    for (const auto& r : rows)
        w.write(r.name, r.instance, fmt_double(r.lhs), fmt_double(r.rhs), fmt_double(r.margin), fmt_double(r.ci_low),
                fmt_double(r.ci_high), r.pass ? "1" : "0");
}

MisiurewiczReport verify_misiurewicz(const FiniteSystem& sys, const IntSet& F, int m) {
    if (F.empty() || m < 1) throw Error(ErrorCode::ConfigError, "entropy", "Misiurewicz check needs F nonempty and m >= 1");
    const int S = static_cast<int>(sys.lambda.size());
    const int maxF = F.back();
    // powers[k][s] = T^k(s)
    const int depth = std::max(maxF + 1, m);
    std::vector<std::vector<int>> powers(depth, std::vector<int>(S));
    for (int s = 0; s < S; ++s) powers[0][s] = s;
    for (int k = 1; k < depth; ++k)
        for (int s = 0; s < S; ++s) powers[k][s] = sys.T[powers[k - 1][s]];

    std::vector<long double> lamF(S, 0);
    for (int k : F)
        for (int s = 0; s < S; ++s) lamF[powers[k][s]] += sys.lambda[s] / F.size();

    auto entropy_of = [&](const std::vector<long double>& w, const std::vector<int>& times) {
        std::map<std::vector<int>, long double> mass;
        for (int s = 0; s < S; ++s) {
            if (!(w[s] > 0)) continue;
            std::vector<int> key;
            for (int t : times) key.push_back(sys.R[powers[t][s]]);
            mass[key] += w[s];
        }
        std::vector<long double> ps;
        for (auto& [k, v] : mass) ps.push_back(v);
        return entropy_ld(ps);
    };
    std::vector<int> first_m(m);
    for (int j = 0; j < m; ++j) first_m[j] = j;

    MisiurewiczReport rep;
    std::map<int, long double> atom_mass;
    for (int s = 0; s < S; ++s)
        if (lamF[s] > 0) atom_mass[sys.R[s]] += lamF[s];
    rep.positive_atoms = static_cast<int>(atom_mass.size());
    rep.boundary_size = static_cast<int>(boundary_set(F).size());
    const long double nF = F.size();
    rep.lhs = entropy_of(lamF, first_m) / m;
    rep.rhs = entropy_of(sys.lambda, F) / nF -
              m * std::log(static_cast<long double>(std::max(rep.positive_atoms, 1))) * rep.boundary_size / nF;
    rep.margin = rep.lhs - rep.rhs;
    return rep;
}

namespace {

SuiteSummary summarize(std::string name, const std::vector<long double>& margins) {
    SuiteSummary s;
    s.name = std::move(name);
    s.instances = margins.size();
    s.worst_margin = std::numeric_limits<double>::infinity();
    for (long double mg : margins) {
        if (mg < -1e-12L) ++s.violations;
        s.worst_margin = std::min(s.worst_margin, static_cast<double>(mg));
    }
    return s;
}

}  // namespace

SuiteSummary misiurewicz_exhaustive_suite(int jobs) {
    const int S = 8;
    std::vector<std::vector<int>> maps(2, std::vector<int>(S));
    for (int s = 0; s < S; ++s) {
        maps[0][s] = (s + 1) % S;
        maps[1][s] = (2 * s) % S;
    }
    std::vector<std::vector<long double>> weights(3, std::vector<long double>(S, 0));
    long double tri = 0;
    for (int s = 0; s < S; ++s) tri += s + 1;
    for (int s = 0; s < S; ++s) {
        weights[0][s] = 1.0L / S;
        weights[1][s] = (s + 1) / tri;
    }
    weights[2][3] = 1;
    // Two-block partitions: state 0 always in block 0, mask bits 1..7 choose block 1.
    std::vector<int> masks;
    for (int mask = 1; mask < (1 << (S - 1)); ++mask) masks.push_back(mask);
    struct Inst { int map, w, mask, F, m; };
    std::vector<Inst> all;
    for (int t = 0; t < 2; ++t)
        for (int w = 0; w < 3; ++w)
            for (int mask : masks)
                for (int F = 1; F < (1 << 6); ++F)
                    for (int m = 1; m <= 4; ++m) all.push_back({t, w, mask, F, m});
    std::vector<long double> margins(all.size());
    parallel_for(all.size(), jobs, [&](std::size_t i) {
        const Inst& in = all[i];
        FiniteSystem sys;
        sys.lambda = weights[in.w];
        sys.T = maps[in.map];
        sys.R.assign(S, 0);
        for (int s = 1; s < S; ++s) sys.R[s] = (in.mask >> (s - 1)) & 1;
        IntSet F;
        for (int k = 0; k < 6; ++k)
            if (in.F >> k & 1) F.push_back(k);
        margins[i] = verify_misiurewicz(sys, F, in.m).margin;
    });
    return summarize("misiurewicz_exhaustive", margins);
}

SuiteSummary misiurewicz_random_suite(std::size_t count, std::uint64_t seed, int max_states, int jobs) {
    std::vector<long double> margins(count);
    parallel_for(count, jobs, [&](std::size_t i) {
        std::mt19937_64 rng(splitmix(seed ^ splitmix(i)));
        const int S = 2 + static_cast<int>(rng() % (max_states - 1));
        FiniteSystem sys;
        sys.lambda.resize(S);
        long double total = 0;
        for (int s = 0; s < S; ++s) {
            sys.lambda[s] = unit(rng) < 0.2 ? 0 : static_cast<long double>(unit(rng));
            total += sys.lambda[s];
        }
        if (!(total > 0)) {
            sys.lambda[0] = 1;
            total = 1;
        }
        for (auto& l : sys.lambda) l /= total;
        sys.T.resize(S);
        sys.R.resize(S);
        const int blocks = 1 + static_cast<int>(rng() % S);
        for (int s = 0; s < S; ++s) {
            sys.T[s] = static_cast<int>(rng() % S);
            sys.R[s] = static_cast<int>(rng() % blocks);
        }
        IntSet F;
        while (F.empty())
            for (int k = 0; k < 8; ++k)
                if (rng() & 1) F.push_back(k);
        const int m = 1 + static_cast<int>(rng() % 5);
        margins[i] = verify_misiurewicz(sys, F, m).margin;
    });
    return summarize("misiurewicz_random", margins);
}

double sete_constant() { return 4.0 / (std::numbers::e * (1.0 - std::exp(-0.5))); }

InequalityCheck sete_tech_check(const std::vector<std::pair<long long, double>>& entries, const std::string& instance) {
    long double lhs = 0, rhs = sete_constant();
    for (auto [k, x] : entries) {
        if (x > 0) lhs -= static_cast<long double>(x) * std::log(static_cast<long double>(x));
        rhs += std::llabs(k) * static_cast<long double>(x);
    }
    InequalityCheck c;
    c.name = "sete_tech";
    c.instance = instance;
    c.lhs = static_cast<double>(lhs);
    c.rhs = static_cast<double>(rhs);
    c.margin = static_cast<double>(rhs - lhs);
    c.ci_low = c.ci_high = c.lhs;
    c.pass = rhs - lhs >= -1e-12L;
    return c;
}

SuiteSummary sete_random_suite(std::size_t count, std::uint64_t seed, int jobs) {
    std::vector<long double> margins(count);
    parallel_for(count, jobs, [&](std::size_t i) {
        std::mt19937_64 rng(splitmix(seed ^ splitmix(i)));
        const int K = 1 + static_cast<int>(rng() % 40);
        std::vector<std::pair<long long, double>> e;
        for (int j = 0; j < K; ++j) {
            const long long k = static_cast<long long>(rng() % 41) - 20;
            // Half the entries sit at the maximiser of -x log x - |k| x.
            const double x = (rng() & 1) ? std::exp(-1.0 - std::llabs(k)) : unit(rng);
            e.emplace_back(k, x);
        }
        margins[i] = sete_tech_check(e, std::to_string(i)).margin;
    });
    return summarize("sete_tech_random", margins);
}

ManeReport verify_mane_bounds(const EmpiricalMeasure& mu, const SmoothMap1D& g, int q, double a) {
    ManeReport rep;
    const double c0 = sete_constant();
    std::map<long long, Sum> bins;
    Sum total, abs_int;
    for (const auto& at : mu.atoms) {
        bins[qq_bin(g, q, a, at.point)].add(at.weight);
        total.add(at.weight);
        abs_int.add(at.weight * std::fabs(log_abs_slope(g, at.point)));
    }
    const double t = total.value();
    std::vector<std::pair<long long, double>> entries;
    std::vector<double> masses;
    for (auto& [k, s] : bins) {
        entries.emplace_back(k, s.value() / t);
        masses.push_back(s.value());
    }
    const std::string inst = "q=" + std::to_string(q);
    rep.sete = sete_tech_check(entries, inst);
    const double HQ = entropy_of_masses(masses).H_value;
    rep.qq_bound = {"mane_Qq", inst, HQ, c0 + 1.0 + q * abs_int.value() / t, 0, HQ, HQ, false};
    rep.qq_bound.margin = rep.qq_bound.rhs - HQ;
    rep.qq_bound.pass = rep.qq_bound.margin >= -1e-12;

    const Partition1D Jc = critical_partition(g);
    std::vector<double> piece_len(Jc.labels.size());
    for (int i = 0; i < Jc.atom_count(); ++i) piece_len[i] = Jc.atom_length(i);
    std::vector<Sum> jm(Jc.labels.size());
    Sum log_rho;
    for (const auto& at : mu.atoms) {
        const int i = Jc.atom_of(at.point);
        jm[i].add(at.weight);
        log_rho.add(at.weight * std::fabs(std::log(piece_len[i])));
    }
    std::vector<double> jmass;
    for (auto& s : jm) jmass.push_back(s.value());
    const double HJ = entropy_of_masses(jmass).H_value;
    rep.j_bound = {"mane_J", inst, HJ, c0 + 2.0 * log_rho.value() / t, 0, HJ, HJ, false};
    rep.j_bound.margin = rep.j_bound.rhs - HJ;
    rep.j_bound.pass = rep.j_bound.margin >= -1e-12;

    if (Jc.atom_count() > 1 || !critical_set(g).empty()) {
        const auto count = count_branches_with_min_slope(g, 1.0);
        const double rp = g.r_prime();
        for (const auto& at : mu.atoms) {
            const double bound = std::pow(std::fabs(g.deriv1(at.point)), 1.0 / (rp - 1.0)) / count.constant;
            ++rep.rho_checked;
            if (piece_len[Jc.atom_of(at.point)] < bound - 1e-12) ++rep.rho_violations;
        }
    }
    return rep;
}

bool contains(const IntervalSet& S, double x) {
    for (auto [l, r] : S)
        if (x >= l && x < r) return true;
    return false;
}

double length(const IntervalSet& S) {
    Sum s;
    for (auto [l, r] : S) s.add(std::max(0.0, r - l));
    return s.value();
}

InequalityCheck change_of_variable_check(const SmoothMap1D& g, int k, double branch_left, double branch_right,
                                         const IntervalSet& A, const IntervalSet& B, double tol) {
    const double width = branch_right - branch_left;
    double inf_deriv = std::numeric_limits<double>::infinity();
    auto quad = [&](std::size_t N) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < N; ++i) {
            const double y = branch_left + width * (i + 0.5) / N;
            const double yr = g.domain().is_circle() ? g.domain().reduce(y) : y;
            if (!contains(A, yr)) continue;
            double img = 0.0;
            const double d = orbit_deriv(g, yr, k, &img);
            inf_deriv = std::min(inf_deriv, d);
            if (contains(B, img)) ++hits;
        }
        return width * static_cast<double>(hits) / N;
    };
    std::size_t N = 1024;
    double prev = quad(N), cur = prev, err = 0.0;
    while (true) {
        N *= 2;
        cur = quad(N);
        err = std::fabs(cur - prev);
        if (err < tol || N >= (std::size_t{1} << 22)) break;
        prev = cur;
    }
    InequalityCheck c;
    c.name = "change_of_variable";
    c.instance = "k=" + std::to_string(k);
    c.lhs = cur;
    c.rhs = std::isfinite(inf_deriv) ? length(B) / inf_deriv : std::numeric_limits<double>::infinity();
    c.margin = c.rhs - c.lhs;
    c.ci_low = std::max(0.0, cur - err);
    c.ci_high = cur + err;
    c.pass = c.margin >= -2.0 * err - 1e-15;
    return c;
}

std::pair<double, double> cylinder(const SmoothMap1D& g, const BranchPartition& J, double x, int k, double target_left,
                                   double target_right) {
    const bool circle = g.domain().is_circle();
    std::vector<double> orbit{g.domain().is_circle() ? g.domain().reduce(x) : x};
    for (int i = 0; i < k; ++i) orbit.push_back(g.eval(orbit.back()));
    double lo = target_left, hi = target_right;
    for (int i = k - 1; i >= 0; --i) {
        const int b = J.index_of(orbit[i]);
        if (b < 0) return {orbit[0], orbit[0]};
        const Branch& br = J.branches[b];
        if (circle) {
            const double y = orbit[i + 1];
            while (hi < y) lo += 1.0, hi += 1.0;
            while (lo > y) lo -= 1.0, hi -= 1.0;
        }
        const double rlo = std::min(br.left_value, br.right_value), rhi = std::max(br.left_value, br.right_value);
        const double u = std::max(lo, rlo), v = std::min(hi, rhi);
        if (!(u < v)) return {orbit[0], orbit[0]};
        auto inv = [&](double y) {
            if (y <= rlo) return br.sign > 0 ? br.a : br.b;
            if (y >= rhi) return br.sign > 0 ? br.b : br.a;
            double z = 0.0;
            if (!branch_inverse(g, J, b, y, 1e-16, z)) return y <= 0.5 * (rlo + rhi) ? (br.sign > 0 ? br.a : br.b)
                                                                                    : (br.sign > 0 ? br.b : br.a);
            return z;
        };
        const double p = inv(u), q = inv(v);
        lo = std::min(p, q);
        hi = std::max(p, q);
    }
    if (circle) {
        while (hi < orbit[0]) lo += 1.0, hi += 1.0;
        while (lo > orbit[0]) lo -= 1.0, hi -= 1.0;
    }
    return {lo, hi};
}

InequalityCheck GibbsReport::row() const {
    InequalityCheck c;
    c.name = "gibbs";
    c.instance = resolved ? "resolved" : "unresolved";
    c.lhs = leb_estimate;
    c.rhs = std::exp(log_rhs);
    c.margin = c.rhs - c.lhs;
    c.ci_low = ci_low;
    c.ci_high = ci_high;
    c.pass = pass;
    return c;
}

GibbsReport gibbs_check(const SmoothMap1D& g, double x, const GibbsInput& in) {
    GibbsReport rep;
    const BranchPartition J = monotone_branches(g);
    const int horizon = in.n > 0 ? in.n : (in.E.empty() ? 0 : in.E.back() + 1);
    std::vector<double> orbit{x};
    for (int i = 0; i < horizon; ++i) {
        rep.orbit_log_deriv += log_abs_slope(g, orbit.back());
        orbit.push_back(g.eval(orbit.back()));
    }
    rep.resolved = rep.orbit_log_deriv <= kResolvableLogDeriv;
    std::vector<int> jx(horizon, 0);
    std::vector<long long> qx(horizon, 0);
    for (int k : in.E) {
        rep.phi_E += log_abs_slope(g, orbit[k]);
        jx[k] = J.index_of(orbit[k]);
        qx[k] = qq_bin(g, in.q, in.a, orbit[k]);
    }
    rep.boundary_size = static_cast<int>(boundary_set(in.E).size());
    rep.log_rhs = rep.boundary_size * std::log(in.C / in.eps) - rep.phi_E + static_cast<double>(in.E.size()) / in.q;

    if (!rep.resolved) {
        rep.pass = true;
        return rep;
    }

    std::vector<char> inE(horizon, 0);
    for (int k : in.E) inE[k] = 1;
    // in_atom reads the starting point, the branch and bin tests read the orbit.
    auto member_at = [&](double y0) {
        double y = y0;
        for (int k = 0; k < horizon; ++k) {
            if (inE[k] && (J.index_of(y) != jx[k] || qq_bin(g, in.q, in.a, y) != qx[k])) return false;
            y = g.eval(y);
        }
        return !in.in_atom || in.in_atom(y0);
    };

    const double width = in.ambient_right - in.ambient_left;
    int windows = in.windows;
    if (windows <= 0) {
        // Below about horizon ulps the computed orbits of y and x no longer separate
        // the way the true ones do; 4096 keeps a margin over that.
        const double ulp = std::nextafter(std::fabs(x), 2.0) - std::fabs(x);
        const double floor_scale = std::max(4096.0 * (horizon + 1) * ulp, 0.25 * std::exp(-rep.phi_E));
        windows = 1 + std::max(0, static_cast<int>(std::ceil(std::log2(width / floor_scale))));
    }
    rep.windows = windows;
    const double z = normal_quantile(1.0 - (1.0 - in.confidence) / windows);
    for (int w = 0; w < windows; ++w) {
        double lo = in.ambient_left, hi = in.ambient_right;
        if (w > 0) {
            const double h = width * std::ldexp(1.0, -w);
            lo = std::max(lo, x - h);
            hi = std::min(hi, x + h);
        }
        std::mt19937_64 rng(splitmix(in.rng_seed ^ splitmix(static_cast<std::uint64_t>(w))));
        std::size_t hits = 0;
        for (std::size_t s = 0; s < in.samples; ++s)
            if (member_at(lo + (hi - lo) * unit(rng))) ++hits;
        rep.window_hits += hits;
        const auto [pl, ph] = wilson(hits, in.samples, z);
        rep.best_lower = std::max(rep.best_lower, (hi - lo) * pl);
        if (w == 0) {
            rep.hits = hits;
            rep.leb_estimate = (hi - lo) * static_cast<double>(hits) / std::max<std::size_t>(1, in.samples);
            rep.ci_low = (hi - lo) * pl;
            rep.ci_high = (hi - lo) * ph;
        }
    }
    rep.pass = !(rep.best_lower > 0.0 && std::log(rep.best_lower) > rep.log_rhs);

    // Atoms V of B^{k} ∨ J^{k} on the gaps [b_j, a_{j+1}) of E, B a grid of cells of size in [ε/27, ε/14].
    const long long nb = static_cast<long long>(std::ceil(14.0 / in.eps));
    int prev_end = 0;
    for (auto [a0, b0] : components(in.E)) {
        const int k = a0 - prev_end;
        if (k >= 1) {
            const double target = orbit[a0];
            const double cell = std::floor(target * nb);
            const auto [vl, vr] = cylinder(g, J, orbit[prev_end], k, cell / nb, (cell + 1) / nb);
            if (vr > vl) {
                ++rep.v_atoms;
                double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
                Sum dsum;
                const int pts = 65;
                for (int i = 0; i < pts; ++i) {
                    const double y = vl + (vr - vl) * (i + 0.5) / pts;
                    const double d = orbit_deriv(g, g.domain().is_circle() ? g.domain().reduce(y) : y, k, nullptr);
                    dmin = std::min(dmin, d);
                    dmax = std::max(dmax, d);
                    dsum.add(d);
                }
                if (dmax <= 2.25 * dmin) ++rep.v_distortion_ok;
                if (dsum.value() / pts * (vr - vl) >= in.eps / 27.0) ++rep.v_size_ok;
            }
        }
        prev_end = b0;
    }
    return rep;
}

GibbsClosedForm gibbs_closed_form_linear(const SmoothMap1D& g, double x, int n, int q, double eps, double C) {
    if (!g.constant_slope) throw Error(ErrorCode::ConfigError, "entropy", "closed-form Gibbs check needs a constant-slope map");
    const BranchPartition J = monotone_branches(g);
    GibbsClosedForm out;
    const auto [lo, hi] = cylinder(g, J, x, n, 0.0, 1.0);
    out.lhs = hi - lo;
    const double phi = n * std::log(*g.constant_slope);
    out.closed_form = std::exp(-phi);
    IntSet E(n);
    for (int i = 0; i < n; ++i) E[i] = i;
    const int bsz = static_cast<int>(boundary_set(E).size());
    out.rhs = std::exp(bsz * std::log(C / eps) - phi + static_cast<double>(n) / q);
    out.exact = std::fabs(out.lhs - out.closed_form) <= 1e-6 * out.closed_form;
    out.pass = out.lhs <= out.rhs;
    return out;
}

std::function<bool(double)> surrogate_atom_predicate(const SmoothMap1D& g, const IntSet& E, int n, int M, int m,
                                                     double beta, double b, int p, double c_expansion) {
    return [&g, E, n, M, m, beta, b, p, c_expansion](double y) {
        const OrbitRecord orb = eval_orbit(g, y, n);
        if (!(orb.chain_log_deriv[n] >= n * p * b)) return false;
        const TimeSet Ey = surrogate_times_from_log_derivs(orb.log_derivs, n, c_expansion);
        if (!(Ey.density(n) > beta)) return false;
        return trim(Ey.elems, n, M, m) == E;
    };
}

// ---------------------------------------------------------------------------
// Entropy formula

FormulaVerdict entropy_formula_residual(const SmoothMap1D& g, const EmpiricalMeasure& mu, const std::vector<int>& q_list,
                                        const std::vector<int>& m_list, const FormulaOptions& opts) {
    if (mu.atoms.size() < opts.min_atoms)
        throw Error(ErrorCode::InsufficientAtoms, "entropy",
                    "the measure has " + std::to_string(mu.atoms.size()) + " atoms, at least " +
                        std::to_string(opts.min_atoms) + " are needed");
    if (q_list.empty() || m_list.empty()) throw Error(ErrorCode::ConfigError, "entropy", "q and m lists must be nonempty");
    FormulaVerdict v;
    v.p = opts.p;
    v.tolerance = opts.tolerance;
    std::vector<double> points;
    points.reserve(mu.atoms.size());
    for (const auto& at : mu.atoms) points.push_back(at.point);
    double best = -std::numeric_limits<double>::infinity();
    for (int q : q_list) {
        EntropyRate rate;
        rate.q = q;
        rate.a = choose_offset(g, q, points, splitmix(opts.rng_seed) ^ static_cast<std::uint64_t>(q));
        const PqLabeler lab(g, q, rate.a);
        const auto reps = itinerary_entropies(mu, g, std::cref(lab), m_list, opts.jobs);
        rate.m = m_list;
        for (const auto& r : reps) rate.H.push_back(r.H_value);
        rate.slope = entropy_slope(rate.m, rate.H);
        best = std::max(best, rate.slope);
        v.rates.push_back(std::move(rate));
    }
    v.h_est = best / opts.p;
    v.integral = log_derivative_integrals(mu, g).integral / opts.p;
    v.residual = v.h_est - v.integral;
    v.exponent_positive = v.integral > 0.0;
    v.ac_consistent = std::fabs(v.residual) <= opts.tolerance && v.exponent_positive;
    return v;
}

void write_entropy_csv(std::ostream& os, const FormulaVerdict& v) {
    CsvWriter w(os, {"quantity", "q", "a", "m", "value"});
    for (const auto& r : v.rates) {
        for (std::size_t i = 0; i < r.m.size(); ++i)
            w.write("H", std::to_string(r.q), fmt_double(r.a), std::to_string(r.m[i]), fmt_double(r.H[i]));
        w.write("slope", std::to_string(r.q), fmt_double(r.a), "", fmt_double(r.slope));
    }
    w.write("p", "", "", "", std::to_string(v.p));
    w.write("h_est", "", "", "", fmt_double(v.h_est));
    w.write("integral", "", "", "", fmt_double(v.integral));
    w.write("residual", "", "", "", fmt_double(v.residual));
    w.write("tolerance", "", "", "", fmt_double(v.tolerance));
}

}  // namespace acip
