#include "acip/times.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "acip/csv.hpp"

namespace acip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool has(const IntSet& S, int t) { return std::binary_search(S.begin(), S.end(), t); }

// Prefix sums S_j = sum_{i<j} log_derivs[i], j in [0, len].
std::vector<double> prefix(const std::vector<double>& log_derivs, std::size_t len) {
    std::vector<double> S(len + 1, 0.0);
    for (std::size_t i = 0; i < len; ++i) S[i + 1] = S[i] + log_derivs[i];
    return S;
}

}  // namespace

bool TimeSet::contains(int t) const { return has(elems, t); }

double TimeSet::density(int n) const { return acip::density(elems, n); }

double density(const IntSet& S, int n) {
    if (n <= 0) return 0.0;
    auto end = std::lower_bound(S.begin(), S.end(), n);
    auto begin = std::lower_bound(S.begin(), S.end(), 0);
    return static_cast<double>(end - begin) / n;
}

std::vector<std::pair<int, int>> components(const IntSet& S) {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < S.size();) {
        std::size_t j = i;
        while (j + 1 < S.size() && S[j + 1] == S[j] + 1) ++j;
        out.emplace_back(S[i], S[j] + 1);
        i = j + 1;
    }
    return out;
}

IntSet clip(const IntSet& E, int n, int M) {
    // Pairs with gap <= M chain through consecutive elements, so consecutive
    // pairs generate the same union.
    IntSet out;
    for (std::size_t i = 0; i + 1 < E.size() && E[i + 1] < n; ++i) {
        if (E[i + 1] - E[i] > M) continue;
        for (int t = std::max(E[i], out.empty() ? E[i] : out.back() + 1); t < E[i + 1]; ++t) out.push_back(t);
    }
    return out;
}

IntSet trim(const IntSet& E, int n, int M, int m) {
    IntSet out;
    for (auto [k, l] : components(clip(E, n, M))) {
        for (int L = m - 1; L <= M + m - 2 && L <= l - k; ++L) {
            if (!has(E, l - L)) continue;
            for (int t = k; t < l - L; ++t) out.push_back(t);
            break;
        }
    }
    return out;
}

IntSet boundary_set(const IntSet& S) {
    IntSet out;
    for (auto [a, b] : components(S)) {
        out.push_back(a);
        out.push_back(b);
    }
    return out;
}

TimeSetDerived derive(const TimeSet& E, int M, int m) {
    TimeSetDerived d;
    d.base = E;
    d.M = M;
    d.m = m;
    d.clipped = clip(E.elems, E.horizon, M);
    d.trimmed = trim(E.elems, E.horizon, M, m);
    d.boundary = boundary_set(d.trimmed);
    d.density = density(d.trimmed, E.horizon);
    return d;
}

EnmReport verify_enm(const IntSet& E, int n, int M, int Mprime, int m) {
    EnmReport r;
    IntSet small = trim(E, n, M, m), large = trim(E, n, Mprime, m);
    IntSet ds = boundary_set(small), dl = boundary_set(large);
    r.boundary_in_base = std::includes(E.begin(), E.end(), ds.begin(), ds.end());
    r.margin_iii = (n + M) - M * static_cast<double>(ds.size()) / 2.0;
    IntSet diff;
    std::set_difference(large.begin(), large.end(), small.begin(), small.end(), std::back_inserter(diff));
    r.margin_iv = static_cast<double>(diff.size()) -
                  M * (static_cast<double>(ds.size()) - static_cast<double>(dl.size())) / 2.0;
    r.monotone_in_M = std::includes(large.begin(), large.end(), small.begin(), small.end());
    return r;
}

TimeSet surrogate_times_from_log_derivs(const std::vector<double>& log_derivs, int n_max, double c_expansion) {
    TimeSet E;
    E.horizon = n_max;
    const std::size_t len = std::min<std::size_t>(log_derivs.size(), static_cast<std::size_t>(std::max(n_max, 0)));
    const std::vector<double> S = prefix(log_derivs, len);
    const double lc = std::log(c_expansion);
    // l is a time iff T_l >= max_{k<l} T_k with T_j = S_j - j log c.
    double best = S[0];
    for (std::size_t l = 1; l <= len; ++l) {
        double T = S[l] - static_cast<double>(l) * lc;
        if (T >= best) E.elems.push_back(static_cast<int>(l));
        best = std::max(best, T);
    }
    if (!E.elems.empty() && E.elems.front() == 1) E.elems.insert(E.elems.begin(), 0);
    return E;
}

TimeSet hyperbolic_surrogate_times(const SmoothMap1D& g, double x, int n_max, double c_expansion) {
    return surrogate_times_from_log_derivs(eval_orbit(g, x, n_max).log_derivs, n_max, c_expansion);
}

HyperbolicReport::HyperbolicReport() : worst_i(kInf), worst_ii(kInf), worst_iii(kInf) {}

HyperbolicReport verify_hyperbolic(const std::vector<double>& log_derivs, const IntSet& E, int n, int M, int m,
                                   double log_sup_gprime, double tol) {
    HyperbolicReport r;
    const double l10 = std::log(10.0);
    const std::vector<double> S = prefix(log_derivs, log_derivs.size());
    const int top = static_cast<int>(log_derivs.size());
    auto T = [&](int j) { return S[j] - j * l10; };
    auto slack = [&](int span) { return tol * std::max(1, span); };

    // i) for l in E and k < l: T_l - T_k >= 0.
    {
        double run_max = -kInf;
        int j = 0;
        for (int l : E) {
            if (l > top) break;
            for (; j < l; ++j) run_max = std::max(run_max, T(j));
            if (l == 0) continue;
            r.checked_i += l;
            double margin = T(l) - run_max;
            r.worst_i = std::min(r.worst_i, margin);
            if (!(margin >= -slack(l))) ++r.violations_i;
        }
    }
    IntSet trimmed = trim(E, n, M, m);
    for (auto [a, b] : components(trimmed)) {
        if (b > top) break;
        // ii) each component [a, b) expands by 10 per step.
        ++r.checked_ii;
        double m2 = T(b) - T(a);
        r.worst_ii = std::min(r.worst_ii, m2);
        if (!(m2 >= -slack(b - a))) ++r.violations_ii;
        // iii) every [k, l) inside the component loses at most M log||g'||.
        double run_max = -kInf;
        for (int l = a + 1; l <= b; ++l) {
            run_max = std::max(run_max, T(l - 1));
            r.checked_iii += l - a;
            double m3 = T(l) - run_max + M * log_sup_gprime;
            r.worst_iii = std::min(r.worst_iii, m3);
            if (!(m3 >= -slack(l - a))) ++r.violations_iii;
        }
    }
    return r;
}

HyperbolicReport verify_hyperbolic(const SmoothMap1D& g, double x, const IntSet& E, int n, int M, int m,
                                   double log_sup_gprime, double tol) {
    int len = std::max(n, E.empty() ? 0 : E.back());
    return verify_hyperbolic(eval_orbit(g, x, len).log_derivs, E, n, M, m, log_sup_gprime, tol);
}

void write_times_csv(std::ostream& os, const std::vector<std::pair<double, TimeSet>>& rows) {
    CsvWriter w(os, {"x", "times"});
    for (const auto& [x, E] : rows) {
        std::ostringstream ts;
        for (std::size_t i = 0; i < E.elems.size(); ++i) ts << (i ? " " : "") << E.elems[i];
        w.write(x, ts.str());
    }
}

void write_density_csv(std::ostream& os, const std::vector<std::pair<int, double>>& rows) {
    CsvWriter w(os, {"n", "d_n"});
    for (const auto& [n, d] : rows) w.write(n, d);
}

}  // namespace acip
