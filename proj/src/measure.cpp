#include "acip/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

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

// Neumaier compensated sum; masses of 10^7 equal atoms must add to 1 within 1e-12.

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }


}  // namespace

const char* detector_name(Detector d) {
    switch (d) {
        case Detector::Tree: return "tree";
        case Detector::Surrogate: return "surrogate";
        case Detector::Both: return "both";
    }
    return "?";
}

Detector parse_detector(const std::string& s) {
    if (s == "tree") return Detector::Tree;
    if (s == "surrogate") return Detector::Surrogate;
    if (s == "both") return Detector::Both;
    throw Error(ErrorCode::ConfigError, "measure", "unknown detector '" + s + "'");
}

OrbitRecord noisy_orbit(const SmoothMap1D& g, double x, int n, double noise, std::uint64_t stream_seed) {
    std::mt19937_64 rng(stream_seed);
    OrbitRecord o;
    o.start = x;
    o.points.resize(n + 1);
    o.log_derivs.resize(n);
    o.chain_log_deriv.resize(n + 1);
    o.points[0] = x;
    const Domain& dom = g.domain();
    for (int k = 0; k < n; ++k) {
        o.log_derivs[k] = log_abs_deriv(g, o.points[k]);
        o.chain_log_deriv[k + 1] = o.chain_log_deriv[k] + o.log_derivs[k];
        double y = g.eval(o.points[k]);
        if (noise > 0) y += noise * (2.0 * unit(rng) - 1.0);
        o.points[k + 1] = dom.is_circle() ? dom.reduce(y) : std::clamp(y, 0.0, 1.0);
    }
    return o;
}

SamplePool build_pool(const SmoothMap1D& g, double sigma_left, double sigma_right, const PoolOptions& opts) {
    SamplePool pool;
    pool.n_max = opts.n_max;
    pool.provenance = {g.name(), opts.p, opts.eps, sigma_left, sigma_right, opts.detector, opts.rng_seed, opts.noise};
    pool.seeds.resize(opts.seeds);
    const bool want_tree = opts.detector != Detector::Surrogate;
    if (want_tree && !(opts.eps > 0))
        throw Error(ErrorCode::ConfigError, "measure", "tree detector needs a positive eps");
    const Reparametrization sigma = Reparametrization::affine(sigma_left, sigma_right, g.domain());
    parallel_for(pool.seeds.size(), opts.jobs, [&](std::size_t i) {
        std::mt19937_64 rng(splitmix(opts.rng_seed ^ splitmix(i)));
        PoolSeed& s = pool.seeds[i];
        s.x = g.domain().reduce(sigma_left + (sigma_right - sigma_left) * unit(rng));
        s.orbit = noisy_orbit(g, s.x, opts.n_max, opts.noise, rng());
        TimeSet surrogate = surrogate_times_from_log_derivs(s.orbit.log_derivs, opts.n_max, opts.c_expansion);
        if (!want_tree) {
            s.E = std::move(surrogate);
            return;
        }
        TreeOptions to = opts.tree;
        to.focus = s.x;
        to.jobs = 1;
        const int levels = opts.tree_levels > 0 ? opts.tree_levels : opts.n_max;
        ReparamTree tree = build_tree(sigma, g, opts.p, levels, opts.eps, to);
        TimeSet geo = geometric_times_tree(tree, g, s.x, levels);
        geo.horizon = opts.n_max;
        if (opts.detector == Detector::Tree) {
            s.E = std::move(geo);
            return;
        }
        long agree = 0;
        for (int t = 0; t <= levels; ++t) agree += geo.contains(t) == surrogate.contains(t);
        s.tree_agreement = static_cast<double>(agree) / (levels + 1);
        s.E = std::move(surrogate);
    });
    return pool;
}

Selection select_An(const SamplePool& pool, int n, double beta, double b, int p) {
    if (n > pool.n_max) throw Error(ErrorCode::ConfigError, "measure", "n exceeds the pool horizon");
    Selection sel;
    for (const auto& s : pool.seeds) {
        if (!(s.E.density(n) > beta)) continue;
        if (!(s.orbit.chain_log_deriv[n] >= n * p * b)) continue;
        sel.seeds.push_back(&s);
    }
    sel.fraction = pool.seeds.empty() ? 0.0 : static_cast<double>(sel.seeds.size()) / pool.seeds.size();
    const double leb = sel.fraction * std::fabs(pool.provenance.sigma_right - pool.provenance.sigma_left);
    sel.leb_rule_holds = leb >= 1.0 / (static_cast<double>(n) * n);
    if (sel.seeds.empty()) {
        throw Error(ErrorCode::EmptySelection, "measure",
                    "no seed has d_n(E) > " + fmt_double(beta) + " and |(g^n)'| >= e^{n p b} with b = " +
                        fmt_double(b) + "; lower delta or beta, or raise p");
    }
    return sel;
}

double EmpiricalMeasure::total_mass() const {
    Sum s;
    for (const auto& a : atoms) s.add(a.weight);
    return s.value();
}

EmpiricalMeasure empirical_measure(const Selection& sel, int n, int M, int m, Normalization norm, double beta_inf) {
    if (sel.seeds.empty()) throw Error(ErrorCode::EmptySelection, "measure", "empirical measure of an empty selection");
    EmpiricalMeasure mu;
    mu.n = n;
    mu.M = M;
    mu.m = m;
    mu.normalization = norm;
    mu.beta_inf = beta_inf;
    std::vector<IntSet> sets(sel.seeds.size());
    long total = 0;
    double dsum = 0.0;
    for (std::size_t i = 0; i < sel.seeds.size(); ++i) {
        sets[i] = trim(sel.seeds[i]->E.elems, n, M, m);
        total += static_cast<long>(sets[i].size());
        dsum += density(sets[i], n);
    }
    mu.beta_nMm = dsum / sel.seeds.size();
    if (norm == Normalization::Mu && total == 0)
        throw Error(ErrorCode::EmptySelection, "measure", "every trimmed time set is empty");
    const double w = norm == Normalization::Mu ? 1.0 / total : 1.0 / (n * beta_inf * sel.seeds.size());
    mu.atoms.reserve(total);
    for (std::size_t i = 0; i < sel.seeds.size(); ++i)
        for (int t : sets[i]) mu.atoms.push_back({sel.seeds[i]->orbit.points[t], w});
    return mu;
}

EmpiricalMeasure average_over_iterates(const EmpiricalMeasure& mu, const SmoothMap1D& f, int p) {
    EmpiricalMeasure out = mu;
    out.atoms.clear();
    out.atoms.reserve(mu.atoms.size() * p);
    for (const auto& a : mu.atoms) {
        double y = a.point;
        for (int k = 0; k < p; ++k) {
            out.atoms.push_back({y, a.weight / p});
            y = f.eval(y);
        }
    }
    return out;
}

EmpiricalMeasure push_forward(const EmpiricalMeasure& mu, const SmoothMap1D& g) {
    EmpiricalMeasure out = mu;
    for (auto& a : out.atoms) a.point = g.eval(a.point);
    return out;
}

EmpiricalMeasure dirac(double point, std::size_t copies) {
    EmpiricalMeasure mu;
    mu.atoms.assign(copies, Atom{point, 1.0 / copies});
    return mu;
}

double estimate_beta_inf(const std::vector<double>& betas, int window) {
    if (betas.empty()) return 1.0;
    const std::size_t w = std::min<std::size_t>(betas.size(), std::max(1, window));
    double s = 0.0;
    for (std::size_t i = betas.size() - w; i < betas.size(); ++i) s += betas[i];
    return s / w;
}

std::vector<Probe> probe_dictionary() {
    std::vector<Probe> out;
    const double tau = 2.0 * std::numbers::pi;
    for (int k = 1; k <= 5; ++k) {
        out.push_back([=](double x) { return std::cos(tau * k * x); });
        out.push_back([=](double x) { return std::sin(tau * k * x); });
    }
    for (int j = 0; j < 10; ++j) {
        const double c = (j + 0.5) / 10.0;
        out.push_back([=](double x) {
            double d = std::fabs(x - c);
            d = std::min(d, 1.0 - d);
            return std::exp(-d * d / (2.0 * 0.05 * 0.05));
        });
    }
    return out;
}

double invariance_defect(const EmpiricalMeasure& mu, const SmoothMap1D& g, const std::vector<Probe>& probes) {
    double worst = 0.0;
    std::vector<double> images(mu.atoms.size());
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) images[i] = g.eval(mu.atoms[i].point);
    for (const auto& psi : probes) {
        Sum d;
        for (std::size_t i = 0; i < mu.atoms.size(); ++i) d.add(mu.atoms[i].weight * (psi(images[i]) - psi(mu.atoms[i].point)));
        worst = std::max(worst, std::fabs(d.value()));
    }
    return worst;
}

double invariance_defect_bound(const Selection& sel, int n, int M, int m, Normalization norm, double beta_inf) {
    long bd = 0, total = 0;
    for (const auto* s : sel.seeds) {
        IntSet T = trim(s->E.elems, n, M, m);
        bd += static_cast<long>(boundary_set(T).size());
        total += static_cast<long>(T.size());
    }
    if (norm == Normalization::Mu) return total > 0 ? static_cast<double>(bd) / total : 0.0;
    return static_cast<double>(bd) / (n * beta_inf * sel.seeds.size());
}

DensityEstimate density_estimate(const EmpiricalMeasure& mu, int bins) {
    if (bins < 10) throw Error(ErrorCode::ConfigError, "measure", "density_estimate needs at least 10 bins");
    DensityEstimate est;
    est.bins = bins;
    std::vector<Sum> sums(bins);
    for (const auto& a : mu.atoms) {
        int k = static_cast<int>(std::floor(a.point * bins));
        sums[std::clamp(k, 0, bins - 1)].add(a.weight);
    }
    est.masses.resize(bins);
    Sum total;
    for (int k = 0; k < bins; ++k) {
        est.masses[k] = sums[k].value();
        total.add(sums[k].s);
        total.add(sums[k].c);
    }
    est.total = total.value();
    return est;
}

double compare_density(DensityEstimate& est, const std::function<double(double)>& reference) {
    const double w = 1.0 / est.bins;
    double l1 = 0.0;
    for (int k = 0; k < est.bins; ++k) {
        const double h = est.total > 0 ? est.masses[k] / (est.total * w) : 0.0;
        double s = 0.0;
        for (int j = 0; j < 100; ++j) s += std::fabs(h - reference((k + (j + 0.5) / 100.0) * w));
        l1 += s * w / 100.0;
    }
    est.l1_vs_reference = l1;
    est.singular_flag = l1 >= 1.0;
    return l1;
}

double arcsine_density(double x) { return 1.0 / (std::numbers::pi * std::sqrt(x * (1.0 - x))); }
double arcsine_cdf(double x) { return 2.0 / std::numbers::pi * std::asin(std::sqrt(std::clamp(x, 0.0, 1.0))); }
double uniform_density(double) { return 1.0; }

SupportGapReport support_gap_from_critical(const EmpiricalMeasure& mu, const SmoothMap1D& g,
                                           const std::vector<double>& critical_pts, int M, double log_sup_gprime) {
    SupportGapReport rep;
    for (const auto& a : mu.atoms) {
        for (double c : critical_pts) rep.gap = std::min(rep.gap, g.domain().distance(a.point, c));
        rep.min_log_deriv = std::min(rep.min_log_deriv, std::log(std::fabs(g.deriv1(a.point))));
    }
    rep.flagged = !critical_pts.empty() && rep.gap <= 0.0;
    rep.tpsHB_iii_ok = mu.atoms.empty() || rep.min_log_deriv >= -M * log_sup_gprime - 1e-12;
    return rep;
}

LogDerivIntegrals log_derivative_integrals(const EmpiricalMeasure& mu, const SmoothMap1D& g) {
    LogDerivIntegrals r;
    Sum integral, neg, abs, mass;
    for (const auto& a : mu.atoms) {
        const double l = std::log(std::fabs(g.deriv1(a.point)));
        integral.add(a.weight * l);
        neg.add(a.weight * std::max(0.0, -l));
        abs.add(a.weight * std::fabs(l));
        r.inf_log = std::min(r.inf_log, l);
        mass.add(a.weight);
    }
    if (mass.value() > 0) {
        r.integral = integral.value() / mass.value();
        r.integral_neg = neg.value() / mass.value();
        r.integral_abs = abs.value() / mass.value();
    }
    return r;
}

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu) {
    CsvWriter w(os, {"point", "weight"});
    for (const auto& a : mu.atoms) w.write(a.point, a.weight);
}

void write_binned_density_csv(std::ostream& os, const DensityEstimate& est,
                              const std::function<double(double)>* reference) {
    CsvWriter w(os, {"bin_left", "bin_right", "mass", "reference_mass"});
    const double width = 1.0 / est.bins;
    for (int k = 0; k < est.bins; ++k) {
        double ref = 0.0;
        if (reference) {
            for (int j = 0; j < 100; ++j) ref += (*reference)((k + (j + 0.5) / 100.0) * width);
            ref *= width / 100.0 * est.total;
        }
        w.write(k * width, (k + 1) * width, est.masses[k], ref);
    }
}

}  // namespace acip
