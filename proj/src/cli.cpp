#include "acip/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "acip/branch.hpp"
#include "acip/csv.hpp"
#include "acip/parallel.hpp"
#include "acip/sum.hpp"
#include "acip/reparam.hpp"
#include "acip/times.hpp"

namespace acip {

namespace {

std::string trim_ws(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void config_error(const std::string& where, const std::string& msg) {
    throw Error(ErrorCode::ConfigError, "cli", where + ": " + msg);
}

double parse_real(const std::string& v, const std::string& where) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        config_error(where, "expected a number, got '" + v + "'");
    }
    if (used != v.size()) config_error(where, "expected a number, got '" + v + "'");
    return x;
}

long long parse_integer(const std::string& v, const std::string& where) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        config_error(where, "expected an integer, got '" + v + "'");
    }
    if (used != v.size()) config_error(where, "expected an integer, got '" + v + "'");
    return x;
}

int parse_int(const std::string& v, const std::string& where) {
    const long long x = parse_integer(v, where);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        config_error(where, "integer out of range: " + v);
    return static_cast<int>(x);
}

// "1, 2, 5" or "1..8" or a mix of both.
std::vector<int> parse_int_list(const std::string& v, const std::string& where) {
    std::vector<int> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
        std::istringstream words(item);
        std::string w;
        while (words >> w) {
            const auto dots = w.find("..");
            if (dots == std::string::npos) {
                out.push_back(parse_int(w, where));
                continue;
            }
            const int lo = parse_int(w.substr(0, dots), where), hi = parse_int(w.substr(dots + 2), where);
            if (hi < lo) config_error(where, "empty range '" + w + "'");
            for (int k = lo; k <= hi; ++k) out.push_back(k);
        }
    }
    if (out.empty()) config_error(where, "empty list");
    return out;
}

Reference parse_reference(const std::string& v, const std::string& where) {
    if (v == "auto") return Reference::Auto;
    if (v == "uniform") return Reference::Uniform;
    if (v == "arcsine") return Reference::Arcsine;
    if (v == "none") return Reference::None;
    config_error(where, "reference must be auto, uniform, arcsine or none");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto real = [](double ExperimentConfig::*field) {
            return Setter([field](ExperimentConfig& c, const std::string& v, const std::string& w) {
                c.*field = parse_real(v, w);
            });
        };
        auto integer = [](int ExperimentConfig::*field) {
            return Setter([field](ExperimentConfig& c, const std::string& v, const std::string& w) {
                c.*field = parse_int(v, w);
            });
        };
        auto count = [](std::size_t ExperimentConfig::*field) {
            return Setter([field](ExperimentConfig& c, const std::string& v, const std::string& w) {
                const long long x = parse_integer(v, w);
                if (x < 0) config_error(w, "expected a nonnegative integer");
                c.*field = static_cast<std::size_t>(x);
            });
        };
        auto list = [](std::vector<int> ExperimentConfig::*field) {
            return Setter([field](ExperimentConfig& c, const std::string& v, const std::string& w) {
                c.*field = parse_int_list(v, w);
            });
        };
        t["map.family"] = [](ExperimentConfig& c, const std::string& v, const std::string&) { c.family = v; };
        t["map.expression"] = [](ExperimentConfig& c, const std::string& v, const std::string&) {
            c.expression = v;
        };
        t["map.r"] = [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.r = parse_real(v, w); };
        t["map.domain"] = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
            if (v == "interval")
                c.domain = Domain{DomainKind::UnitInterval};
            else if (v == "circle")
                c.domain = Domain{DomainKind::Circle};
            else
                config_error(w, "domain must be interval or circle");
        };

        t["run.p"] = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
            if (v == "auto")
                c.p.reset();
            else
                c.p = parse_int(v, w);
        };
        t["run.B_r"] = real(&ExperimentConfig::B_r);
        t["run.delta"] = real(&ExperimentConfig::delta);
        t["run.beta"] = real(&ExperimentConfig::beta);
        t["run.seeds"] = integer(&ExperimentConfig::seeds);
        t["run.rng_seed"] = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
            const long long x = parse_integer(v, w);
            if (x < 0) config_error(w, "rng_seed must be nonnegative");
            c.rng_seed = static_cast<std::uint64_t>(x);
        };
        t["run.detector"] = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
            try {
                c.detector = parse_detector(v);
            } catch (const std::exception&) {
                config_error(w, "detector must be tree, surrogate or both");
            }
        };
        t["run.output_dir"] = [](ExperimentConfig& c, const std::string& v, const std::string&) {
            c.output_dir = v;
        };
        t["run.sigma_left"] = real(&ExperimentConfig::sigma_left);
        t["run.sigma_width"] = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
            if (v == "eps")
                c.sigma_width.reset();
            else
                c.sigma_width = parse_real(v, w);
        };
        t["run.c_expansion"] = real(&ExperimentConfig::c_expansion);
        t["run.jobs"] = integer(&ExperimentConfig::jobs);

        t["times.n"] = list(&ExperimentConfig::n_list);
        t["times.M"] = list(&ExperimentConfig::M_list);
        t["times.m"] = list(&ExperimentConfig::m_list);
        t["times.rows"] = integer(&ExperimentConfig::times_rows);

        t["measure.bins"] = integer(&ExperimentConfig::bins);
        t["measure.reference"] = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
            c.reference = parse_reference(v, w);
        };

        t["entropy.q"] = list(&ExperimentConfig::q_list);
        t["entropy.m"] = list(&ExperimentConfig::entropy_m);
        t["entropy.tolerance"] = real(&ExperimentConfig::tolerance);
        t["entropy.min_atoms"] = count(&ExperimentConfig::min_atoms);

        t["tree.levels"] = integer(&ExperimentConfig::tree_levels);
        t["tree.C_r"] = real(&ExperimentConfig::tree_C_r);
        t["tree.budget"] = count(&ExperimentConfig::tree_budget);
        t["tree.witnesses"] = integer(&ExperimentConfig::tree_witnesses);

        t["gibbs.instances"] = integer(&ExperimentConfig::gibbs_instances);
        t["gibbs.n"] = integer(&ExperimentConfig::gibbs_n);
        t["gibbs.samples"] = count(&ExperimentConfig::gibbs_samples);
        t["gibbs.C"] = real(&ExperimentConfig::gibbs_C);
        t["gibbs.confidence"] = real(&ExperimentConfig::gibbs_confidence);

        t["basin.seeds"] = integer(&ExperimentConfig::basin_seeds);
        t["basin.n"] = integer(&ExperimentConfig::basin_n);
        t["basin.tolerance"] = real(&ExperimentConfig::basin_tolerance);

        t["bound.C_r"] = real(&ExperimentConfig::bound_C_r);
        return t;
    }();
    return table;
}

void write_file(const std::filesystem::path& path, const std::string& text, PipelineResult& res) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::ConfigError, "cli", "cannot write " + path.string());
    os << text;
    res.files.push_back(path.filename().string());
}

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

InequalityCheck count_row(const std::string& name, const std::string& instance, double failures, double margin) {
    InequalityCheck c;
    c.name = name;
    c.instance = instance;
    c.lhs = failures;
    c.rhs = 0.0;
    c.margin = margin;
    c.ci_low = c.ci_high = failures;
    c.pass = failures == 0.0;
    return c;
}

// Splits one CSV line; the artifacts never quote fields, so ids use ';' inside.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

int ExperimentConfig::resolved_r_default() const { return family == "logistic" || family == "cubic" ? 3 : 2; }

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
    ExperimentConfig cfg;
    std::string line, section = "run";
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno);
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim_ws(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') config_error(where, "unterminated section header");
            section = trim_ws(line.substr(1, line.size() - 2));
            static const char* known[] = {"map", "run", "times", "measure", "entropy", "tree", "gibbs", "basin", "bound"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                config_error(where, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) config_error(where, "expected 'key = value'");
        const std::string key = trim_ws(line.substr(0, eq)), value = trim_ws(line.substr(eq + 1));
        if (key.empty()) config_error(where, "missing key");
        if (value.empty()) config_error(where, "missing value for '" + key + "'");
        const auto& table = setters();
        const auto it = table.find(section + "." + key);
        if (it != table.end()) {
            it->second(cfg, value, where);
        } else if (section == "map") {
            cfg.params[key] = parse_real(value, where);
        } else {
            config_error(where, "unknown key '" + key + "' in [" + section + "]");
        }
    }
    try {
        validate_config(cfg);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, "cli", source + ": " + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cli", "cannot open config " + path);
    return parse_config(in, path);
}

void validate_config(const ExperimentConfig& c) {
    auto need = [](bool ok, const std::string& msg) {
        if (!ok) throw Error(ErrorCode::ConfigError, "cli", msg);
    };
    need(c.resolved_r() > 1.0, "r must exceed 1");
    need(c.delta > 0.0, "delta must be positive");
    need(c.beta >= 0.0 && c.beta < 1.0, "beta must lie in [0, 1)");
    need(!c.p || *c.p >= 1, "p must be a positive integer or auto");
    need(c.B_r > 0.0, "B_r must be positive");
    need(c.seeds > 0, "seeds must be positive");
    need(c.jobs >= 1, "jobs must be at least 1");
    need(!c.n_list.empty() && !c.M_list.empty() && !c.m_list.empty(), "n, M and m lists must be nonempty");
    need(!c.q_list.empty() && !c.entropy_m.empty(), "entropy q and m lists must be nonempty");
    for (int v : c.n_list) need(v >= 1, "n values must be positive");
    for (int v : c.M_list) need(v >= 1, "M values must be positive");
    for (int v : c.m_list) need(v >= 1, "m values must be positive");
    for (int v : c.q_list) need(v >= 1, "q values must be positive");
    for (int v : c.entropy_m) need(v >= 1, "entropy m values must be positive");
    need(c.bins >= 10, "bins must be at least 10");
    need(c.tolerance > 0.0, "tolerance must be positive");
    need(!c.sigma_width || *c.sigma_width > 0.0, "sigma_width must be positive");
    need(c.c_expansion > 1.0, "c_expansion must exceed 1");
    need(c.tree_levels >= 1 && c.tree_witnesses >= 0, "tree levels must be positive");
    need(c.gibbs_instances >= 0 && c.gibbs_n >= 1, "gibbs n must be positive");
    need(c.gibbs_confidence > 0.0 && c.gibbs_confidence < 1.0, "gibbs confidence must lie in (0, 1)");
    need(c.basin_seeds >= 0 && c.basin_n >= 1 && c.basin_tolerance > 0.0, "basin settings must be positive");
    need(c.bound_C_r > 0.0, "bound C_r must be positive");
    if (c.family == "expression") need(!c.expression.empty(), "expression family needs map.expression");
}

SmoothMap1D make_map(const ExperimentConfig& cfg) {
    try {
        return presets::by_name(cfg.family, cfg.params, cfg.resolved_r(), cfg.expression, cfg.domain);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ConfigError, "cli", std::string("map: ") + e.what());
    }
}

int auto_power(double delta, double B_r, double log_sup_fprime) {
    const double p = std::ceil(4.0 / delta * std::log(2.0 * B_r * log_sup_fprime / delta));
    if (!std::isfinite(p) || p < 1.0) return 1;
    if (p > 1e6) throw Error(ErrorCode::ConfigError, "cli", "auto p exceeds 1e6; set p explicitly");
    return static_cast<int>(p);
}

BoundVariant parse_bound_variant(const std::string& s) {
    if (s == "finite") return BoundVariant::Finite;
    if (s == "smooth") return BoundVariant::Smooth;
    if (s == "analytic") return BoundVariant::Analytic;
    throw Error(ErrorCode::ConfigError, "cli", "bound variant must be finite, smooth or analytic");
}

BoundValue bound_calculator(const BoundInput& in, BoundVariant variant) {
    if (!(in.log_sup_fprime > 0 && in.log_fprime_r_minus_1 > 0 && in.delta > 0 && in.C_r > 0))
        throw Error(ErrorCode::ConfigError, "cli", "bound inputs must all be positive");
    BoundValue v;
    switch (variant) {
        case BoundVariant::Finite:
            v.log_value = in.C_r * in.log_fprime_r_minus_1 / in.delta * std::log(in.log_sup_fprime / in.delta);
            break;
        case BoundVariant::Smooth:
            v.log_value = in.C_r / (in.delta * in.delta * in.delta) * in.log_fprime_r_minus_1;
            break;
        case BoundVariant::Analytic:
            v.log_value = std::log(in.C_r) / std::pow(in.delta, 4);
            break;
    }
    v.value = std::exp(v.log_value);
    return v;
}

BasinProbeReport basin_probe(const SmoothMap1D& f, const EmpiricalMeasure& mu, const BasinProbeOptions& opts) {
    const auto probes = probe_dictionary();
    const double mass = mu.total_mass();
    std::vector<double> target(probes.size(), 0.0);
    for (std::size_t k = 0; k < probes.size(); ++k) {
        Sum s;
        for (const auto& a : mu.atoms) s.add(a.weight * probes[k](a.point));
        target[k] = s.value() / mass;
    }
    BasinProbeReport rep;
    rep.seeds = opts.seeds;
    rep.chi.assign(opts.seeds, 0.0);
    rep.distance.assign(opts.seeds, std::numeric_limits<double>::infinity());
    parallel_for(static_cast<std::size_t>(opts.seeds), opts.jobs, [&](std::size_t i) {
        std::mt19937_64 rng(mix(opts.rng_seed ^ mix(i)));
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        double x = f.domain().reduce(opts.sigma_left + (opts.sigma_right - opts.sigma_left) * u);
        std::vector<Sum> acc(probes.size());
        Sum chi;
        for (int t = 0; t < opts.n; ++t) {
            for (std::size_t k = 0; k < probes.size(); ++k) acc[k].add(probes[k](x));
            chi.add(log_abs_deriv(f, x));
            double y = f.eval(x) + opts.noise * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
            x = f.domain().is_circle() ? f.domain().reduce(y) : std::clamp(y, 0.0, 1.0);
        }
        rep.chi[i] = chi.value() / opts.n;
        double d = 0.0;
        for (std::size_t k = 0; k < probes.size(); ++k) d = std::max(d, std::fabs(acc[k].value() / opts.n - target[k]));
        rep.distance[i] = d;
    });
    for (int i = 0; i < opts.seeds; ++i) {
        if (!(rep.chi[i] > opts.chi_threshold)) continue;
        ++rep.eligible;
        rep.within += rep.distance[i] <= opts.tolerance;
    }
    rep.fraction = rep.eligible ? static_cast<double>(rep.within) / rep.eligible : 0.0;
    return rep;
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Norms: return "norms";
        case Stage::Branches: return "branches";
        case Stage::Tree: return "tree";
        case Stage::Times: return "times";
        case Stage::Measure: return "measure";
        case Stage::Entropy: return "entropy";
        case Stage::Pipeline: return "pipeline";
    }
    return "?";
}

void apply_overrides(ExperimentConfig& cfg, const RunOverrides& o) {
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.rng_seed) cfg.rng_seed = *o.rng_seed;
    if (o.output_dir) cfg.output_dir = *o.output_dir;
    validate_config(cfg);
}

std::vector<InequalityCheck> run_inequality_suites(std::uint64_t rng_seed, int jobs) {
    std::vector<InequalityCheck> rows;
    auto add = [&](const SuiteSummary& s) {
        rows.push_back(count_row(s.name, "instances=" + std::to_string(s.instances),
                                 static_cast<double>(s.violations), s.worst_margin));
    };
    add(misiurewicz_exhaustive_suite(jobs));
    add(misiurewicz_random_suite(1000, mix(rng_seed ^ 1), 12, jobs));
    add(sete_random_suite(1000, mix(rng_seed ^ 2), jobs));
    return rows;
}

std::string decide_verdict(const std::string& checks_csv, const std::string& entropy_csv) {
    std::istringstream cs(checks_csv);
    std::string line;
    std::getline(cs, line);
    const auto header = split_csv(line);
    const auto pass_col = std::find(header.begin(), header.end(), "pass") - header.begin();
    if (static_cast<std::size_t>(pass_col) >= header.size())
        throw Error(ErrorCode::ConfigError, "cli", "checks.csv has no pass column");
    std::size_t rows = 0, failed = 0;
    std::vector<std::string> failed_names;
    while (std::getline(cs, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw Error(ErrorCode::ConfigError, "cli", "checks.csv row has " + std::to_string(cells.size()) +
                                                           " fields, expected " + std::to_string(header.size()));
        ++rows;
        if (static_cast<std::size_t>(pass_col) < cells.size() && cells[pass_col] == "1") continue;
        ++failed;
        if (failed_names.size() < 5) failed_names.push_back(cells[0]);
    }

    std::istringstream es(entropy_csv);
    std::getline(es, line);
    std::map<std::string, double> scalars;
    while (std::getline(es, line)) {
        const auto cells = split_csv(line);
        if (cells.size() == 5 && cells[1].empty() && cells[3].empty()) scalars[cells[0]] = std::stod(cells[4]);
    }
    for (const char* k : {"residual", "tolerance", "integral", "h_est"})
        if (!scalars.count(k)) throw Error(ErrorCode::ConfigError, "cli", std::string("entropy.csv lacks ") + k);

    const double residual = scalars["residual"], tolerance = scalars["tolerance"], integral = scalars["integral"];
    const bool formula_ok = std::fabs(residual) <= tolerance && integral > 0.0;
    std::ostringstream out;
    out << (failed ? "inconclusive" : formula_ok ? "AC-consistent" : "not-AC") << '\n';
    out << "h_est=" << fmt_double(scalars["h_est"]) << '\n';
    out << "integral=" << fmt_double(integral) << '\n';
    out << "residual=" << fmt_double(residual) << '\n';
    out << "tolerance=" << fmt_double(tolerance) << '\n';
    out << "exponent_positive=" << (integral > 0.0 ? 1 : 0) << '\n';
    out << "checks=" << rows << '\n';
    out << "failed_checks=" << failed << '\n';
    for (const auto& n : failed_names) out << "failed=" << n << '\n';
    return out.str();
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::ConfigError:
        case ErrorCode::ExpressionError: return 2;
        case ErrorCode::EmptySelection: return 3;
        case ErrorCode::TreeBudgetExceeded: return 4;
        default: return 1;
    }
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, Stage last) {
    validate_config(cfg);
    PipelineResult res;
    const std::filesystem::path dir(cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::ConfigError, "cli", "cannot create output directory " + dir.string());
    const auto at_least = [&](Stage s) { return static_cast<int>(last) >= static_cast<int>(s); };

    // Norms, p, b = R/r + δ.
    const SmoothMap1D f = make_map(cfg);
    const MapNorms norms = estimate_norms(f);
    const double log_sup = std::log(norms.sup_first());
    res.R_estimate = norms.R_estimate;
    res.p = cfg.p ? *cfg.p : auto_power(cfg.delta, cfg.B_r, log_sup);
    res.b = norms.R_estimate / f.r() + cfg.delta;
    const SmoothMap1D g = res.p == 1 ? f : power_map(f, res.p);
    res.eps = choose_epsilon(g).eps;
    const double sigma_left = cfg.sigma_left;
    const double sigma_right = cfg.sigma_left + (cfg.sigma_width ? *cfg.sigma_width : res.eps);
    {
        std::ostringstream os;
        CsvWriter w(os, {"quantity", "order", "lower", "upper"});
        for (const auto& e : norms.sup_abs_deriv) w.write("sup_abs_deriv", fmt_double(e.order), e.lower, e.upper);
        w.write("norm_r_minus_1", fmt_double(f.r() - 1.0), norms.f_prime_r_minus_1, norms.f_prime_r_minus_1_upper);
        w.write("R_estimate", "", norms.R_estimate, norms.R_estimate);
        w.write("p", "", static_cast<double>(res.p), static_cast<double>(res.p));
        w.write("b", "", res.b, res.b);
        w.write("eps", "", res.eps, res.eps);
        write_file(dir / "norms.csv", os.str(), res);
    }
    if (!at_least(Stage::Branches)) return res;

    // Branches of g and the slope-count bound.
    {
        const BranchPartition J = monotone_branches(g);
        std::ostringstream os;
        write_branches_csv(os, J);
        write_file(dir / "branches.csv", os.str(), res);
        for (double s : {0.5, 1.0, 2.0, 4.0}) {
            const auto sc = count_branches_with_min_slope(g, s);
            InequalityCheck c;
            c.name = "branch_count";
            c.instance = "s=" + fmt_double(s);
            c.lhs = sc.count;
            c.rhs = sc.bound;
            c.margin = sc.bound - sc.count;
            c.ci_low = c.ci_high = sc.count;
            c.pass = sc.within_bound;
            res.checks.push_back(c);
        }
    }
    if (!at_least(Stage::Tree)) return res;

    const Reparametrization sigma = Reparametrization::affine(sigma_left, sigma_right, g.domain());
    if (last == Stage::Tree || cfg.detector != Detector::Surrogate) {
        TreeOptions to;
        to.C_r = cfg.tree_C_r;
        to.budget = cfg.tree_budget;
        to.jobs = cfg.jobs;
        const ReparamTree tree = build_tree(sigma, g, res.p, cfg.tree_levels, res.eps, to);
        std::ostringstream os;
        write_tree_csv(os, tree);
        write_file(dir / "tree.csv", os.str(), res);
        std::vector<double> witnesses;
        std::mt19937_64 rng(mix(cfg.rng_seed ^ 0x7472656565ULL));
        for (int i = 0; i < cfg.tree_witnesses; ++i)
            witnesses.push_back(sigma.eval(-0.99 + 1.98 * (static_cast<double>(rng() >> 11) * 0x1.0p-53)));
        const TreeReport tr = verify_tree(tree, g, witnesses);
        for (int i = 1; i <= 6; ++i)
            res.checks.push_back(count_row("tree_item_" + std::to_string(i),
                                           "checked=" + std::to_string(tr.item[i].checked),
                                           static_cast<double>(tr.item[i].failed), tr.item[i].worst_margin));
        res.checks.push_back(count_row("tree_distortion", "checked=" + std::to_string(tr.distortion.checked),
                                       static_cast<double>(tr.distortion.failed), tr.distortion.worst_margin));
    }
    if (!at_least(Stage::Times)) return res;

    // Pool of seeds in σ_* with their times.
    const int n_max = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());
    PoolOptions po;
    po.seeds = cfg.seeds;
    po.n_max = n_max;
    po.rng_seed = cfg.rng_seed;
    po.detector = cfg.detector;
    po.c_expansion = cfg.c_expansion;
    po.jobs = cfg.jobs;
    po.eps = res.eps;
    po.p = res.p;
    po.tree.C_r = cfg.tree_C_r;
    po.tree.budget = cfg.tree_budget;
    const SamplePool pool = build_pool(g, sigma_left, sigma_right, po);
    {
        std::vector<std::pair<double, TimeSet>> rows;
        for (int i = 0; i < cfg.times_rows && i < static_cast<int>(pool.seeds.size()); ++i)
            rows.emplace_back(pool.seeds[i].x, pool.seeds[i].E);
        std::ostringstream os;
        write_times_csv(os, rows);
        write_file(dir / "times.csv", os.str(), res);

        std::vector<std::pair<int, double>> dn;
        for (int n = 1; n <= n_max; ++n) {
            Sum s;
            for (const auto& seed : pool.seeds) s.add(seed.E.density(n));
            dn.emplace_back(n, s.value() / pool.seeds.size());
        }
        std::ostringstream ds;
        write_density_csv(ds, dn);
        write_file(dir / "density.csv", ds.str(), res);
    }
    if (!at_least(Stage::Measure)) return res;

    // Selections A_n, β_{n,M,m}, the g-measure and its f-average.
    std::vector<int> ns = cfg.n_list, Ms = cfg.M_list;
    std::sort(ns.begin(), ns.end());
    std::sort(Ms.begin(), Ms.end());
    const int m0 = cfg.m_list.front();
    std::vector<double> betas;
    std::optional<Selection> final_sel;
    for (int n : ns) {
        Selection sel = select_An(pool, n, cfg.beta, res.b, res.p);
        for (int M : Ms) betas.push_back(empirical_measure(sel, n, M, m0, Normalization::Mu).beta_nMm);
        if (n == ns.back()) final_sel = std::move(sel);
    }
    res.selection_fraction = final_sel->fraction;
    const int n_fin = ns.back(), M_fin = Ms.back();
    const EmpiricalMeasure mu_g = empirical_measure(*final_sel, n_fin, M_fin, m0, Normalization::Mu);
    const EmpiricalMeasure nu = res.p == 1 ? mu_g : average_over_iterates(mu_g, f, res.p);
    res.g_atoms = mu_g.atoms.size();
    res.f_atoms = nu.atoms.size();
    res.lyapunov = log_derivative_integrals(nu, f).integral;
    {
        Reference ref = cfg.reference;
        if (ref == Reference::Auto) {
            const bool uniform = f.domain().is_circle() && f.constant_slope && *f.constant_slope > 1.0;
            const bool arcsine = cfg.family == "logistic" && f.params.count("a") && f.params.at("a") == 4.0;
            ref = uniform ? Reference::Uniform : arcsine ? Reference::Arcsine : Reference::None;
        }
        std::function<double(double)> ref_fn;
        if (ref == Reference::Uniform) ref_fn = uniform_density;
        if (ref == Reference::Arcsine) ref_fn = arcsine_density;
        DensityEstimate est = density_estimate(nu, cfg.bins);
        if (ref_fn) res.density_l1 = compare_density(est, ref_fn);
        std::ostringstream os;
        write_binned_density_csv(os, est, ref_fn ? &ref_fn : nullptr);
        write_file(dir / "measure.csv", os.str(), res);

        const double beta_inf = estimate_beta_inf(betas);
        InequalityCheck inv;
        inv.name = "invariance_defect";
        inv.instance = "n=" + std::to_string(n_fin) + ";M=" + std::to_string(M_fin) + ";m=" + std::to_string(m0) +
                       ";beta_inf=" + fmt_double(beta_inf);
        inv.lhs = invariance_defect(mu_g, g, probe_dictionary());
        inv.rhs = invariance_defect_bound(*final_sel, n_fin, M_fin, m0, Normalization::Mu) + 1e-9;
        inv.margin = inv.rhs - inv.lhs;
        inv.ci_low = inv.ci_high = inv.lhs;
        inv.pass = inv.margin >= 0.0;
        res.checks.push_back(inv);

        // Expansion along the trimmed times of the selected seeds.
        const double log_sup_g = res.p * log_sup;
        long violations = 0;
        double worst = std::numeric_limits<double>::infinity();
        std::size_t checked = 0;
        for (const auto* s : final_sel->seeds) {
            if (checked++ >= 200) break;
            for (int M : Ms) {
                const auto hr = verify_hyperbolic(s->orbit.log_derivs, s->E.elems, n_fin, M, m0, log_sup_g);
                violations += hr.violations_i + hr.violations_ii + hr.violations_iii;
                worst = std::min({worst, hr.worst_i, hr.worst_ii, hr.worst_iii});
            }
        }
        res.checks.push_back(count_row("hyperbolic_times", "seeds=" + std::to_string(checked),
                                       static_cast<double>(violations), std::isfinite(worst) ? worst : 0.0));
    }
    if (!at_least(Stage::Entropy)) return res;

    // Entropy formula on the f-measure and the Mañé bounds.
    FormulaOptions fo;
    fo.p = 1;
    fo.tolerance = cfg.tolerance;
    fo.min_atoms = cfg.min_atoms;
    fo.rng_seed = cfg.rng_seed;
    fo.jobs = cfg.jobs;
    res.formula = entropy_formula_residual(f, nu, cfg.q_list, cfg.entropy_m, fo);
    {
        std::ostringstream os;
        write_entropy_csv(os, *res.formula);
        write_file(dir / "entropy.csv", os.str(), res);
    }
    for (const auto& rate : res.formula->rates) {
        const ManeReport mr = verify_mane_bounds(nu, f, rate.q, rate.a);
        const std::string inst = "q=" + std::to_string(rate.q);
        for (InequalityCheck c : {mr.sete, mr.qq_bound, mr.j_bound}) {
            c.instance = inst;
            res.checks.push_back(c);
        }
        res.checks.push_back(count_row("mane_rho", inst + ";checked=" + std::to_string(mr.rho_checked),
                                       static_cast<double>(mr.rho_violations), 0.0));
    }
    if (!at_least(Stage::Pipeline)) return res;

    // Gibbs instances on a short-horizon pool; see kResolvableLogDeriv.
    if (cfg.gibbs_instances > 0) {
        PoolOptions gpo = po;
        gpo.seeds = cfg.gibbs_instances;
        gpo.n_max = cfg.gibbs_n;
        gpo.detector = Detector::Surrogate;
        gpo.rng_seed = mix(cfg.rng_seed ^ 0x6769626273ULL);
        const SamplePool gpool = build_pool(g, sigma_left, sigma_right, gpo);
        const int M = Ms.front();
        const auto& rate = res.formula->rates.front();
        for (std::size_t i = 0; i < gpool.seeds.size(); ++i) {
            const auto& s = gpool.seeds[i];
            GibbsInput in;
            in.n = cfg.gibbs_n;
            in.E = trim(s.E.elems, cfg.gibbs_n, M, m0);
            in.q = rate.q;
            in.a = rate.a;
            in.eps = res.eps;
            in.C = cfg.gibbs_C;
            in.ambient_left = sigma_left;
            in.ambient_right = sigma_right;
            in.in_atom = surrogate_atom_predicate(g, in.E, cfg.gibbs_n, M, m0, cfg.beta, res.b, res.p, cfg.c_expansion);
            in.samples = cfg.gibbs_samples;
            in.confidence = cfg.gibbs_confidence;
            in.rng_seed = mix(cfg.rng_seed ^ mix(i + 1));
            InequalityCheck c = gibbs_check(g, s.x, in).row();
            c.instance += ";seed=" + std::to_string(i);
            res.checks.push_back(c);
        }
    }

    if (cfg.basin_seeds > 0) {
        BasinProbeOptions bo;
        bo.seeds = cfg.basin_seeds;
        bo.n = cfg.basin_n;
        bo.tolerance = cfg.basin_tolerance;
        bo.chi_threshold = res.b;
        bo.rng_seed = mix(cfg.rng_seed ^ 0x626173696eULL);
        bo.jobs = cfg.jobs;
        res.basin = basin_probe(f, nu, bo);
        std::ostringstream os;
        CsvWriter w(os, {"seed", "chi", "distance", "eligible", "within"});
        for (int i = 0; i < res.basin->seeds; ++i) {
            const bool el = res.basin->chi[i] > bo.chi_threshold;
            w.write(i, res.basin->chi[i], res.basin->distance[i], el ? 1 : 0,
                    el && res.basin->distance[i] <= bo.tolerance ? 1 : 0);
        }
        write_file(dir / "basin.csv", os.str(), res);
    }

    std::ostringstream cs;
    write_checks_csv(cs, res.checks);
    write_file(dir / "checks.csv", cs.str(), res);
    std::ostringstream es;
    write_entropy_csv(es, *res.formula);
    res.verdict = decide_verdict(cs.str(), es.str());
    write_file(dir / "verdict.txt", res.verdict, res);
    return res;
}

}  // namespace acip
