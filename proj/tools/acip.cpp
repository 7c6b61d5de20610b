// Experiment runner: each stage subcommand runs the pipeline up to that stage.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "acip/cli.hpp"
#include "acip/csv.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<int> jobs;
    std::optional<std::uint64_t> rng_seed;
    std::optional<std::string> out;
};

acip::ExperimentConfig load(const Flags& fl) {
    acip::ExperimentConfig cfg = fl.config.empty() ? acip::ExperimentConfig{} : acip::load_config(fl.config);
    acip::apply_overrides(cfg, {fl.jobs, fl.rng_seed, fl.out});
    return cfg;
}

void summarize(const acip::PipelineResult& r, acip::Stage stage, const std::string& dir) {
    std::cout << "stage: " << acip::stage_name(stage) << "\n";
    std::cout << "p = " << r.p << ", b = " << acip::fmt_double(r.b) << ", eps = " << acip::fmt_double(r.eps) << "\n";
    if (r.g_atoms) {
        std::cout << "selection fraction = " << acip::fmt_double(r.selection_fraction) << ", atoms = " << r.f_atoms
                  << "\n";
        if (r.density_l1) std::cout << "density L1 = " << acip::fmt_double(*r.density_l1) << "\n";
        std::cout << "lyapunov = " << acip::fmt_double(r.lyapunov) << "\n";
    }
    if (r.formula)
        std::cout << "h_est = " << acip::fmt_double(r.formula->h_est) << ", residual = "
                  << acip::fmt_double(r.formula->residual) << "\n";
    if (r.basin)
        std::cout << "basin coverage (sampled) = " << r.basin->within << "/" << r.basin->eligible << "\n";
    if (!r.verdict.empty()) std::cout << "verdict: " << r.verdict.substr(0, r.verdict.find('\n')) << "\n";
    for (const auto& f : r.files) std::cout << "wrote " << dir << "/" << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Absolutely continuous invariant measure detector for one-dimensional maps"};
    app.require_subcommand(1);
    Flags fl;
    app.add_option("--config", fl.config, "Experiment config (key = value with [section] headers)");
    app.add_option("--jobs", fl.jobs, "Worker thread cap")->check(CLI::PositiveNumber);
    app.add_option("--rng-seed", fl.rng_seed, "Random seed");
    app.add_option("--out", fl.out, "Output directory");

    const std::map<std::string, acip::Stage> stages{
        {"norms", acip::Stage::Norms},     {"branches", acip::Stage::Branches}, {"tree", acip::Stage::Tree},
        {"times", acip::Stage::Times},     {"measure", acip::Stage::Measure},   {"entropy", acip::Stage::Entropy},
        {"pipeline", acip::Stage::Pipeline},
    };
    std::map<std::string, CLI::App*> stage_cmds;
    for (const auto& [name, stage] : stages)
        stage_cmds[name] = app.add_subcommand(name, std::string("Run the pipeline through the ") + name + " stage");

    auto* verify = app.add_subcommand("verify", "Run the Misiurewicz and SETE inequality suites into checks.csv");

    auto* bound = app.add_subcommand("bound", "Evaluate the bound on the number of measures");
    std::optional<double> log_sup, log_r1, delta, C_r;
    std::string variant = "finite";
    bound->add_option("--log-sup", log_sup, "log ||f'||_inf (default: from the config map)");
    bound->add_option("--log-r1", log_r1, "log ||f'||_{r-1} (default: from the config map)");
    bound->add_option("--delta", delta, "Exponent threshold (default: config delta)");
    bound->add_option("--C-r", C_r, "Constant C_r (default: config [bound] C_r)");
    bound->add_option("--variant", variant, "finite, smooth or analytic")
        ->check(CLI::IsMember({"finite", "smooth", "analytic"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const acip::ExperimentConfig cfg = load(fl);
        for (const auto& [name, cmd] : stage_cmds) {
            if (!cmd->parsed()) continue;
            const auto stage = stages.at(name);
            summarize(acip::run_pipeline(cfg, stage), stage, cfg.output_dir);
            return 0;
        }
        if (verify->parsed()) {
            const auto rows = acip::run_inequality_suites(cfg.rng_seed, cfg.jobs);
            std::filesystem::create_directories(cfg.output_dir);
            std::ofstream os(std::filesystem::path(cfg.output_dir) / "checks.csv", std::ios::binary);
            acip::write_checks_csv(os, rows);
            bool ok = true;
            for (const auto& r : rows) {
                std::cout << r.name << " " << r.instance << " violations=" << r.lhs << (r.pass ? " PASS" : " FAIL")
                          << "\n";
                ok = ok && r.pass;
            }
            std::cout << "wrote " << cfg.output_dir << "/checks.csv\n";
            return ok ? 0 : 1;
        }
        if (bound->parsed()) {
            acip::BoundInput in;
            if (!log_sup || !log_r1) {
                const auto f = acip::make_map(cfg);
                const auto norms = acip::estimate_norms(f);
                in.log_sup_fprime = std::log(norms.sup_first());
                in.log_fprime_r_minus_1 = std::log(norms.f_prime_r_minus_1);
            }
            if (log_sup) in.log_sup_fprime = *log_sup;
            if (log_r1) in.log_fprime_r_minus_1 = *log_r1;
            in.delta = delta ? *delta : cfg.delta;
            in.C_r = C_r ? *C_r : cfg.bound_C_r;
            const auto v = acip::bound_calculator(in, acip::parse_bound_variant(variant));
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.3g", v.value);
            std::cout << "variant = " << variant << "\n";
            std::cout << "log_sup_fprime = " << acip::fmt_double(in.log_sup_fprime) << "\n";
            std::cout << "log_fprime_r_minus_1 = " << acip::fmt_double(in.log_fprime_r_minus_1) << "\n";
            std::cout << "delta = " << acip::fmt_double(in.delta) << ", C_r = " << acip::fmt_double(in.C_r) << "\n";
            std::cout << "log_bound = " << acip::fmt_double(v.log_value) << "\n";
            std::cout << "bound = " << buf << "\n";
            return 0;
        }
    } catch (const acip::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return acip::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
