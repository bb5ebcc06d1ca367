// Batch front end for the comparison pipeline: single stages for the larger
// grids, the full compare run, parameter sweeps, and power-law fits of their
// outputs. Every deliverable goes to --out (or the config's output dir); with
// neither set the primary CSV lands on stdout for piping.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "bogolab/harness.hpp"

using namespace bogolab;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    double dt = 0.0;
    double tfinal = 0.0;
    long long seed = -1;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", o.out_dir, "output directory (overrides the config)");
    cmd->add_option("--dt", o.dt, "override time.dt");
    cmd->add_option("--tfinal", o.tfinal, "override time.t_final");
    cmd->add_option("--seed", o.seed, "override the config seed");
    cmd->add_flag("--quiet", o.quiet, "suppress progress output");
}

ExperimentConfig load_config(const CommonOpts& o) {
    ExperimentConfig cfg = parse_config(o.config_path);
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (o.dt > 0.0) cfg.dt = o.dt;
    if (o.tfinal > 0.0) cfg.t_final = o.tfinal;
    if (o.seed >= 0) cfg.seed = static_cast<unsigned>(o.seed);
    validate_config(cfg);
    return cfg;
}

// Route one named deliverable to out_dir, or to stdout when no directory is
// configured.
void deliver(const ExperimentConfig& cfg, const char* name,
             const std::function<void(std::ostream&)>& writer, bool quiet) {
    if (cfg.out_dir.empty()) {
        writer(std::cout);
        return;
    }
    std::filesystem::create_directories(cfg.out_dir);
    std::string path = cfg.out_dir + "/" + name;
    std::ofstream os(path);
    if (!os.good()) throw std::runtime_error("cannot write " + path);
    writer(os);
    if (!quiet) std::cout << "wrote " << path << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_hartree(const CommonOpts& o) {
    ExperimentConfig cfg = load_config(o);
    StageSetup s = stage_setup(cfg);
    auto t0 = std::chrono::steady_clock::now();
    HartreeTrajectory traj = evolve_hartree(s.u0, s.profile, cfg.t_final, 0.5 * cfg.dt);
    std::string hash = config_hash(cfg);
    deliver(cfg, "hartree.csv", [&](std::ostream& os) { write_hartree_csv(traj, os, hash); },
            o.quiet);
    if (!o.quiet)
        std::cout << "hartree: " << traj.size() << " samples, final mu "
                  << fmt_double(traj.mu_values.back()) << ", " << fmt_double(seconds_since(t0))
                  << " s\n";
    return 0;
}

int cmd_pair(const CommonOpts& o) {
    ExperimentConfig cfg = load_config(o);
    StageSetup s = stage_setup(cfg);
    auto t0 = std::chrono::steady_clock::now();
    HartreeTrajectory traj = evolve_hartree(s.u0, s.profile, cfg.t_final, 0.5 * cfg.dt);
    EvolvePairOptions opts;
    opts.store_stride = s.stride;
    PairEvolution ev = evolve_pair(initial_pair_state(cfg, s), traj, cfg.dt, opts);
    std::string hash = config_hash(cfg);
    if (!cfg.out_dir.empty())
        deliver(cfg, "hartree.csv", [&](std::ostream& os) { write_hartree_csv(traj, os, hash); },
                o.quiet);
    deliver(cfg, "pair.csv", [&](std::ostream& os) { write_pair_csv(ev, os, hash); }, o.quiet);
    if (!o.quiet)
        std::cout << "pair: final occupation " << fmt_double(ev.observables.back().number)
                  << ", defects " << fmt_double(ev.defect_x.back() + ev.defect_y.back()) << ", "
                  << fmt_double(seconds_since(t0)) << " s\n";
    return 0;
}

int cmd_fock(const CommonOpts& o) {
    ExperimentConfig cfg = load_config(o);
    StageSetup s = stage_setup(cfg);
    auto t0 = std::chrono::steady_clock::now();
    HartreeTrajectory traj = evolve_hartree(s.u0, s.profile, cfg.t_final, 0.5 * cfg.dt);
    FockEvolveOptions opts;
    opts.store_stride = s.stride;
    opts.leakage_abort = cfg.tolerances.leakage_abort;
    opts.memory_cap = cfg.memory_cap;
    FockEvolution ev = evolve_fock(initial_excitation(cfg, s), traj, cfg.dt, opts);
    std::string hash = config_hash(cfg);
    deliver(cfg, "fock.csv", [&](std::ostream& os) { write_fock_csv(ev, os, hash); }, o.quiet);
    if (!o.quiet)
        std::cout << "fock: final leakage " << fmt_double(ev.leakage.back()) << ", "
                  << fmt_double(seconds_since(t0)) << " s\n";
    return 0;
}

int cmd_exact(const CommonOpts& o) {
    ExperimentConfig cfg = load_config(o);
    StageSetup s = stage_setup(cfg);
    auto t0 = std::chrono::steady_clock::now();
    double drop = 0.0, leak = 0.0;
    FockVector psi0 = embedded_initial_state(cfg, s, &drop, &leak);
    ExactHamiltonian hn(s.particles, s.profile, s.grid, cfg.memory_cap);
    ExactEvolveOptions opts;
    opts.store_stride = 1;
    opts.krylov_tol = cfg.tolerances.krylov_tol;
    // the Krylov stepper resolves each step to tolerance internally, so it
    // only needs to land on the sample grid
    ExactEvolution ev =
        evolve_exact(psi0, hn, cfg.t_final, static_cast<double>(s.stride) * cfg.dt, opts);
    std::string hash = config_hash(cfg);
    deliver(cfg, "exact.csv", [&](std::ostream& os) { write_exact_csv(ev, os, hash); }, o.quiet);
    if (!o.quiet)
        std::cout << "exact: dimension " << hn.basis()->dimension() << ", embed drop "
                  << fmt_double(drop) << ", energy drift "
                  << fmt_double(std::abs(ev.energies.back() - ev.energies.front())) << ", "
                  << fmt_double(seconds_since(t0)) << " s\n";
    return 0;
}

int cmd_compare(const CommonOpts& o) {
    ExperimentConfig cfg = load_config(o);
    RunRecord rec = run_pipeline(cfg);  // flushes its own files when out_dir is set
    if (cfg.out_dir.empty()) write_reports_csv(rec, std::cout);
    if (!o.quiet) {
        const ApproximationReport& last = rec.reports.back();
        std::cout << "compare: t " << fmt_double(last.time) << ", norm_error "
                  << fmt_double(last.norm_error) << ", depletion " << fmt_double(last.depletion)
                  << ", leakage " << fmt_double(rec.leakage.back()) << ", "
                  << fmt_double(rec.wall_seconds) << " s\n";
    }
    return 0;
}

int cmd_sweep(const CommonOpts& o) {
    ExperimentConfig cfg = load_config(o);
    SweepResult sw = sweep(cfg);  // member files + sweep_summary.csv when out_dir is set

    std::size_t failed = 0;
    for (const SweepEntry& e : sw.entries) {
        if (e.failed) ++failed;
        if (o.quiet) continue;
        std::cout << "N=" << e.particles << " beta=" << fmt_double(e.beta);
        if (e.failed)
            std::cout << " failed: " << e.error << '\n';
        else
            std::cout << " norm_error=" << fmt_double(e.record->reports.back().norm_error)
                      << " leakage=" << fmt_double(e.record->leakage.back()) << '\n';
    }

    nlohmann::json summary = sweep_summary_json(sw);
    std::vector<std::pair<double, double>> pts = sweep_fit_points(sw);
    std::set<double> distinct;
    for (const auto& p : pts) distinct.insert(p.first);
    if (distinct.size() >= 2) {
        PowerlawFit fit = fit_powerlaw(pts);
        summary["fit"] = nlohmann::json{{"quantity", "norm_error_sq vs N"},
                                        {"slope", fit.slope},
                                        {"intercept", fit.intercept},
                                        {"residual", fit.residual},
                                        {"points", pts.size()}};
        if (!o.quiet)
            std::cout << "fit: slope " << fmt_double(fit.slope) << ", residual "
                      << fmt_double(fit.residual) << '\n';
        deliver(cfg, "norm_error_sq_vs_N.dat",
                [&](std::ostream& os) { write_xy(pts, os, "N norm_error^2 at t_final"); },
                o.quiet);
    }
    deliver(cfg, "summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; },
            o.quiet);

    if (failed == sw.entries.size()) return 1;
    return failed == 0 ? 0 : 2;
}

int cmd_fit(const std::string& data_path, bool quiet) {
    PowerlawFit fit = fit_powerlaw(load_xy(data_path));
    if (quiet)
        std::cout << fmt_double(fit.slope) << ' ' << fmt_double(fit.intercept) << ' '
                  << fmt_double(fit.residual) << '\n';
    else
        std::cout << "slope " << fmt_double(fit.slope) << " intercept "
                  << fmt_double(fit.intercept) << " residual " << fmt_double(fit.residual)
                  << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bogoliubov norm-approximation experiments"};
    app.require_subcommand(1);

    CommonOpts opts;
    CLI::App* hartree = app.add_subcommand("hartree", "condensate orbit only");
    add_common(hartree, opts);
    CLI::App* pair = app.add_subcommand("pair", "Hartree orbit plus the pair flow");
    add_common(pair, opts);
    CLI::App* fock = app.add_subcommand("fock", "Hartree orbit plus the truncated Fock flow");
    add_common(fock, opts);
    CLI::App* exact = app.add_subcommand("exact", "exact N-body flow from the embedded start");
    add_common(exact, opts);
    CLI::App* compare = app.add_subcommand("compare", "full four-evolution comparison pipeline");
    add_common(compare, opts);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run every (N, beta) member and summarize");
    add_common(sweep_cmd, opts);

    std::string fit_path;
    bool fit_quiet = false;
    CLI::App* fit = app.add_subcommand("fit", "power-law fit of a two-column data file");
    fit->add_option("data", fit_path, "two-column file: N value")->required();
    fit->add_flag("--quiet", fit_quiet, "print bare numbers only");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*hartree) return cmd_hartree(opts);
        if (*pair) return cmd_pair(opts);
        if (*fock) return cmd_fock(opts);
        if (*exact) return cmd_exact(opts);
        if (*compare) return cmd_compare(opts);
        if (*sweep_cmd) return cmd_sweep(opts);
        if (*fit) return cmd_fit(fit_path, fit_quiet);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
