#pragma once

// Experiment orchestration: config files, the four-evolution comparison
// pipeline (Hartree / pair flow / truncated Fock / exact N-body), N and beta
// sweeps, and power-law scaling fits.
//
// Config files are strict JSON: unknown keys are an error (no silent typos),
// defaults are filled during parsing, and every output row carries a hash of
// the fully-resolved config so runs can be tied back to their inputs. The
// hash covers everything except the output location.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bogolab/common.hpp"
#include "bogolab/embedding.hpp"
#include "bogolab/fock.hpp"
#include "bogolab/hartree.hpp"
#include "bogolab/lattice.hpp"
#include "bogolab/pairdyn.hpp"

namespace bogolab {

// ---------------------------------------------------------------------------
// config types

struct CondensateSpec {
    enum class Kind { plane_wave, gaussian, file };

    Kind kind = Kind::plane_wave;
    int index = 0;             // plane_wave: wavenumber index, k = 2*pi*index/L
    double center = 0.0;       // gaussian packet parameters
    double width = 1.0;
    int momentum_index = 0;    // integer so the packet stays periodic
    std::string path;          // file kind: two columns "re im", one row per node
};

struct ExcitationSpec {
    enum class Kind { vacuum, squeezed };

    Kind kind = Kind::vacuum;
    double strength = 0.0;     // top singular value of the squeeze matrix
    unsigned seed = 0;         // resolved against the config seed when absent
    bool seed_given = false;
};

struct ToleranceSet {
    double leakage_abort = 1e-3;  // cumulative Fock truncation leakage abort
    double krylov_tol = 1e-12;    // exact-propagator convergence target
};

struct ExperimentConfig {
    double length = 0.0;
    int modes = 0;
    InteractionProfile profile;        // beta/particles refilled per member
    std::vector<int> particle_counts;  // one entry for single runs
    std::vector<double> beta_values;   // resolved; defaults to {profile.beta}
    CondensateSpec condensate;
    ExcitationSpec excitation;
    double t_final = 0.0;
    double dt = 0.0;
    std::size_t sample_stride = 0;     // comparison stride in dt steps; 0 = ~10 samples
    int n_max = 4;                     // excitation-sector truncation
    std::size_t memory_cap = fock_default_cap;
    ToleranceSet tolerances;
    std::string out_dir;               // empty = no files written
    unsigned seed = 1234;
};

// ---------------------------------------------------------------------------
// strict JSON reading

namespace detail {

// Wraps one JSON object; records which keys were consumed so finish() can
// reject leftovers by full path ("profile.betta", not just "betta").
class ConfigReader {
  public:
    ConfigReader(const nlohmann::json& obj, std::string path)
        : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object())
            throw std::runtime_error("config: " + (path_.empty() ? std::string("top level") : path_) +
                                     " must be an object");
    }

    bool has(const char* key) const { return obj_.contains(key); }

    double number(const char* key) {
        const nlohmann::json& v = fetch(key);
        if (!v.is_number())
            throw std::runtime_error("config: " + full(key) + " must be a number");
        return v.get<double>();
    }
    double number_or(const char* key, double fallback) {
        return has(key) ? number(key) : fallback;
    }

    long long integer(const char* key) {
        const nlohmann::json& v = fetch(key);
        if (!v.is_number_integer())
            throw std::runtime_error("config: " + full(key) + " must be an integer");
        return v.get<long long>();
    }
    long long integer_or(const char* key, long long fallback) {
        return has(key) ? integer(key) : fallback;
    }

    std::string text(const char* key) {
        const nlohmann::json& v = fetch(key);
        if (!v.is_string())
            throw std::runtime_error("config: " + full(key) + " must be a string");
        return v.get<std::string>();
    }
    std::string text_or(const char* key, const std::string& fallback) {
        return has(key) ? text(key) : fallback;
    }

    bool flag_or(const char* key, bool fallback) {
        if (!has(key)) return fallback;
        const nlohmann::json& v = fetch(key);
        if (!v.is_boolean())
            throw std::runtime_error("config: " + full(key) + " must be a boolean");
        return v.get<bool>();
    }

    // key holding either one value or an array of them
    template <class Get>
    auto list(const char* key, Get get)
        -> std::vector<std::invoke_result_t<Get, const nlohmann::json&, std::string>> {
        const nlohmann::json& v = fetch(key);
        std::vector<std::invoke_result_t<Get, const nlohmann::json&, std::string>> out;
        if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(get(v[i], full(key) + "[" + std::to_string(i) + "]"));
        } else {
            out.push_back(get(v, full(key)));
        }
        return out;
    }

    ConfigReader child(const char* key) { return ConfigReader(fetch(key), full(key)); }

    std::string full(const char* key) const {
        return path_.empty() ? std::string(key) : path_ + "." + key;
    }

    void finish() const {
        for (const auto& item : obj_.items())
            if (!used_.count(item.key()))
                throw std::runtime_error("config: unknown key \"" + full(item.key().c_str()) + "\"");
    }

  private:
    const nlohmann::json& fetch(const char* key) {
        if (!obj_.contains(key))
            throw std::runtime_error("config: missing required key \"" + full(key) + "\"");
        used_.insert(key);
        return obj_.at(key);
    }

    const nlohmann::json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

inline double json_number(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number()) throw std::runtime_error("config: " + path + " must be a number");
    return v.get<double>();
}

inline long long json_integer(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number_integer()) throw std::runtime_error("config: " + path + " must be an integer");
    return v.get<long long>();
}

inline const char* profile_kind_name(InteractionProfile::Kind k) {
    switch (k) {
        case InteractionProfile::Kind::gaussian: return "gaussian";
        case InteractionProfile::Kind::box: return "box";
        case InteractionProfile::Kind::cosine_bump: return "cosine_bump";
        case InteractionProfile::Kind::tabulated: return "tabulated";
    }
    return "?";
}

}  // namespace detail

// Full-config validation, shared by the parser and the CLI override path so
// flag-adjusted configs get the same checks as freshly parsed ones.
inline void validate_config(const ExperimentConfig& cfg) {
    require(cfg.length > 0.0 && std::isfinite(cfg.length), "config: grid.length must be positive");
    require(cfg.modes >= 2, "config: grid.modes must be at least 2");
    require(std::isfinite(cfg.profile.amplitude), "config: profile.amplitude must be finite");
    require(cfg.profile.width > 0.0 && std::isfinite(cfg.profile.width),
            "config: profile.width must be positive");

    require(!cfg.particle_counts.empty(), "config: particles list is empty");
    for (int n : cfg.particle_counts)
        require(n >= 2, "config: particles must be at least 2 for exact-comparison runs (got " +
                            std::to_string(n) + ")");
    require(!cfg.beta_values.empty(), "config: beta_values list is empty");
    for (double b : cfg.beta_values)
        require(b >= 0.0 && b < 0.5, "config: profile.beta = " + fmt_double(b) +
                                         " outside the admissible range [0, 1/2)");

    if (cfg.condensate.kind == CondensateSpec::Kind::gaussian)
        require(cfg.condensate.width > 0.0, "config: condensate.width must be positive");
    if (cfg.condensate.kind == CondensateSpec::Kind::file)
        require(!cfg.condensate.path.empty(), "config: condensate.path must not be empty");
    require(cfg.excitation.strength >= 0.0 && std::isfinite(cfg.excitation.strength),
            "config: excitation.strength must be nonnegative");

    require(cfg.t_final > 0.0 && std::isfinite(cfg.t_final), "config: time.t_final must be positive");
    require(cfg.dt > 0.0 && std::isfinite(cfg.dt), "config: time.dt must be positive");
    require(cfg.dt <= cfg.t_final, "config: time.dt exceeds time.t_final");
    double steps = cfg.t_final / cfg.dt;
    require(std::abs(steps - std::llround(steps)) <= 1e-9 * (1.0 + steps),
            "config: time.dt must divide t_final evenly");
    if (cfg.sample_stride != 0)
        require(std::llround(steps) % static_cast<long long>(cfg.sample_stride) == 0,
                "config: time.sample_stride must divide the step count t_final/dt");

    require(cfg.n_max >= 1, "config: truncations.n_max must be at least 1");
    require(cfg.memory_cap >= 1, "config: truncations.memory_cap must be at least 1");
    require(cfg.tolerances.leakage_abort > 0.0, "config: tolerances.leakage_abort must be positive");
    require(cfg.tolerances.krylov_tol > 0.0, "config: tolerances.krylov_tol must be positive");
}

inline ExperimentConfig parse_config_json(const nlohmann::json& root) {
    ExperimentConfig cfg;
    detail::ConfigReader top(root, "");

    if (top.has("seed")) {
        long long s = top.integer("seed");
        require(s >= 0, "config: seed must be nonnegative");
        cfg.seed = static_cast<unsigned>(s);
    }

    {
        detail::ConfigReader grid = top.child("grid");
        cfg.length = grid.number("length");
        cfg.modes = static_cast<int>(grid.integer("modes"));
        grid.finish();
    }

    bool beta_in_profile = false;
    {
        detail::ConfigReader prof = top.child("profile");
        std::string kind = prof.text("kind");
        if (kind == "gaussian")
            cfg.profile.kind = InteractionProfile::Kind::gaussian;
        else if (kind == "box")
            cfg.profile.kind = InteractionProfile::Kind::box;
        else if (kind == "cosine_bump")
            cfg.profile.kind = InteractionProfile::Kind::cosine_bump;
        else
            throw std::runtime_error("config: profile.kind \"" + kind +
                                     "\" is not one of gaussian, box, cosine_bump");
        cfg.profile.amplitude = prof.number_or("amplitude", 1.0);
        cfg.profile.width = prof.number_or("width", 1.0);
        if (prof.has("beta")) {
            cfg.profile.beta = prof.number("beta");
            beta_in_profile = true;
        }
        if (prof.has("exponent_a")) cfg.profile.exponent_a = prof.number("exponent_a");
        if (prof.has("exponent_b")) cfg.profile.exponent_b = prof.number("exponent_b");
        cfg.profile.renormalize = prof.flag_or("renormalize", false);
        prof.finish();
    }

    cfg.particle_counts.clear();
    for (long long n : top.list("particles", detail::json_integer))
        cfg.particle_counts.push_back(static_cast<int>(n));

    if (top.has("beta_values")) {
        require(!beta_in_profile,
                "config: give either profile.beta or beta_values, not both");
        cfg.beta_values = top.list("beta_values", detail::json_number);
    } else {
        cfg.beta_values = {cfg.profile.beta};
    }

    if (top.has("condensate")) {
        detail::ConfigReader cond = top.child("condensate");
        std::string kind = cond.text("kind");
        if (kind == "plane_wave") {
            cfg.condensate.kind = CondensateSpec::Kind::plane_wave;
            cfg.condensate.index = static_cast<int>(cond.integer_or("index", 0));
        } else if (kind == "gaussian") {
            cfg.condensate.kind = CondensateSpec::Kind::gaussian;
            cfg.condensate.center = cond.number_or("center", 0.0);
            cfg.condensate.width = cond.number_or("width", 1.0);
            cfg.condensate.momentum_index = static_cast<int>(cond.integer_or("momentum_index", 0));
        } else if (kind == "file") {
            cfg.condensate.kind = CondensateSpec::Kind::file;
            cfg.condensate.path = cond.text("path");
        } else {
            throw std::runtime_error("config: condensate.kind \"" + kind +
                                     "\" is not one of plane_wave, gaussian, file");
        }
        cond.finish();
    }

    if (top.has("excitation")) {
        detail::ConfigReader exc = top.child("excitation");
        std::string kind = exc.text("kind");
        if (kind == "vacuum") {
            cfg.excitation.kind = ExcitationSpec::Kind::vacuum;
        } else if (kind == "squeezed") {
            cfg.excitation.kind = ExcitationSpec::Kind::squeezed;
            cfg.excitation.strength = exc.number("strength");
            if (exc.has("seed")) {
                long long s = exc.integer("seed");
                require(s >= 0, "config: excitation.seed must be nonnegative");
                cfg.excitation.seed = static_cast<unsigned>(s);
                cfg.excitation.seed_given = true;
            }
        } else {
            throw std::runtime_error("config: excitation.kind \"" + kind +
                                     "\" is not one of vacuum, squeezed");
        }
        exc.finish();
    }
    if (!cfg.excitation.seed_given) cfg.excitation.seed = cfg.seed;

    {
        detail::ConfigReader time = top.child("time");
        cfg.t_final = time.number("t_final");
        cfg.dt = time.number("dt");
        long long stride = time.integer_or("sample_stride", 0);
        require(stride >= 0, "config: time.sample_stride must be nonnegative");
        cfg.sample_stride = static_cast<std::size_t>(stride);
        time.finish();
    }

    if (top.has("truncations")) {
        detail::ConfigReader tr = top.child("truncations");
        cfg.n_max = static_cast<int>(tr.integer_or("n_max", 4));
        long long cap = tr.integer_or("memory_cap", static_cast<long long>(fock_default_cap));
        require(cap >= 1, "config: truncations.memory_cap must be at least 1");
        cfg.memory_cap = static_cast<std::size_t>(cap);
        tr.finish();
    }

    if (top.has("tolerances")) {
        detail::ConfigReader tol = top.child("tolerances");
        cfg.tolerances.leakage_abort = tol.number_or("leakage_abort", 1e-3);
        cfg.tolerances.krylov_tol = tol.number_or("krylov_tol", 1e-12);
        tol.finish();
    }

    cfg.out_dir = top.text_or("output", "");
    top.finish();

    validate_config(cfg);
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("config: ") + e.what());
    }
    return parse_config_json(root);
}

inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config_text(buf.str());
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(e.what()) + " (" + path + ")");
    }
}

// ---------------------------------------------------------------------------
// config echo and hash

// Canonical echo with all defaults filled; nlohmann orders keys, so dump()
// of this object is a stable serialization.
inline nlohmann::json config_json(const ExperimentConfig& cfg) {
    using nlohmann::json;
    json j;
    j["grid"] = json{{"length", cfg.length}, {"modes", cfg.modes}};

    json prof{{"kind", detail::profile_kind_name(cfg.profile.kind)},
              {"amplitude", cfg.profile.amplitude},
              {"width", cfg.profile.width},
              {"renormalize", cfg.profile.renormalize}};
    if (!std::isnan(cfg.profile.exponent_a)) prof["exponent_a"] = cfg.profile.exponent_a;
    if (!std::isnan(cfg.profile.exponent_b)) prof["exponent_b"] = cfg.profile.exponent_b;
    j["profile"] = prof;

    j["particles"] = cfg.particle_counts;
    j["beta_values"] = cfg.beta_values;

    switch (cfg.condensate.kind) {
        case CondensateSpec::Kind::plane_wave:
            j["condensate"] = json{{"kind", "plane_wave"}, {"index", cfg.condensate.index}};
            break;
        case CondensateSpec::Kind::gaussian:
            j["condensate"] = json{{"kind", "gaussian"},
                                   {"center", cfg.condensate.center},
                                   {"width", cfg.condensate.width},
                                   {"momentum_index", cfg.condensate.momentum_index}};
            break;
        case CondensateSpec::Kind::file:
            j["condensate"] = json{{"kind", "file"}, {"path", cfg.condensate.path}};
            break;
    }

    if (cfg.excitation.kind == ExcitationSpec::Kind::vacuum)
        j["excitation"] = json{{"kind", "vacuum"}};
    else
        j["excitation"] = json{
            {"kind", "squeezed"},
            {"strength", cfg.excitation.strength},
            {"seed", cfg.excitation.seed_given ? cfg.excitation.seed : cfg.seed}};

    j["time"] = json{{"t_final", cfg.t_final},
                     {"dt", cfg.dt},
                     {"sample_stride", cfg.sample_stride}};
    j["truncations"] = json{{"n_max", cfg.n_max}, {"memory_cap", cfg.memory_cap}};
    j["tolerances"] = json{{"leakage_abort", cfg.tolerances.leakage_abort},
                           {"krylov_tol", cfg.tolerances.krylov_tol}};
    j["output"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    return j;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
    nlohmann::json echo = config_json(cfg);
    echo.erase("output");  // same experiment, different destination = same hash
    return hex64(fnv1a64(echo.dump()));
}

// ---------------------------------------------------------------------------
// initial data and shared stage setup

inline GridFunction load_grid_function(const std::string& path, const GridSpec& g) {
    std::ifstream in(path);
    require(in.good(), "condensate: cannot open " + path);
    std::vector<cxd> vals;
    double re = 0.0, im = 0.0;
    while (in >> re >> im) vals.emplace_back(re, im);
    require(static_cast<int>(vals.size()) == g.modes,
            "condensate: " + path + " holds " + std::to_string(vals.size()) + " values, expected " +
                std::to_string(g.modes));
    Vec v(g.modes);
    for (int k = 0; k < g.modes; ++k) v[k] = vals[static_cast<std::size_t>(k)];
    GridFunction u{g, std::move(v)};
    double nrm = l2_norm(u);
    require(nrm > 0.0, "condensate: " + path + " is the zero function");
    u.values /= nrm;
    return u;
}

inline GridFunction build_condensate(const CondensateSpec& spec, const GridSpec& g) {
    switch (spec.kind) {
        case CondensateSpec::Kind::plane_wave: {
            double k = 2.0 * pi * spec.index / g.length;
            Vec v(g.modes);
            for (int j = 0; j < g.modes; ++j)
                v[j] = std::exp(iu * k * g.node(j)) / std::sqrt(g.length);
            return GridFunction{g, std::move(v)};
        }
        case CondensateSpec::Kind::gaussian: {
            double k = 2.0 * pi * spec.momentum_index / g.length;
            Vec v(g.modes);
            for (int j = 0; j < g.modes; ++j) {
                // nearest periodic image keeps the packet smooth across the seam
                double d = std::remainder(g.node(j) - spec.center, g.length);
                v[j] = std::exp(cxd(-d * d / (2.0 * spec.width * spec.width), k * g.node(j)));
            }
            GridFunction u{g, std::move(v)};
            u.values /= l2_norm(u);
            return u;
        }
        case CondensateSpec::Kind::file:
            return load_grid_function(spec.path, g);
    }
    throw std::logic_error("build_condensate: unreachable");
}

// One resolved (N, beta) member with the derived quantities every stage needs.
struct StageSetup {
    GridSpec grid;
    InteractionProfile profile;
    GridFunction u0;
    int particles = 0;
    long long nsteps = 0;
    std::size_t stride = 1;               // comparison stride in dt steps
    std::vector<std::size_t> sample_steps;
};

inline void require_single_member(const ExperimentConfig& cfg, const char* who) {
    require(cfg.particle_counts.size() == 1 && cfg.beta_values.size() == 1,
            std::string(who) + ": config holds an N or beta sweep; use the sweep entry point");
}

inline StageSetup stage_setup(const ExperimentConfig& cfg) {
    require_single_member(cfg, "stage_setup");
    StageSetup s;
    s.grid = build_grid(cfg.length, cfg.modes);
    s.particles = cfg.particle_counts[0];
    s.profile = cfg.profile;
    s.profile.beta = cfg.beta_values[0];
    s.profile.particles = s.particles;
    s.u0 = build_condensate(cfg.condensate, s.grid);
    s.nsteps = std::llround(cfg.t_final / cfg.dt);
    if (cfg.sample_stride != 0) {
        s.stride = cfg.sample_stride;
    } else {
        // ~10 samples; keep the stride a divisor of nsteps so the exact flow
        // can step on the sample grid directly
        auto n = static_cast<std::size_t>(s.nsteps);
        s.stride = std::max<std::size_t>(1, n / 10);
        while (n % s.stride != 0) --s.stride;
    }
    for (std::size_t k = 0; k < static_cast<std::size_t>(s.nsteps); k += s.stride)
        s.sample_steps.push_back(k);
    s.sample_steps.push_back(static_cast<std::size_t>(s.nsteps));
    return s;
}

inline unsigned squeeze_seed(const ExperimentConfig& cfg) {
    return cfg.excitation.seed_given ? cfg.excitation.seed : cfg.seed;
}

inline PairState initial_pair_state(const ExperimentConfig& cfg, const StageSetup& s) {
    if (cfg.excitation.kind == ExcitationSpec::Kind::vacuum) return vacuum_pair_state(s.grid);
    RMat sq = build_squeeze_matrix(s.u0, cfg.excitation.strength, squeeze_seed(cfg));
    return squeezed_pair_state(s.grid, sq);
}

inline FockVector initial_excitation(const ExperimentConfig& cfg, const StageSetup& s) {
    FockBasisPtr basis = build_basis(s.grid.modes, FockCap::up_to(cfg.n_max), cfg.memory_cap);
    if (cfg.excitation.kind == ExcitationSpec::Kind::vacuum) return fock_vacuum(basis);
    RMat sq = build_squeeze_matrix(s.u0, cfg.excitation.strength, squeeze_seed(cfg));
    return squeezed_fock_state(sq, basis, cfg.memory_cap);
}

// Initial N-body frame: the excitation vector clamped to its first
// min(n_max, N) sectors, embedded around u0 and renormalized.
inline FockVector embedded_initial_state(const ExperimentConfig& cfg, const StageSetup& s,
                                         double* embed_drop = nullptr,
                                         double* condensate_leak = nullptr) {
    FockVector phi0 = initial_excitation(cfg, s);
    const int n_embed = std::min(cfg.n_max, s.particles);
    FockBasisPtr basis = build_basis(s.grid.modes, FockCap::up_to(n_embed), cfg.memory_cap);
    FockVector clamped{basis, phi0.coeffs.head(basis->dimension())};
    if (embed_drop)
        *embed_drop = std::max(0.0, phi0.coeffs.squaredNorm() - clamped.coeffs.squaredNorm());
    double leak = 0.0;
    FockVector psi0 = embed(s.u0, clamped, s.particles, &leak, cfg.memory_cap);
    if (condensate_leak) *condensate_leak = leak;
    double nrm = psi0.coeffs.norm();
    require(nrm > 1e-6, "embedded initial state has near-zero weight");
    psi0.coeffs /= nrm;
    return psi0;
}

// ---------------------------------------------------------------------------
// single-run pipeline

struct RunRecord {
    ExperimentConfig cfg;   // resolved single member
    std::string hash;

    HartreeTrajectory hartree;   // runs at dt/2 so mid-step lookups stay on-grid
    PairEvolution pair;
    FockEvolution fock;
    ExactEvolution exact;

    std::vector<std::size_t> sample_steps;
    std::vector<double> sample_times;
    std::vector<ApproximationReport> reports;  // one row per sample
    std::vector<double> leakage;               // cumulative Fock leakage at samples
    std::vector<double> embed_drop;            // weight cut when clamping Phi to N sectors

    double initial_embed_drop = 0.0;
    double initial_condensate_leak = 0.0;
    double energy_drift = 0.0;       // max relative deviation from the t=0 energy
    double exact_norm_drift = 0.0;   // max | ||psi(t)|| - 1 |

    double hartree_seconds = 0.0, pair_seconds = 0.0, fock_seconds = 0.0;
    double exact_seconds = 0.0, compare_seconds = 0.0, wall_seconds = 0.0;
};

// CSV columns: time,norm,leakage,config_hash
inline void write_fock_csv(const FockEvolution& ev, std::ostream& os,
                           const std::string& config_hash, std::size_t stride = 1) {
    os << "time,norm,leakage,config_hash\n";
    for (std::size_t i = 0; i < ev.times.size(); i += stride)
        os << fmt_double(ev.times[i]) << ',' << fmt_double(ev.norms[i]) << ','
           << fmt_double(ev.leakage[i]) << ',' << config_hash << '\n';
}

// CSV columns: time,norm,energy,config_hash (stored samples only; the energy
// is evaluated where states were kept)
inline void write_exact_csv(const ExactEvolution& ev, std::ostream& os,
                            const std::string& config_hash) {
    os << "time,norm,energy,config_hash\n";
    for (std::size_t k = 0; k < ev.state_steps.size(); ++k) {
        std::size_t s = ev.state_steps[k];
        os << fmt_double(ev.times[s]) << ',' << fmt_double(ev.norms[s]) << ','
           << fmt_double(ev.energies[k]) << ',' << config_hash << '\n';
    }
}

// CSV columns: time,norm_error,depletion,excitation_number,kinetic_excitation,
//              trace_distance,weighted_trace_distance,leakage,embed_drop,config_hash
inline void write_reports_csv(const RunRecord& rec, std::ostream& os) {
    os << "time,norm_error,depletion,excitation_number,kinetic_excitation,trace_distance,"
          "weighted_trace_distance,leakage,embed_drop,config_hash\n";
    for (std::size_t k = 0; k < rec.reports.size(); ++k) {
        const ApproximationReport& r = rec.reports[k];
        os << fmt_double(r.time) << ',' << fmt_double(r.norm_error) << ','
           << fmt_double(r.depletion) << ',' << fmt_double(r.excitation_number) << ','
           << fmt_double(r.kinetic_excitation) << ',' << fmt_double(r.trace_distance) << ','
           << fmt_double(r.weighted_trace_distance) << ',' << fmt_double(rec.leakage[k]) << ','
           << fmt_double(rec.embed_drop[k]) << ',' << rec.hash << '\n';
    }
}

inline nlohmann::json summary_json(const RunRecord& rec) {
    using nlohmann::json;
    const ApproximationReport& last = rec.reports.back();
    double max_err = 0.0;
    for (const ApproximationReport& r : rec.reports) max_err = std::max(max_err, r.norm_error);
    json j;
    j["config"] = config_json(rec.cfg);
    j["config_hash"] = rec.hash;
    j["samples"] = rec.sample_times.size();
    j["final"] = json{{"time", last.time},
                      {"norm_error", last.norm_error},
                      {"depletion", last.depletion},
                      {"excitation_number", last.excitation_number},
                      {"kinetic_excitation", last.kinetic_excitation},
                      {"trace_distance", last.trace_distance},
                      {"weighted_trace_distance", last.weighted_trace_distance},
                      {"leakage", rec.leakage.back()},
                      {"embed_drop", rec.embed_drop.back()}};
    j["max_norm_error"] = max_err;
    j["energy_drift"] = rec.energy_drift;
    j["exact_norm_drift"] = rec.exact_norm_drift;
    j["initial_embed_drop"] = rec.initial_embed_drop;
    j["initial_condensate_leak"] = rec.initial_condensate_leak;
    j["pair_final"] = json{{"number", rec.pair.observables.back().number},
                           {"defect_x", rec.pair.defect_x.back()},
                           {"defect_y", rec.pair.defect_y.back()}};
    j["exact_substepped"] = rec.exact.substepped;
    return j;
}

namespace detail {

template <class Evolution>
const FockVector& stored_state(const Evolution& ev, std::size_t step, const char* who) {
    auto it = std::find(ev.state_steps.begin(), ev.state_steps.end(), step);
    require(it != ev.state_steps.end(),
            std::string(who) + ": no stored state at step " + std::to_string(step));
    return ev.states[static_cast<std::size_t>(it - ev.state_steps.begin())];
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Stage results already on disk survive a later stage's abort, which is all
// "partial results are flushed" needs.
template <class Writer>
void emit_file(const std::string& dir, const char* name, Writer writer) {
    if (dir.empty()) return;
    std::ofstream os(dir + "/" + name);
    require(os.good(), std::string("cannot write ") + dir + "/" + name);
    writer(os);
}

}  // namespace detail

inline void write_timing(const RunRecord& rec, std::ostream& os) {
    os << "hartree_seconds " << fmt_double(rec.hartree_seconds) << '\n'
       << "pair_seconds " << fmt_double(rec.pair_seconds) << '\n'
       << "fock_seconds " << fmt_double(rec.fock_seconds) << '\n'
       << "exact_seconds " << fmt_double(rec.exact_seconds) << '\n'
       << "compare_seconds " << fmt_double(rec.compare_seconds) << '\n'
       << "wall_seconds " << fmt_double(rec.wall_seconds) << '\n';
}

// The full comparison pipeline for one (N, beta) member: Hartree orbit, pair
// flow, truncated Fock flow, exact N-body flow from the embedded start, then
// per-sample reconstruction error and condensation metrics. When out_dir is
// set, each stage's file is written as soon as the stage completes.
inline RunRecord run_pipeline(const ExperimentConfig& cfg) {
    require_single_member(cfg, "run_pipeline");
    StageSetup s = stage_setup(cfg);

    RunRecord rec;
    rec.cfg = cfg;
    rec.hash = config_hash(cfg);
    rec.sample_steps = s.sample_steps;

    const std::string& dir = cfg.out_dir;
    if (!dir.empty()) std::filesystem::create_directories(dir);
    auto wall0 = std::chrono::steady_clock::now();

    // (1) Hartree orbit at half step, so both whole and half multiples of dt
    // sit exactly on its stored grid
    auto t0 = std::chrono::steady_clock::now();
    rec.hartree = evolve_hartree(s.u0, s.profile, cfg.t_final, 0.5 * cfg.dt);
    rec.hartree_seconds = detail::seconds_since(t0);
    detail::emit_file(dir, "hartree.csv",
                      [&](std::ostream& os) { write_hartree_csv(rec.hartree, os, rec.hash); });

    // (2) pair flow
    t0 = std::chrono::steady_clock::now();
    EvolvePairOptions pair_opts;
    pair_opts.store_stride = s.stride;
    rec.pair = evolve_pair(initial_pair_state(cfg, s), rec.hartree, cfg.dt, pair_opts);
    rec.pair_seconds = detail::seconds_since(t0);
    detail::emit_file(dir, "pair.csv",
                      [&](std::ostream& os) { write_pair_csv(rec.pair, os, rec.hash); });

    // (3) truncated Fock flow of the same initial excitation
    t0 = std::chrono::steady_clock::now();
    FockVector phi0 = initial_excitation(cfg, s);
    FockEvolveOptions fock_opts;
    fock_opts.store_stride = s.stride;
    fock_opts.leakage_abort = cfg.tolerances.leakage_abort;
    fock_opts.memory_cap = cfg.memory_cap;
    rec.fock = evolve_fock(phi0, rec.hartree, cfg.dt, fock_opts);
    rec.fock_seconds = detail::seconds_since(t0);
    detail::emit_file(dir, "fock.csv",
                      [&](std::ostream& os) { write_fock_csv(rec.fock, os, rec.hash); });

    // (4) exact N-body flow from the embedded initial state; the excitation
    // vector is clamped to its first min(n_max, N) sectors first, since the
    // N-particle frame has no room for more
    t0 = std::chrono::steady_clock::now();
    const int n_embed = std::min(cfg.n_max, s.particles);
    FockBasisPtr embed_basis = build_basis(s.grid.modes, FockCap::up_to(n_embed), cfg.memory_cap);
    auto clamp = [&](const FockVector& phi) {
        return FockVector{embed_basis, phi.coeffs.head(embed_basis->dimension())};
    };
    FockVector phi0_clamped = clamp(phi0);
    rec.initial_embed_drop =
        std::max(0.0, phi0.coeffs.squaredNorm() - phi0_clamped.coeffs.squaredNorm());
    FockVector psi0 =
        embed(s.u0, phi0_clamped, s.particles, &rec.initial_condensate_leak, cfg.memory_cap);
    double psi0_norm = psi0.coeffs.norm();
    require(psi0_norm > 1e-6, "run_pipeline: embedded initial state has near-zero weight");
    psi0.coeffs /= psi0_norm;

    // The Krylov propagator is not a fixed-order stepper - each step is
    // resolved to krylov_tol with internal halving - so the exact flow only
    // needs to step on the sample grid, not on the integrator grid.
    ExactHamiltonian hn(s.particles, s.profile, s.grid, cfg.memory_cap);
    ExactEvolveOptions exact_opts;
    exact_opts.store_stride = 1;
    exact_opts.krylov_tol = cfg.tolerances.krylov_tol;
    rec.exact = evolve_exact(psi0, hn, cfg.t_final, static_cast<double>(s.stride) * cfg.dt,
                             exact_opts);
    rec.exact_seconds = detail::seconds_since(t0);
    detail::emit_file(dir, "exact.csv",
                      [&](std::ostream& os) { write_exact_csv(rec.exact, os, rec.hash); });

    for (double nrm : rec.exact.norms)
        rec.exact_norm_drift = std::max(rec.exact_norm_drift, std::abs(nrm - 1.0));
    for (double e : rec.exact.energies)
        rec.energy_drift = std::max(rec.energy_drift, std::abs(e - rec.exact.energies.front()) /
                                                          std::max(1.0, std::abs(rec.exact.energies.front())));

    // (5) per-sample comparison; on abort, flush the rows built so far
    t0 = std::chrono::steady_clock::now();
    try {
        for (std::size_t step : s.sample_steps) {
            double t = static_cast<double>(step) * cfg.dt;
            const GridFunction& ut = rec.hartree.states[rec.hartree.sample_index(t)];
            const FockVector& phit = detail::stored_state(rec.fock, step, "run_pipeline");
            const FockVector& psit =
                detail::stored_state(rec.exact, step / s.stride, "run_pipeline");

            FockVector phiN = clamp(phit);
            double drop = std::max(0.0, phit.coeffs.squaredNorm() - phiN.coeffs.squaredNorm());
            double err = approximation_error(psit, ut, phiN, s.particles, cfg.memory_cap);

            OneBodyOperator g1 = one_body_reduced(psit, s.grid);
            ApproximationReport rep = condensation_metrics(g1, ut, s.particles);
            rep.time = t;
            rep.norm_error = err;

            rec.sample_times.push_back(t);
            rec.reports.push_back(rep);
            rec.embed_drop.push_back(drop);
            rec.leakage.push_back(rec.fock.leakage[step]);
        }
    } catch (...) {
        if (!rec.reports.empty())
            detail::emit_file(dir, "reports.csv",
                              [&](std::ostream& os) { write_reports_csv(rec, os); });
        throw;
    }
    rec.compare_seconds = detail::seconds_since(t0);
    rec.wall_seconds = detail::seconds_since(wall0);

    detail::emit_file(dir, "reports.csv", [&](std::ostream& os) { write_reports_csv(rec, os); });
    detail::emit_file(dir, "summary.json",
                      [&](std::ostream& os) { os << summary_json(rec).dump(2) << '\n'; });
    detail::emit_file(dir, "timing.txt", [&](std::ostream& os) { write_timing(rec, os); });
    return rec;
}

// ---------------------------------------------------------------------------
// sweeps

inline std::string member_tag(int particles, double beta) {
    return "N" + std::to_string(particles) + "_beta" + fmt_double(beta);
}

// Cross product of the particle and beta lists, in config order, each member
// a self-contained single-run config with its own output directory.
inline std::vector<ExperimentConfig> resolve_members(const ExperimentConfig& cfg) {
    std::vector<ExperimentConfig> out;
    for (int n : cfg.particle_counts)
        for (double b : cfg.beta_values) {
            ExperimentConfig m = cfg;
            m.particle_counts = {n};
            m.beta_values = {b};
            m.profile.beta = b;
            if (!cfg.out_dir.empty()) m.out_dir = cfg.out_dir + "/" + member_tag(n, b);
            out.push_back(std::move(m));
        }
    return out;
}

struct SweepEntry {
    int particles = 0;
    double beta = 0.0;
    std::string hash;
    bool failed = false;
    std::string error;
    std::optional<RunRecord> record;
};

struct SweepResult {
    ExperimentConfig cfg;
    std::string hash;
    std::vector<SweepEntry> entries;
};

// CSV columns: particles,beta,t,norm_error_sq,excitation_number,leakage,status,config_hash
// (failed members keep their row with nan metrics; the message lives in summary.json)
inline void write_sweep_csv(const SweepResult& sw, std::ostream& os) {
    os << "particles,beta,t,norm_error_sq,excitation_number,leakage,status,config_hash\n";
    for (const SweepEntry& e : sw.entries) {
        os << e.particles << ',' << fmt_double(e.beta) << ',';
        if (e.failed) {
            double nan = std::nan("");
            os << fmt_double(nan) << ',' << fmt_double(nan) << ',' << fmt_double(nan) << ','
               << fmt_double(nan) << ",failed," << e.hash << '\n';
        } else {
            const ApproximationReport& last = e.record->reports.back();
            os << fmt_double(last.time) << ',' << fmt_double(last.norm_error * last.norm_error)
               << ',' << fmt_double(last.excitation_number) << ','
               << fmt_double(e.record->leakage.back()) << ",ok," << e.hash << '\n';
        }
    }
}

inline nlohmann::json sweep_summary_json(const SweepResult& sw) {
    using nlohmann::json;
    json j;
    j["config"] = config_json(sw.cfg);
    j["config_hash"] = sw.hash;
    j["members"] = json::array();
    for (const SweepEntry& e : sw.entries) {
        json m{{"particles", e.particles}, {"beta", e.beta}, {"config_hash", e.hash}};
        if (e.failed) {
            m["status"] = "failed";
            m["error"] = e.error;
        } else {
            m["status"] = "ok";
            const ApproximationReport& last = e.record->reports.back();
            m["final"] = json{{"time", last.time},
                              {"norm_error", last.norm_error},
                              {"excitation_number", last.excitation_number},
                              {"depletion", last.depletion},
                              {"trace_distance", last.trace_distance},
                              {"leakage", e.record->leakage.back()}};
        }
        j["members"].push_back(std::move(m));
    }
    return j;
}

// Runs every member concurrently (they share no mutable state and own their
// output directories); a member's failure is recorded and the sweep goes on.
inline SweepResult sweep(const ExperimentConfig& cfg) {
    std::vector<ExperimentConfig> members = resolve_members(cfg);
    require(!members.empty(), "sweep: config resolves to no members");

    SweepResult out;
    out.cfg = cfg;
    out.hash = config_hash(cfg);

    std::vector<std::future<RunRecord>> futures;
    futures.reserve(members.size());
    for (const ExperimentConfig& m : members)
        futures.push_back(std::async(std::launch::async, [m] { return run_pipeline(m); }));

    for (std::size_t i = 0; i < members.size(); ++i) {
        SweepEntry e;
        e.particles = members[i].particle_counts[0];
        e.beta = members[i].beta_values[0];
        e.hash = config_hash(members[i]);
        try {
            e.record = futures[i].get();
        } catch (const std::exception& ex) {
            e.failed = true;
            e.error = ex.what();
        }
        out.entries.push_back(std::move(e));
    }

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        detail::emit_file(cfg.out_dir, "sweep_summary.csv",
                          [&](std::ostream& os) { write_sweep_csv(out, os); });
    }
    return out;
}

// ---------------------------------------------------------------------------
// scaling fits

struct PowerlawFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // Euclidean norm of the log-space residual vector
};

// Least squares of log(value) against log(N).
inline PowerlawFit fit_powerlaw(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2)
        throw std::invalid_argument("fit_powerlaw: need at least 2 points, got " +
                                    std::to_string(points.size()));
    std::vector<double> x, y;
    x.reserve(points.size());
    y.reserve(points.size());
    for (const auto& [n, v] : points) {
        if (!(n > 0.0) || !std::isfinite(n))
            throw std::invalid_argument("fit_powerlaw: abscissae must be positive (got " +
                                        fmt_double(n) + ")");
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("fit_powerlaw: values must be positive (got " +
                                        fmt_double(v) + ")");
        x.push_back(std::log(n));
        y.push_back(std::log(v));
    }
    const auto m = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0)
        throw std::invalid_argument("fit_powerlaw: need at least two distinct abscissae");

    PowerlawFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double r = y[i] - (fit.slope * x[i] + fit.intercept);
        rss += r * r;
    }
    fit.residual = std::sqrt(rss);
    return fit;
}

// (N, norm_error^2) pairs from the successful members of an N sweep.
inline std::vector<std::pair<double, double>> sweep_fit_points(const SweepResult& sw) {
    std::vector<std::pair<double, double>> pts;
    for (const SweepEntry& e : sw.entries) {
        if (e.failed) continue;
        double err = e.record->reports.back().norm_error;
        if (err > 0.0) pts.emplace_back(static_cast<double>(e.particles), err * err);
    }
    return pts;
}

// Plot-ready two-column file; lines starting with '#' are comments.
inline void write_xy(const std::vector<std::pair<double, double>>& pts, std::ostream& os,
                     const char* comment = nullptr) {
    if (comment) os << "# " << comment << '\n';
    for (const auto& [a, b] : pts) os << fmt_double(a) << ' ' << fmt_double(b) << '\n';
}

inline std::vector<std::pair<double, double>> load_xy(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "fit: cannot open " + path);
    std::vector<std::pair<double, double>> pts;
    std::string line;
    while (std::getline(in, line)) {
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream row(line);
        double a = 0.0, b = 0.0;
        if (!(row >> a >> b)) throw std::runtime_error("fit: malformed line in " + path + ": " + line);
        pts.emplace_back(a, b);
    }
    return pts;
}

}  // namespace bogolab
