#pragma once

// Condensate dynamics: i u_t = (-Lap + wN * |u|^2 - mu) u on the periodic
// grid, integrated by Strang splitting (half kinetic step in Fourier space,
// full nonlinear phase step with frozen |u|^2, half kinetic step). The gauge
// phase mu = (1/2) <|u|^2, wN * |u|^2> is recomputed every step so the
// stored u(t) feeds the Bogoliubov ingredients directly.

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "bogolab/lattice.hpp"

namespace bogolab {

inline GridFunction density_of(const GridFunction& u) {
    return GridFunction{u.grid, u.values.cwiseAbs2().cast<cxd>()};
}

inline void check_same_grid(const GridFunction& a, const GridFunction& b, const char* who) {
    require(a.grid == b.grid, std::string(who) + ": grid mismatch");
}

inline void check_normalized(const GridFunction& u, const char* who) {
    double n = l2_norm(u);
    require(std::abs(n - 1.0) <= 1e-8,
            std::string(who) + ": u not L2-normalized, |u| = " + fmt_double(n));
}

// mu = (1/2) * dx^2 * sum_{j,k} |u_j|^2 wN((j-k) mod M) |u_k|^2
inline double mu_phase(const GridFunction& u, const GridFunction& wN) {
    check_same_grid(u, wN, "mu_phase");
    check_normalized(u, "mu_phase");
    GridFunction conv = periodic_convolve(u.grid, wN, density_of(u));
    double acc = 0.0;
    for (int j = 0; j < u.grid.modes; ++j)
        acc += std::norm(u.values[j]) * conv.values[j].real();
    return 0.5 * u.grid.dx() * acc;
}

// -Lap + (wN * |u|^2) - mu as a dense Hermitian operator.
inline OneBodyOperator hartree_generator(const GridFunction& u, const GridFunction& wN) {
    check_same_grid(u, wN, "hartree_generator");
    check_normalized(u, "hartree_generator");
    GridFunction conv = periodic_convolve(u.grid, wN, density_of(u));
    double mu = mu_phase(u, wN);
    Mat h = laplacian_operator(u.grid).entries;
    for (int j = 0; j < u.grid.modes; ++j) h(j, j) += conv.values[j].real() - mu;
    return OneBodyOperator{u.grid, std::move(h), OpRole::hermitian};
}

// Conserved diagnostic <u, -Lap u> + mu (the mu term is the interaction energy).
inline double hartree_energy(const GridFunction& u, const GridFunction& wN) {
    check_same_grid(u, wN, "hartree_energy");
    check_normalized(u, "hartree_energy");
    Vec c = to_coefficients(u);
    Mat lap = laplacian_operator(u.grid).entries;
    double kin = (c.adjoint() * (lap * c))(0).real();
    return kin + mu_phase(u, wN);
}

struct HartreeTrajectory {
    GridSpec grid;
    InteractionProfile profile;
    GridFunction wN;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<GridFunction> states;
    std::vector<double> mu_values;      // mu(u(t_i)) at the stored times
    std::vector<double> mu_step_values; // mu actually used inside step i (frozen-density stage)
    bool potential_under_resolved = false;

    std::size_t size() const { return times.size(); }

    // Index of the stored sample at time t; requires t to sit on the stored
    // time grid up to rounding noise unless allow_floor is set, in which case
    // the nearest sample at or before t is returned and *floored flags it.
    std::size_t sample_index(double t, bool allow_floor = false, bool* floored = nullptr) const {
        double s = t / dt;
        auto idx = static_cast<long long>(std::llround(s));
        if (std::abs(s - static_cast<double>(idx)) <= 1e-6) {
            require(idx >= 0 && idx < static_cast<long long>(times.size()),
                    "trajectory sample out of range at t = " + fmt_double(t));
            return static_cast<std::size_t>(idx);
        }
        require(allow_floor, "time " + fmt_double(t) + " is not on the stored Hartree grid");
        if (floored) *floored = true;
        auto lo = static_cast<long long>(std::floor(s + 1e-12));
        require(lo >= 0 && lo < static_cast<long long>(times.size()),
                "trajectory sample out of range at t = " + fmt_double(t));
        return static_cast<std::size_t>(lo);
    }
};

struct HartreeOptions {
    bool include_mu = true;  // gauge-equivalence runs switch this off
};

inline HartreeTrajectory evolve_hartree(const GridFunction& u0, const InteractionProfile& profile,
                                        double t_final, double dt,
                                        const HartreeOptions& opts = {}) {
    require(dt > 0.0 && std::isfinite(dt), "evolve_hartree: dt must be positive");
    require(t_final >= 0.0, "evolve_hartree: t_final must be nonnegative");
    check_normalized(u0, "evolve_hartree");
    auto nsteps = static_cast<long long>(std::llround(t_final / dt));
    require(std::abs(nsteps * dt - t_final) <= 1e-9 * (1.0 + t_final),
            "evolve_hartree: t_final must be an integer multiple of dt");

    const GridSpec g = u0.grid;
    ScaledPotential sp = build_scaled_potential(profile, g);

    // half kinetic step exp(+i Lap dt/2) as a dense matrix, built once
    Mat dft = dft_matrix(g);
    Vec phases(g.modes);
    for (int m = 0; m < g.modes; ++m) {
        double k = g.wavenumber(m);
        phases[m] = std::exp(-iu * (k * k) * (dt / 2.0));
    }
    Mat half_kinetic = dft.adjoint() * phases.asDiagonal() * dft;

    HartreeTrajectory traj;
    traj.grid = g;
    traj.profile = profile;
    traj.wN = sp.wN;
    traj.dt = dt;
    traj.potential_under_resolved = sp.under_resolved;
    traj.times.reserve(nsteps + 1);
    traj.states.reserve(nsteps + 1);

    Vec v = u0.values;
    const double dx = g.dx();
    auto record = [&](long long i) {
        GridFunction u{g, v};
        traj.times.push_back(i * dt);
        traj.states.push_back(u);
        traj.mu_values.push_back(mu_phase(u, sp.wN));
    };
    record(0);

    for (long long i = 0; i < nsteps; ++i) {
        v = half_kinetic * v;
        GridFunction conv = periodic_convolve(g, sp.wN, GridFunction{g, v.cwiseAbs2().cast<cxd>()});
        double mu = 0.0;
        for (int j = 0; j < g.modes; ++j) mu += std::norm(v[j]) * conv.values[j].real();
        mu *= 0.5 * dx;
        traj.mu_step_values.push_back(mu);
        double gauge = opts.include_mu ? mu : 0.0;
        for (int j = 0; j < g.modes; ++j)
            v[j] *= std::exp(-iu * (conv.values[j].real() - gauge) * dt);
        v = half_kinetic * v;

        double norm = std::sqrt(dx * v.squaredNorm());
        if (std::abs(norm - 1.0) > 1e-6)
            throw std::runtime_error("evolve_hartree: norm drift " + fmt_double(norm - 1.0) +
                                     " at t = " + fmt_double((i + 1) * dt));
        record(i + 1);
    }
    return traj;
}

// CSV columns: time,norm,energy,mu,max_abs_u,config_hash
inline void write_hartree_csv(const HartreeTrajectory& traj, std::ostream& os,
                              const std::string& config_hash, std::size_t stride = 1) {
    os << "time,norm,energy,mu,max_abs_u,config_hash\n";
    for (std::size_t i = 0; i < traj.size(); i += stride) {
        const GridFunction& u = traj.states[i];
        os << fmt_double(traj.times[i]) << ',' << fmt_double(l2_norm(u)) << ','
           << fmt_double(hartree_energy(u, traj.wN)) << ',' << fmt_double(traj.mu_values[i]) << ','
           << fmt_double(u.values.cwiseAbs().maxCoeff()) << ',' << config_hash << '\n';
    }
}

}  // namespace bogolab
