#pragma once

// Bogoliubov pair dynamics: assemble the one-body ingredients h(t), K2(t)
// from the condensate trajectory and integrate the density-matrix pair
//
//   i d/dt gamma = h gamma - gamma h + K2 conj(alpha) - alpha conj(K2)
//   i d/dt alpha = h alpha + alpha h^T + K2 + K2 gamma^T + gamma K2
//
// with classical RK4, rebuilding the ingredients at every stage time from the
// stored Hartree samples. gamma stays Hermitian PSD and alpha symmetric along
// the exact flow; the integrator preserves both structures to roundoff, and
// the recorded pre-correction defects make that observable.

#include <deque>
#include <memory>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

#include "bogolab/hartree.hpp"

namespace bogolab {

// The gamma equation above follows the Lemma-2 proof computation. The
// statement's variant (K2 alpha - conj(alpha) conj(K2)) does not compose under
// the alpha convention used here; the Fock-space oracle arbitrates. Flip this
// single switch if a different convention is ever needed.
inline constexpr bool pair_gamma_proof_form = true;

struct PairState {
    OneBodyOperator gamma;  // role psd
    Mat alpha;
};

inline void validate_pair_state(const PairState& s, bool check_psd = true) {
    const Mat& g = s.gamma.entries;
    require(g.rows() == g.cols() && s.alpha.rows() == s.alpha.cols() &&
                g.rows() == s.alpha.rows(),
            "pair state: dimension mismatch");
    double herm = (g - g.adjoint()).cwiseAbs().maxCoeff();
    require(herm <= 1e-10, "pair state: gamma hermiticity defect " + fmt_double(herm));
    double sym = (s.alpha - s.alpha.transpose()).cwiseAbs().maxCoeff();
    require(sym <= 1e-10, "pair state: alpha symmetry defect " + fmt_double(sym));
    if (check_psd) {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (g + g.adjoint()),
                                              Eigen::EigenvaluesOnly);
        double lo = es.eigenvalues().minCoeff();
        require(lo >= -1e-8, "pair state: gamma eigenvalue " + fmt_double(lo));
    }
}

inline PairState make_pair_state(const GridSpec& grid, Mat gamma, Mat alpha,
                                 bool check_psd = true) {
    PairState s{OneBodyOperator{grid, std::move(gamma), OpRole::psd}, std::move(alpha)};
    validate_pair_state(s, check_psd);
    return s;
}

inline PairState vacuum_pair_state(const GridSpec& grid) {
    return PairState{OneBodyOperator{grid, Mat::Zero(grid.modes, grid.modes), OpRole::psd},
                     Mat::Zero(grid.modes, grid.modes)};
}

struct BogoliubovIngredients {
    OneBodyOperator h;  // hermitian
    Mat K2;             // symmetric, doubly projected
    OneBodyOperator Q;  // projector
    double mu = 0.0;
};

namespace detail {

// Assembly with a caller-supplied Laplacian so per-stage rebuilds skip the
// dense DFT sandwich.
inline BogoliubovIngredients assemble_ingredients(const GridFunction& u, const GridFunction& wN,
                                                  const Mat& lap) {
    check_same_grid(u, wN, "build_ingredients");
    check_normalized(u, "build_ingredients");
    const GridSpec g = u.grid;
    const int m = g.modes;

    GridFunction conv = periodic_convolve(g, wN, density_of(u));
    Vec c = to_coefficients(u);
    double mu = 0.0;
    for (int j = 0; j < m; ++j) mu += std::norm(c[j]) * conv.values[j].real();
    mu *= 0.5;

    Mat q = Mat::Identity(m, m) - c * c.adjoint();

    // kernel matrices K~1_jk = c_j wN(j-k) conj(c_k), K~2_jk = c_j wN(j-k) c_k
    Mat k1t(m, m), k2t(m, m);
    for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
            double w = wN.values[(j - k + m) % m].real();
            k1t(j, k) = c[j] * w * std::conj(c[k]);
            k2t(j, k) = c[j] * w * c[k];
        }

    Mat h = lap;
    for (int j = 0; j < m; ++j) h(j, j) += conv.values[j].real() - mu;
    h += q * k1t * q;
    h = 0.5 * (h + h.adjoint()).eval();

    Mat k2 = q * k2t * q.transpose();
    k2 = 0.5 * (k2 + k2.transpose()).eval();

    return BogoliubovIngredients{OneBodyOperator{g, std::move(h), OpRole::hermitian},
                                 std::move(k2), OneBodyOperator{g, std::move(q), OpRole::projector},
                                 mu};
}

}  // namespace detail

inline BogoliubovIngredients build_ingredients(const GridFunction& u, const GridFunction& wN) {
    return detail::assemble_ingredients(u, wN, laplacian_operator(u.grid).entries);
}

struct PairDerivative {
    Mat dgamma;
    Mat dalpha;
};

inline PairDerivative pair_rhs(const PairState& s, const BogoliubovIngredients& ing) {
    const Mat& g = s.gamma.entries;
    const Mat& a = s.alpha;
    const Mat& h = ing.h.entries;
    const Mat& k2 = ing.K2;
    require(g.rows() == h.rows(), "pair_rhs: dimension mismatch");

    Mat comm = h * g - g * h;
    Mat pairing;
    if constexpr (pair_gamma_proof_form)
        pairing = k2 * a.conjugate() - a * k2.conjugate();
    else
        pairing = k2 * a - a.conjugate() * k2.conjugate();
    Mat dg = -iu * (comm + pairing);
    Mat da = -iu * (h * a + a * h.transpose() + k2 + k2 * g.transpose() + g * k2);
    return PairDerivative{std::move(dg), std::move(da)};
}

// X = gamma + gamma^2 - alpha alpha^dagger, Y = gamma alpha - alpha gamma^T;
// both vanish exactly on quasi-free states.
inline std::pair<double, double> quasifree_defect(const PairState& s) {
    const Mat& g = s.gamma.entries;
    const Mat& a = s.alpha;
    Mat x = g + g * g - a * a.adjoint();
    Mat y = g * a - a * g.transpose();
    return {hs_norm(x), hs_norm(y)};
}

struct PairObservables {
    double number = 0.0;
    double kinetic = 0.0;
    double hs_alpha = 0.0;
    double condensate_leak = 0.0;
};

inline PairObservables pair_observables(const PairState& s, const GridFunction& u) {
    const Mat& g = s.gamma.entries;
    Mat one_minus_lap = Mat::Identity(g.rows(), g.cols()) + laplacian_operator(u.grid).entries;
    Vec c = to_coefficients(u);
    PairObservables out;
    out.number = g.trace().real();
    out.kinetic = (one_minus_lap * g).trace().real();
    out.hs_alpha = hs_norm(s.alpha);
    out.condensate_leak = (g * c).norm() + (s.alpha * c.conjugate()).norm();
    return out;
}

struct EvolvePairOptions {
    std::size_t store_stride = 1;     // keep full states every this many steps
    bool check_psd_at_samples = true;
};

struct PairEvolution {
    std::vector<double> times;      // every integrator step
    std::vector<PairObservables> observables;
    std::vector<double> defect_x;   // quasi-free defects per step
    std::vector<double> defect_y;
    std::vector<double> herm_defect;  // pre-correction structure defects per step
    std::vector<double> sym_defect;
    std::vector<std::size_t> state_steps;  // step indices of the stored states
    std::vector<PairState> states;
    bool floored_lookup = false;

    const PairState& final_state() const { return states.back(); }
};

inline PairEvolution evolve_pair(const PairState& init, const HartreeTrajectory& traj, double dt,
                                 const EvolvePairOptions& opts = {}) {
    validate_pair_state(init);
    require(dt > 0.0, "evolve_pair: dt must be positive");
    require(opts.store_stride >= 1, "evolve_pair: store_stride must be at least 1");
    const GridSpec g = traj.grid;
    require(init.gamma.entries.rows() == g.modes, "evolve_pair: state/grid mismatch");

    double t_final = traj.times.back();
    auto nsteps = static_cast<long long>(std::llround(t_final / dt));
    require(std::abs(nsteps * dt - t_final) <= 1e-9 * (1.0 + t_final),
            "evolve_pair: dt must divide the trajectory span");

    const Mat lap = laplacian_operator(g).entries;
    PairEvolution ev;

    // tiny cache: stage times repeat (end of one step = start of the next)
    std::deque<std::pair<std::size_t, std::shared_ptr<const BogoliubovIngredients>>> cache;
    auto ingredients_at = [&](double t) {
        bool floored = false;
        std::size_t idx = traj.sample_index(t, true, &floored);
        if (floored) ev.floored_lookup = true;
        for (auto& e : cache)
            if (e.first == idx) return e.second;
        cache.emplace_back(idx, std::make_shared<BogoliubovIngredients>(
                                    detail::assemble_ingredients(traj.states[idx], traj.wN, lap)));
        if (cache.size() > 3) cache.pop_front();
        return cache.back().second;
    };

    Mat gamma = init.gamma.entries;
    Mat alpha = init.alpha;

    auto record = [&](long long step) {
        double t = step * dt;
        PairState snap{OneBodyOperator{g, gamma, OpRole::psd}, alpha};
        ev.times.push_back(t);
        std::size_t uidx = traj.sample_index(t, true);
        ev.observables.push_back(pair_observables(snap, traj.states[uidx]));
        auto [dx_, dy_] = quasifree_defect(snap);
        ev.defect_x.push_back(dx_);
        ev.defect_y.push_back(dy_);
        bool keep = (step % static_cast<long long>(opts.store_stride) == 0) || step == nsteps;
        if (keep) {
            if (opts.check_psd_at_samples) {
                try {
                    validate_pair_state(snap);
                } catch (const std::invalid_argument& e) {
                    throw std::runtime_error(std::string(e.what()) + " at t = " + fmt_double(t));
                }
            }
            ev.state_steps.push_back(static_cast<std::size_t>(step));
            ev.states.push_back(std::move(snap));
        }
    };

    ev.herm_defect.push_back(0.0);
    ev.sym_defect.push_back(0.0);
    record(0);

    for (long long i = 0; i < nsteps; ++i) {
        double t = i * dt;
        auto ing1 = ingredients_at(t);
        PairDerivative k1 = pair_rhs({OneBodyOperator{g, gamma}, alpha}, *ing1);
        auto ing2 = ingredients_at(t + 0.5 * dt);
        PairDerivative k2 = pair_rhs(
            {OneBodyOperator{g, gamma + 0.5 * dt * k1.dgamma}, alpha + 0.5 * dt * k1.dalpha}, *ing2);
        PairDerivative k3 = pair_rhs(
            {OneBodyOperator{g, gamma + 0.5 * dt * k2.dgamma}, alpha + 0.5 * dt * k2.dalpha}, *ing2);
        auto ing4 = ingredients_at(t + dt);
        PairDerivative k4 =
            pair_rhs({OneBodyOperator{g, gamma + dt * k3.dgamma}, alpha + dt * k3.dalpha}, *ing4);

        gamma += dt / 6.0 * (k1.dgamma + 2.0 * k2.dgamma + 2.0 * k3.dgamma + k4.dgamma);
        alpha += dt / 6.0 * (k1.dalpha + 2.0 * k2.dalpha + 2.0 * k3.dalpha + k4.dalpha);

        double hd = (gamma - gamma.adjoint()).cwiseAbs().maxCoeff();
        double sd = (alpha - alpha.transpose()).cwiseAbs().maxCoeff();
        if (hd > 1e-6 || sd > 1e-6)
            throw std::runtime_error("evolve_pair: structure defect " + fmt_double(std::max(hd, sd)) +
                                     " at t = " + fmt_double(t + dt) + " (integrator failure)");
        ev.herm_defect.push_back(hd);
        ev.sym_defect.push_back(sd);
        gamma = 0.5 * (gamma + gamma.adjoint()).eval();
        alpha = 0.5 * (alpha + alpha.transpose()).eval();
        record(i + 1);
    }
    return ev;
}

// ---------------------------------------------------------------------------
// exact quasi-free initial data: gamma = sinh^2(S), alpha = sinh(S)cosh(S)
// for a real symmetric S vanishing on the condensate direction

inline RMat build_squeeze_matrix(const GridFunction& u, double strength, unsigned seed) {
    require(strength >= 0.0, "squeeze strength must be nonnegative");
    const int m = u.grid.modes;
    Vec c = to_coefficients(u);

    // orthonormal real basis of span{Re c, Im c}
    RMat p = RMat::Identity(m, m);
    RVec q1 = c.real(), q2 = c.imag();
    if (q1.norm() > 1e-12) {
        q1.normalize();
        p -= q1 * q1.transpose();
    }
    q2 = p * q2;
    if (q2.norm() > 1e-12) {
        q2.normalize();
        p -= q2 * q2.transpose();
    }

    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    RMat raw(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) raw(i, j) = gauss(rng);
    RMat s = p * (0.5 * (raw + raw.transpose())) * p;
    if (strength == 0.0) return RMat::Zero(m, m);
    Eigen::SelfAdjointEigenSolver<RMat> es(s);
    double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (top > 0.0) s *= strength / top;
    return s;
}

inline PairState squeezed_pair_state(const GridSpec& grid, const RMat& s) {
    Eigen::SelfAdjointEigenSolver<RMat> es(s);
    RVec lam = es.eigenvalues();
    RVec sh = lam.array().sinh();
    RVec ch = lam.array().cosh();
    const RMat& v = es.eigenvectors();
    RMat gamma = v * sh.cwiseProduct(sh).asDiagonal() * v.transpose();
    RMat alpha = v * sh.cwiseProduct(ch).asDiagonal() * v.transpose();
    return make_pair_state(grid, gamma.cast<cxd>(), alpha.cast<cxd>());
}

// CSV columns: time,number,kinetic,hs_alpha,defect_X,defect_Y,condensate_leak,config_hash
inline void write_pair_csv(const PairEvolution& ev, std::ostream& os,
                           const std::string& config_hash, std::size_t stride = 1) {
    os << "time,number,kinetic,hs_alpha,defect_X,defect_Y,condensate_leak,config_hash\n";
    for (std::size_t i = 0; i < ev.times.size(); i += stride) {
        const PairObservables& o = ev.observables[i];
        os << fmt_double(ev.times[i]) << ',' << fmt_double(o.number) << ','
           << fmt_double(o.kinetic) << ',' << fmt_double(o.hs_alpha) << ','
           << fmt_double(ev.defect_x[i]) << ',' << fmt_double(ev.defect_y[i]) << ','
           << fmt_double(o.condensate_leak) << ',' << config_hash << '\n';
    }
}

}  // namespace bogolab
