#pragma once

// Condensate embedding and comparison metrics. An excitation vector
// Phi = (phi_0, phi_1, ...) with every phi_n orthogonal to the condensate u
// corresponds to the N-particle state
//
//   Psi = sum_n a*(u)^(N-n) / sqrt((N-n)!) phi_n,
//
// a unitary change of frame between the N-particle sector and the excitation
// space over the orthogonal complement of u. embed() reconstructs Psi from
// (u, Phi), decompose() inverts it sector by sector, and
// condensation_metrics() reduces a one-body density matrix to the depletion
// and trace-distance observables that quantify how well the condensate plus
// quadratic excitations describe the exact state.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <utility>
#include <vector>

#include "bogolab/fock.hpp"

namespace bogolab {

// One comparison row. condensation_metrics() fills everything except time,
// norm_error and excitation_number-from-the-state; the pipeline fills the
// rest before the row is written out.
struct ApproximationReport {
    double time = 0.0;
    double norm_error = 0.0;              // || Psi_exact - Psi_approx ||
    double depletion = 0.0;               // 1 - <u, g1 u> / N
    double kinetic_excitation = 0.0;      // Tr[(1-lap)^1/2 Q g1 Q (1-lap)^1/2]
    double trace_distance = 0.0;          // Tr| g1/N - |u><u| |
    double weighted_trace_distance = 0.0; // same, sandwiched by (1-lap)^1/2
    double excitation_number = 0.0;       // <Phi, (number operator) Phi>
};

// Projection losses above this are worth surfacing to whoever is not already
// collecting them through the out-parameter.
inline constexpr double embed_leak_warn_tol = 1e-6;

namespace detail {

inline double real_factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

// a(u) phi and a*(u) phi for u given by its coefficient vector c. Both map a
// pure total-n component to a pure component one sector away; raising past
// the workspace cap would silently drop amplitude, so callers budget the
// sector headroom before calling.
inline Vec lower_along(const FockBasis& b, const Vec& c, const Vec& phi) {
    return lowered_columns(b, phi) * c.conjugate();
}

inline Vec raise_along(const FockBasis& b, const Vec& c, const Vec& phi) {
    return raised_columns(b, phi) * c;
}

inline Vec unit_coefficients(const GridFunction& u, const char* who) {
    double nu = l2_norm(u);
    require(std::abs(nu - 1.0) <= 1e-6,
            std::string(who) + ": condensate must be L2-normalized");
    Vec c = to_coefficients(u);
    c /= c.norm();  // remove the residual so the ladder algebra below is exact
    return c;
}

// Square root of the H1 weight 1 - laplacian, by Hermitian eigendecomposition
// (exact at this scale, no iterative root needed).
inline Mat h1_weight_root(const GridSpec& g) {
    Mat w = laplacian_operator(g).entries;
    w += Mat::Identity(g.modes, g.modes);
    Eigen::SelfAdjointEigenSolver<Mat> es(w);
    require(es.info() == Eigen::Success, "h1_weight_root: eigendecomposition failed");
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().adjoint();
}

}  // namespace detail

// Orthogonal projection onto the states whose every particle avoids the
// condensate mode. In a frame where u is mode zero this is the normal-ordered
// vacuum projector sum_j (-1)^j / j! a*(u)^j a(u)^j; the series terminates at
// the top occupied sector. The squared norm removed lands in loss_sq.
inline FockVector project_out_condensate(const GridFunction& u, const FockVector& phi,
                                         double* loss_sq = nullptr) {
    require(phi.basis && phi.basis->cap().kind == FockCap::Kind::max_total,
            "project_out_condensate expects an excitation vector on a max_total basis");
    require(u.grid.modes == phi.basis->modes(),
            "project_out_condensate: condensate grid does not match the basis");
    const FockBasis& b = *phi.basis;
    Vec c = detail::unit_coefficients(u, "project_out_condensate");

    Vec out = phi.coeffs;
    Vec lowered = phi.coeffs;
    double fact = 1.0;
    for (int j = 1; j <= b.cap().value; ++j) {
        lowered = detail::lower_along(b, c, lowered);  // a(u)^j phi
        if (lowered.isZero(0.0)) break;
        fact *= j;
        Vec term = lowered;
        for (int i = 0; i < j; ++i) term = detail::raise_along(b, c, term);
        out += ((j % 2 == 0) ? 1.0 : -1.0) / fact * term;
    }
    if (loss_sq) *loss_sq = std::max(0.0, phi.coeffs.squaredNorm() - out.squaredNorm());
    return FockVector{phi.basis, std::move(out)};
}

// Reconstruct the N-particle state from the condensate and the excitation
// vector. Excitation components are projected off the condensate mode first
// (the pair and truncated-Fock flows drift out of the orthogonal complement
// a little); the squared norm removed is reported through condensate_leak,
// or printed once if nobody is collecting it and it is large.
inline FockVector embed(const GridFunction& u, const FockVector& phi, int particles,
                        double* condensate_leak = nullptr,
                        std::size_t memory_cap = fock_default_cap) {
    require(particles >= 1, "embed: particle number must be positive");
    require(phi.basis && phi.basis->cap().kind == FockCap::Kind::max_total,
            "embed expects an excitation vector on a max_total basis");
    require(phi.basis->cap().value <= particles,
            "embed: excitation truncation " + std::to_string(phi.basis->cap().value) +
                " exceeds the particle number " + std::to_string(particles));
    require(u.grid.modes == phi.basis->modes(),
            "embed: condensate grid does not match the basis");

    double loss = 0.0;
    FockVector clean = project_out_condensate(u, phi, &loss);
    if (condensate_leak)
        *condensate_leak = loss;
    else if (loss > embed_leak_warn_tol)
        std::cerr << "WARNING [embed]: removed condensate-direction weight " << fmt_double(loss)
                  << " from the excitation vector\n";

    const int m = phi.basis->modes();
    const int n_max = phi.basis->cap().value;
    FockBasisPtr work = build_basis(m, FockCap::up_to(particles), memory_cap);
    Vec c = detail::unit_coefficients(u, "embed");

    Vec padded = Vec::Zero(static_cast<Eigen::Index>(work->dimension()));
    padded.head(clean.coeffs.size()) = clean.coeffs;

    // Horner pass: after sector n the accumulator holds
    // sum_{k<=n} a*(u)^(n-k) phi_k / sqrt((N-k)!), a pure total-n component;
    // the trailing raises lift it the rest of the way to sector N.
    Vec acc = Vec::Zero(static_cast<Eigen::Index>(work->dimension()));
    for (int n = 0; n <= n_max; ++n) {
        if (n > 0) acc = detail::raise_along(*work, c, acc);
        std::size_t lo = n == 0 ? 0 : work->prefix_dimension(n - 1);
        std::size_t len = work->prefix_dimension(n) - lo;
        double w = 1.0 / std::sqrt(detail::real_factorial(particles - n));
        acc.segment(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(len)) +=
            w * padded.segment(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(len));
    }
    for (int n = n_max; n < particles; ++n) acc = detail::raise_along(*work, c, acc);

    FockBasisPtr sector = build_basis(m, FockCap::exactly(particles), memory_cap);
    // the fixed-total basis uses the same in-sector ordering as the workspace tail
    std::size_t lo = work->prefix_dimension(particles - 1);
    Vec out = acc.tail(static_cast<Eigen::Index>(work->dimension() - lo));
    return FockVector{std::move(sector), std::move(out)};
}

// Invert embed: split a normalized N-particle state into excitation
// components phi_n orthogonal to u. Peeling from the bottom sector up, the
// already-extracted components are raised back and subtracted, so what is
// left of a(u)^(N-n) Psi is exactly sqrt((N-n)!) phi_n.
inline FockVector decompose(const FockVector& psi, const GridFunction& u,
                            std::size_t memory_cap = fock_default_cap) {
    require(psi.basis && psi.basis->cap().kind == FockCap::Kind::fixed_total,
            "decompose expects an N-particle state on a fixed_total basis");
    require(u.grid.modes == psi.basis->modes(),
            "decompose: condensate grid does not match the basis");
    check_fock_normalized(psi, "decompose");
    const int n_total = psi.basis->cap().value;
    const int m = psi.basis->modes();
    FockBasisPtr work = build_basis(m, FockCap::up_to(n_total), memory_cap);
    const auto dim = static_cast<Eigen::Index>(work->dimension());
    Vec c = detail::unit_coefficients(u, "decompose");

    // a(u)^j psi for j = 0..N; each is a pure total-(N-j) component
    std::vector<Vec> low(static_cast<std::size_t>(n_total) + 1);
    low[0] = Vec::Zero(dim);
    low[0].tail(psi.coeffs.size()) = psi.coeffs;
    for (int j = 1; j <= n_total; ++j)
        low[static_cast<std::size_t>(j)] =
            detail::lower_along(*work, c, low[static_cast<std::size_t>(j - 1)]);

    Vec out = Vec::Zero(dim);
    std::vector<Vec> lifted(static_cast<std::size_t>(n_total) + 1);  // a*(u)^(s-k) phi_k
    for (int s = 0; s <= n_total; ++s) {
        Vec t = std::move(low[static_cast<std::size_t>(n_total - s)]);
        for (int k = 0; k < s; ++k) {
            auto& lk = lifted[static_cast<std::size_t>(k)];
            lk = detail::raise_along(*work, c, lk);
            t -= std::sqrt(detail::real_factorial(n_total - k)) /
                 detail::real_factorial(s - k) * lk;
        }
        t /= std::sqrt(detail::real_factorial(n_total - s));
        std::size_t lo = s == 0 ? 0 : work->prefix_dimension(s - 1);
        std::size_t len = work->prefix_dimension(s) - lo;
        out.segment(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(len)) =
            t.segment(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(len));
        lifted[static_cast<std::size_t>(s)] = std::move(t);
    }
    return FockVector{std::move(work), std::move(out)};
}

// || Psi_exact - embed(u, Phi, N) || on the N-particle sector.
inline double approximation_error(const FockVector& psi_exact, const GridFunction& u,
                                  const FockVector& phi, int particles,
                                  std::size_t memory_cap = fock_default_cap) {
    require(psi_exact.basis && psi_exact.basis->cap() == FockCap::exactly(particles),
            "approximation_error expects the exact state on the N-particle sector");
    require(phi.basis && psi_exact.basis->modes() == phi.basis->modes(),
            "approximation_error: mode counts disagree");
    FockVector approx = embed(u, phi, particles, nullptr, memory_cap);
    return (psi_exact.coeffs - approx.coeffs).norm();
}

// Reduce a one-body density matrix (trace N) against the condensate u.
// Fills depletion, kinetic_excitation, both trace distances, and the
// excitation number Tr(Q g1 Q); time and norm_error stay zero.
inline ApproximationReport condensation_metrics(const OneBodyOperator& gamma1,
                                                const GridFunction& u, int particles) {
    require(particles >= 1, "condensation_metrics: particle number must be positive");
    require(gamma1.grid == u.grid, "condensation_metrics: grid mismatch");
    const int m = u.grid.modes;
    const Mat& g1 = gamma1.entries;
    double tr = g1.trace().real();
    require(std::abs(tr - particles) <= 1e-6,
            "condensation_metrics: density matrix trace " + fmt_double(tr) +
                " does not match the particle number " + std::to_string(particles));
    Vec c = detail::unit_coefficients(u, "condensation_metrics");

    Mat p = c * c.adjoint();
    Mat q = Mat::Identity(m, m) - p;
    Mat qgq = q * g1 * q;
    Mat root = detail::h1_weight_root(u.grid);

    ApproximationReport r;
    r.depletion = std::clamp(1.0 - c.dot(g1 * c).real() / particles, 0.0, 1.0);
    r.excitation_number = std::max(0.0, qgq.trace().real());
    r.kinetic_excitation = std::max(0.0, (root * qgq * root).trace().real());

    Mat d = g1 / static_cast<double>(particles) - p;
    d = (0.5 * (d + d.adjoint())).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(d);
    require(es.info() == Eigen::Success, "condensation_metrics: eigendecomposition failed");
    r.trace_distance = es.eigenvalues().cwiseAbs().sum();

    Eigen::JacobiSVD<Mat> svd(root * d * root);
    r.weighted_trace_distance = svd.singularValues().sum();
    return r;
}

}  // namespace bogolab
