#pragma once

// 1D periodic grid, one-body operators, interaction profiles and the basic
// norms everything else is built on.
//
// Conventions (used consistently across all modules):
//   * grid nodes x_j = j*dx on [0, L), dx = L/M
//   * a GridFunction stores point values v_j = f(x_j)
//   * operators act on coefficient vectors c_j = sqrt(dx) * v_j, so that the
//     Euclidean norm of c equals the L2 norm of f and matrix products compose
//     like operator products ("orthonormal discrete-mode convention")
//   * integral kernels f(x,y) become matrices F_jk = dx * f(x_j, x_k);
//     multiplication operators become plain diagonals (no dx)

#include <cmath>
#include <string>
#include <vector>

#include "bogolab/common.hpp"

namespace bogolab {

struct GridSpec {
    double length = 0.0;
    int modes = 0;

    double dx() const { return length / modes; }
    double node(int j) const { return j * dx(); }

    RVec nodes() const {
        RVec x(modes);
        for (int j = 0; j < modes; ++j) x[j] = node(j);
        return x;
    }

    // Discrete wavenumbers in DFT index order: m -> 2*pi/L * m for m < M/2,
    // wrapping to the negative branch afterwards. The set is
    // (2*pi/L) * {-floor(M/2), ..., ceil(M/2)-1}.
    double wavenumber(int m) const {
        int half = modes / 2 + modes % 2;  // ceil(M/2)
        int s = (m < half) ? m : m - modes;
        return 2.0 * pi / length * s;
    }

    bool operator==(const GridSpec& o) const {
        return length == o.length && modes == o.modes;
    }
    bool operator!=(const GridSpec& o) const { return !(*this == o); }
};

inline GridSpec build_grid(double length, int modes) {
    require(length > 0.0 && std::isfinite(length), "build_grid: length must be positive");
    require(modes >= 2, "build_grid: need at least 2 grid points");
    return GridSpec{length, modes};
}

struct GridFunction {
    GridSpec grid;
    Vec values;
};

inline GridFunction make_grid_function(const GridSpec& g, Vec v) {
    require(static_cast<int>(v.size()) == g.modes, "grid function length mismatch");
    return GridFunction{g, std::move(v)};
}

inline double l2_norm(const GridFunction& f) {
    return std::sqrt(f.grid.dx() * f.values.squaredNorm());
}

// Coefficient vector in the orthonormal-mode convention.
inline Vec to_coefficients(const GridFunction& f) {
    return std::sqrt(f.grid.dx()) * f.values;
}

inline GridFunction from_coefficients(const GridSpec& g, const Vec& c) {
    require(static_cast<int>(c.size()) == g.modes, "coefficient length mismatch");
    return GridFunction{g, c / std::sqrt(g.dx())};
}

enum class OpRole { generic, hermitian, projector, psd };

struct OneBodyOperator {
    GridSpec grid;
    Mat entries;
    OpRole role = OpRole::generic;
};

// Role-conditional structure check; throws when the claimed role does not hold.
inline void validate_role(const OneBodyOperator& op) {
    require(all_finite(op.entries), "operator has non-finite entries");
    if (op.role == OpRole::generic) return;
    const Mat& a = op.entries;
    const double herm = (a - a.adjoint()).cwiseAbs().maxCoeff();
    switch (op.role) {
        case OpRole::hermitian:
            require(herm <= 1e-12, "operator tagged hermitian but defect " + fmt_double(herm));
            break;
        case OpRole::projector: {
            double idem = (a * a - a).norm();
            require(herm <= 1e-10, "projector not hermitian, defect " + fmt_double(herm));
            require(idem <= 1e-10, "projector not idempotent, defect " + fmt_double(idem));
            break;
        }
        case OpRole::psd: {
            require(herm <= 1e-12, "operator tagged psd but not hermitian: " + fmt_double(herm));
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.adjoint()));
            require(es.eigenvalues().minCoeff() >= -1e-10,
                    "operator tagged psd has eigenvalue " +
                        fmt_double(es.eigenvalues().minCoeff()));
            break;
        }
        case OpRole::generic:
            break;
    }
}

// Unitary DFT matrix; row m is the normalized plane wave exp(-i k_m x_j)/sqrt(M).
inline Mat dft_matrix(const GridSpec& g) {
    Mat u(g.modes, g.modes);
    const double s = 1.0 / std::sqrt(static_cast<double>(g.modes));
    for (int m = 0; m < g.modes; ++m) {
        double k = g.wavenumber(m);
        for (int j = 0; j < g.modes; ++j)
            u(m, j) = s * std::exp(-iu * k * g.node(j));
    }
    return u;
}

// Pseudo-spectral -d^2/dx^2 with periodic boundary: diagonal k^2 in the
// discrete Fourier basis, assembled as a dense Hermitian matrix.
inline OneBodyOperator laplacian_operator(const GridSpec& g) {
    Mat u = dft_matrix(g);
    RVec k2(g.modes);
    for (int m = 0; m < g.modes; ++m) {
        double k = g.wavenumber(m);
        k2[m] = k * k;
    }
    Mat lap = u.adjoint() * k2.asDiagonal() * u;
    lap = 0.5 * (lap + lap.adjoint()).eval();  // scrub roundoff asymmetry
    return OneBodyOperator{g, std::move(lap), OpRole::hermitian};
}

// ---------------------------------------------------------------------------
// interaction profiles w and their N-scaled samples w_N(x) = N^a w(N^b x)

struct InteractionProfile {
    enum class Kind { gaussian, box, cosine_bump, tabulated };

    Kind kind = Kind::gaussian;
    double amplitude = 1.0;
    double width = 1.0;  // gaussian: sigma; box: full width; cosine bump: half-support
    std::vector<double> table;  // tabulated kind: values at 0, h, 2h, ... (even extension)
    double table_spacing = 0.0;
    double beta = 0.0;
    int particles = 2;
    // Scaling exponents in N^a w(N^b x); NaN means "use beta" (mass-preserving 1D default).
    double exponent_a = std::nan("");
    double exponent_b = std::nan("");
    bool renormalize = false;

    double scale_a() const { return std::isnan(exponent_a) ? beta : exponent_a; }
    double scale_b() const { return std::isnan(exponent_b) ? beta : exponent_b; }

    double evaluate(double x) const {
        double ax = std::abs(x);
        switch (kind) {
            case Kind::gaussian:
                return amplitude * std::exp(-x * x / (2.0 * width * width));
            case Kind::box:
                return ax <= 0.5 * width ? amplitude : 0.0;
            case Kind::cosine_bump:
                return ax <= width ? 0.5 * amplitude * (1.0 + std::cos(pi * x / width)) : 0.0;
            case Kind::tabulated: {
                double s = ax / table_spacing;
                auto i = static_cast<std::size_t>(s);
                if (i + 1 >= table.size()) return 0.0;
                double frac = s - static_cast<double>(i);
                return table[i] * (1.0 - frac) + table[i + 1] * frac;
            }
        }
        return 0.0;
    }

    // Radius beyond which the profile is (numerically) negligible.
    double support_radius() const {
        switch (kind) {
            case Kind::gaussian: return 4.0 * width;
            case Kind::box: return 0.5 * width;
            case Kind::cosine_bump: return width;
            case Kind::tabulated: return table_spacing * static_cast<double>(table.size() - 1);
        }
        return 0.0;
    }
};

inline void validate_profile(const InteractionProfile& p) {
    require(p.amplitude >= 0.0 && std::isfinite(p.amplitude),
            "interaction amplitude must be nonnegative");
    require(p.beta >= 0.0 && p.beta < 0.5,
            "scaling exponent beta must lie in [0, 1/2), got " + fmt_double(p.beta));
    require(p.particles >= 2, "particle number must be at least 2");
    if (p.kind == InteractionProfile::Kind::tabulated) {
        require(p.table_spacing > 0.0, "tabulated profile needs positive spacing");
        require(p.table.size() >= 2, "tabulated profile needs at least 2 samples");
        for (double v : p.table)
            require(v >= 0.0 && std::isfinite(v), "tabulated profile must be nonnegative");
    } else {
        require(p.width > 0.0 && std::isfinite(p.width), "profile width must be positive");
    }
}

// Signed distance on the torus, wrapped into [-L/2, L/2).
inline double minimal_image(double d, double length) {
    return d - length * std::round(d / length);
}

struct ScaledPotential {
    GridFunction wN;
    double mass = 0.0;            // dx * sum of samples (after renormalization, if any)
    double support_points = 0.0;  // grid points across the scaled support
    bool under_resolved = false;  // support covered by < 4 points
    bool wraps_domain = false;    // scaled support exceeds half the torus
};

// Sample w_N(x) = N^a w(N^b x) on the grid with minimal-image wrapping.
inline ScaledPotential build_scaled_potential(const InteractionProfile& p, const GridSpec& g) {
    validate_profile(p);
    const double na = std::pow(static_cast<double>(p.particles), p.scale_a());
    const double nb = std::pow(static_cast<double>(p.particles), p.scale_b());
    Vec v(g.modes);
    for (int j = 0; j < g.modes; ++j) {
        double x = minimal_image(g.node(j), g.length);
        double w = na * p.evaluate(nb * x);
        if (w < 0.0 || !std::isfinite(w))
            throw std::runtime_error("scaled_potential: invalid sample " + fmt_double(w));
        v[j] = w;
    }
    ScaledPotential out;
    double radius = p.support_radius() / nb;
    out.support_points = 2.0 * radius / g.dx();
    out.under_resolved = out.support_points < 4.0;
    out.wraps_domain = radius > 0.5 * g.length;
    out.mass = g.dx() * v.real().sum();
    if (p.renormalize) {
        // Match the quadrature mass of the unscaled profile on this grid.
        double target = 0.0;
        for (int j = 0; j < g.modes; ++j)
            target += p.evaluate(minimal_image(g.node(j), g.length));
        target *= g.dx();
        require(out.mass > 0.0, "renormalize flag needs a profile with positive mass");
        v *= target / out.mass;
        out.mass = target;
    }
    out.wN = GridFunction{g, std::move(v)};
    return out;
}

inline GridFunction scaled_potential(const InteractionProfile& p, const GridSpec& g) {
    return build_scaled_potential(p, g).wN;
}

// Circular convolution h_j = dx * sum_k f_{(j-k) mod M} g_k.
inline GridFunction periodic_convolve(const GridSpec& g, const GridFunction& f,
                                      const GridFunction& gfun) {
    require(f.grid == g && gfun.grid == g, "periodic_convolve: grid mismatch");
    const int m = g.modes;
    Vec h = Vec::Zero(m);
    for (int j = 0; j < m; ++j) {
        cxd acc = 0.0;
        for (int k = 0; k < m; ++k) {
            int d = j - k;
            if (d < 0) d += m;
            acc += f.values[d] * gfun.values[k];
        }
        h[j] = acc;
    }
    h *= g.dx();
    return GridFunction{g, std::move(h)};
}

// Q = 1 - |u><u| on coefficient vectors; u must be L2-normalized.
inline OneBodyOperator orthogonal_projector(const GridFunction& u) {
    Vec c = to_coefficients(u);
    double n = c.norm();
    require(std::abs(n - 1.0) <= 1e-8,
            "orthogonal_projector: u not normalized, |u| = " + fmt_double(n));
    Mat q = Mat::Identity(u.grid.modes, u.grid.modes) - c * c.adjoint();
    return OneBodyOperator{u.grid, std::move(q), OpRole::projector};
}

inline double hs_norm(const Mat& a) {
    require(all_finite(a), "hs_norm: non-finite entries");
    return a.norm();
}

inline double trace_norm(const Mat& a) {
    require(all_finite(a), "trace_norm: non-finite entries");
    Eigen::JacobiSVD<Mat> svd(a);
    return svd.singularValues().sum();
}

inline double hs_norm(const OneBodyOperator& op) { return hs_norm(op.entries); }
inline double trace_norm(const OneBodyOperator& op) { return trace_norm(op.entries); }

}  // namespace bogolab
