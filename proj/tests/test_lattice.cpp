#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "bogolab/lattice.hpp"

using namespace bogolab;
using Catch::Approx;

namespace {

Vec random_complex_vector(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(n);
    for (int j = 0; j < n; ++j) v[j] = cxd(gauss(rng), gauss(rng));
    return v;
}

}  // namespace

TEST_CASE("build_grid lays out nodes deterministically", "[lattice]") {
    GridSpec g = build_grid(2.0 * pi, 4);
    CHECK(g.dx() == Approx(pi / 2.0));
    RVec x = g.nodes();
    CHECK(x[0] == Approx(0.0).margin(1e-15));
    CHECK(x[1] == Approx(pi / 2.0));
    CHECK(x[2] == Approx(pi));
    CHECK(x[3] == Approx(3.0 * pi / 2.0));

    GridSpec g2 = build_grid(1.0, 2);
    CHECK(g2.dx() == Approx(0.5));
    CHECK(g2.node(1) == Approx(0.5));

    GridSpec g3 = build_grid(2.0 * pi, 64);
    CHECK(g3.dx() * 64 == Approx(2.0 * pi).epsilon(1e-15));

    CHECK_THROWS_AS(build_grid(-1.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(0.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(1.0, 1), std::invalid_argument);
}

TEST_CASE("laplacian annihilates constants and reproduces plane-wave eigenvalues", "[lattice]") {
    GridSpec g = build_grid(2.0 * pi, 16);
    OneBodyOperator lap = laplacian_operator(g);
    validate_role(lap);

    Vec c = Vec::Constant(g.modes, cxd(1.0, 0.0));
    CHECK((lap.entries * c).norm() <= 1e-12 * c.norm());

    // e^{ix} on L = 2*pi has eigenvalue 1, e^{3ix} has eigenvalue 9.
    for (int q : {1, 3}) {
        Vec pw(g.modes);
        for (int j = 0; j < g.modes; ++j) pw[j] = std::exp(iu * static_cast<double>(q) * g.node(j));
        pw /= pw.norm();
        Vec lpw = lap.entries * pw;
        double rayleigh = (pw.adjoint() * lpw)(0).real();
        CHECK(rayleigh == Approx(static_cast<double>(q * q)).margin(1e-10));
        CHECK((lpw - static_cast<double>(q * q) * pw).norm() <= 1e-10);
    }
}

TEST_CASE("laplacian commutes with the grid translation", "[lattice]") {
    GridSpec g = build_grid(5.0, 12);
    OneBodyOperator lap = laplacian_operator(g);
    Mat t = Mat::Zero(g.modes, g.modes);
    for (int k = 0; k < g.modes; ++k) t((k + 1) % g.modes, k) = 1.0;
    CHECK(hs_norm(Mat(lap.entries * t - t * lap.entries)) <= 1e-10);
}

TEST_CASE("scaled_potential at beta = 0 reproduces the base profile", "[lattice]") {
    GridSpec g = build_grid(8.0, 32);
    InteractionProfile p;
    p.kind = InteractionProfile::Kind::gaussian;
    p.width = 0.7;
    p.amplitude = 1.3;
    p.beta = 0.0;
    p.particles = 17;
    GridFunction w = scaled_potential(p, g);
    for (int j = 0; j < g.modes; ++j) {
        double x = minimal_image(g.node(j), g.length);
        CHECK(w.values[j].real() == Approx(p.evaluate(x)).margin(1e-15));
        CHECK(w.values[j].imag() == 0.0);
    }
}

TEST_CASE("scaled gaussian peak and mass follow the scaling law", "[lattice]") {
    GridSpec g = build_grid(10.0, 128);
    InteractionProfile p;
    p.kind = InteractionProfile::Kind::gaussian;
    p.width = 0.5;
    p.amplitude = 1.0;
    p.beta = 0.3;
    p.particles = 64;
    ScaledPotential sp = build_scaled_potential(p, g);
    CHECK_FALSE(sp.under_resolved);
    // peak value N^0.3 * w(0) at the x = 0 node
    CHECK(sp.wN.values[0].real() == Approx(std::pow(64.0, 0.3)).epsilon(1e-12));
    // mass-preserving scaling: quadrature mass close to the exact integral of w
    double exact_mass = p.amplitude * p.width * std::sqrt(2.0 * pi);
    CHECK(sp.mass == Approx(exact_mass).epsilon(0.02));
}

TEST_CASE("scaled box narrows and grows per the substitution rule", "[lattice]") {
    GridSpec g = build_grid(4.0, 64);
    InteractionProfile p;
    p.kind = InteractionProfile::Kind::box;
    p.width = 0.5;
    p.amplitude = 1.0;
    p.beta = 0.25;
    p.particles = 16;  // N^beta = 2
    GridFunction w = scaled_potential(p, g);
    for (int j = 0; j < g.modes; ++j) {
        double x = minimal_image(g.node(j), g.length);
        double expected = std::abs(2.0 * x) <= 0.25 ? 2.0 : 0.0;  // width 0.25, height 2
        CHECK(w.values[j].real() == Approx(expected).margin(1e-15));
    }
}

TEST_CASE("scaled_potential resolution warning and renormalization", "[lattice]") {
    GridSpec g = build_grid(10.0, 32);
    InteractionProfile p;
    p.kind = InteractionProfile::Kind::gaussian;
    p.width = 0.5;
    p.beta = 0.45;
    p.particles = 4096;
    ScaledPotential sp = build_scaled_potential(p, g);
    CHECK(sp.under_resolved);  // support shrinks by 4096^0.45, far below 4 dx

    p.beta = 0.2;
    p.particles = 8;
    p.renormalize = true;
    ScaledPotential rn = build_scaled_potential(p, g);
    double target = 0.0;
    for (int j = 0; j < g.modes; ++j)
        target += p.evaluate(minimal_image(g.node(j), g.length));
    target *= g.dx();
    CHECK(rn.mass == Approx(target).epsilon(1e-14));
    CHECK(g.dx() * rn.wN.values.real().sum() == Approx(target).epsilon(1e-14));
}

TEST_CASE("profile validation rejects bad parameters", "[lattice]") {
    InteractionProfile p;
    p.beta = 0.7;
    CHECK_THROWS_AS(validate_profile(p), std::invalid_argument);
    p.beta = 0.0;
    p.amplitude = -1.0;
    CHECK_THROWS_AS(validate_profile(p), std::invalid_argument);
    p.amplitude = 1.0;
    p.kind = InteractionProfile::Kind::tabulated;
    p.table = {1.0, -0.5, 0.0};
    p.table_spacing = 0.5;
    CHECK_THROWS_AS(validate_profile(p), std::invalid_argument);
    p.table = {1.0, 0.5, 0.0};
    CHECK_NOTHROW(validate_profile(p));
}

TEST_CASE("periodic_convolve identities", "[lattice]") {
    GridSpec g = build_grid(6.0, 24);
    InteractionProfile p;
    p.kind = InteractionProfile::Kind::gaussian;
    p.width = 0.4;
    GridFunction f = scaled_potential(p, g);

    SECTION("delta column translates f") {
        int k0 = 7;
        Vec d = Vec::Zero(g.modes);
        d[k0] = 1.0 / g.dx();
        GridFunction h = periodic_convolve(g, f, GridFunction{g, d});
        for (int j = 0; j < g.modes; ++j) {
            int src = (j - k0 + g.modes) % g.modes;
            CHECK(std::abs(h.values[j] - f.values[src]) <= 1e-13);
        }
    }

    SECTION("constant input smears to mass * constant") {
        double s = g.dx() * f.values.real().sum();
        cxd c0(0.8, -0.3);
        GridFunction h = periodic_convolve(g, f, GridFunction{g, Vec::Constant(g.modes, c0)});
        for (int j = 0; j < g.modes; ++j)
            CHECK(std::abs(h.values[j] - s * c0) <= 1e-13);
    }

    SECTION("commutes in its arguments") {
        GridFunction r{g, random_complex_vector(g.modes, 11u)};
        GridFunction h1 = periodic_convolve(g, f, r);
        GridFunction h2 = periodic_convolve(g, r, f);
        CHECK((h1.values - h2.values).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("gaussian convolved with gaussian has summed variances", "[lattice]") {
    GridSpec g = build_grid(16.0, 256);
    InteractionProfile pf, pg;
    pf.kind = InteractionProfile::Kind::gaussian;
    pf.width = 0.6;
    pg.kind = InteractionProfile::Kind::gaussian;
    pg.width = 0.8;
    GridFunction f = scaled_potential(pf, g);
    GridFunction h = periodic_convolve(g, f, scaled_potential(pg, g));
    double s2 = pf.width * pf.width + pg.width * pg.width;
    double amp = std::sqrt(2.0 * pi) * pf.width * pg.width / std::sqrt(s2);
    for (int j = 0; j < g.modes; ++j) {
        double x = minimal_image(g.node(j), g.length);
        double expected = amp * std::exp(-x * x / (2.0 * s2));
        CHECK(std::abs(h.values[j] - expected) <= 1e-6);
    }
}

TEST_CASE("periodic_convolve agrees with the discrete Fourier product", "[lattice]") {
    GridSpec g = build_grid(7.0, 20);
    GridFunction f{g, random_complex_vector(g.modes, 3u)};
    GridFunction r{g, random_complex_vector(g.modes, 4u)};
    GridFunction h = periodic_convolve(g, f, r);
    Mat u = dft_matrix(g);
    Vec lhs = u * h.values;
    Vec rhs = g.dx() * std::sqrt(static_cast<double>(g.modes)) *
              (u * f.values).cwiseProduct(u * r.values);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("orthogonal_projector removes the condensate direction", "[lattice]") {
    GridSpec g = build_grid(4.0, 8);

    SECTION("first basis mode gives a coordinate projector") {
        Vec v = Vec::Zero(g.modes);
        v[0] = 1.0 / std::sqrt(g.dx());
        OneBodyOperator q = orthogonal_projector(GridFunction{g, v});
        Mat expected = Mat::Identity(g.modes, g.modes);
        expected(0, 0) = 0.0;
        CHECK((q.entries - expected).cwiseAbs().maxCoeff() <= 1e-14);
    }

    SECTION("kills u, fixes vectors orthogonal to u") {
        Vec raw = random_complex_vector(g.modes, 5u);
        raw /= std::sqrt(g.dx()) * raw.norm();
        GridFunction u{g, raw};
        OneBodyOperator q = orthogonal_projector(u);
        validate_role(q);
        Vec c = to_coefficients(u);
        CHECK((q.entries * c).norm() <= 1e-10);
        // Gram-Schmidt a second vector against u
        Vec w = random_complex_vector(g.modes, 6u);
        w -= c.dot(w) * c / c.squaredNorm();
        w /= w.norm();
        CHECK((q.entries * w - w).norm() <= 1e-10);
        CHECK(hs_norm(Mat(q.entries * q.entries - q.entries)) <= 1e-10);
    }

    SECTION("rejects non-normalized input") {
        Vec v = Vec::Constant(g.modes, cxd(1.0, 0.0));
        CHECK_THROWS_AS(orthogonal_projector(GridFunction{g, v}), std::invalid_argument);
    }
}

TEST_CASE("trace and Hilbert-Schmidt norms", "[lattice]") {
    Mat z = Mat::Zero(3, 3);
    CHECK(trace_norm(z) == 0.0);
    CHECK(hs_norm(z) == 0.0);

    Vec v = random_complex_vector(4, 9u);
    v /= v.norm();
    Mat proj = v * v.adjoint();
    CHECK(trace_norm(proj) == Approx(1.0).margin(1e-12));
    CHECK(hs_norm(proj) == Approx(1.0).margin(1e-12));

    Mat d = Mat::Zero(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = -4.0;
    CHECK(trace_norm(d) == Approx(7.0).margin(1e-12));
    CHECK(hs_norm(d) == Approx(5.0).margin(1e-12));

    Mat bad = Mat::Zero(2, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(trace_norm(bad), std::invalid_argument);
}

TEST_CASE("coefficient convention round-trips and preserves norms", "[lattice]") {
    GridSpec g = build_grid(3.0, 10);
    GridFunction f{g, random_complex_vector(g.modes, 21u)};
    Vec c = to_coefficients(f);
    CHECK(c.norm() == Approx(l2_norm(f)).epsilon(1e-14));
    GridFunction back = from_coefficients(g, c);
    CHECK((back.values - f.values).cwiseAbs().maxCoeff() <= 1e-14);
}
