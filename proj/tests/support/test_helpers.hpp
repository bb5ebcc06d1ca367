#pragma once

// Shared builders for test states. Kept independent of the library's harness
// module so tests exercise the library through its public pieces only.

#include <random>

#include "bogolab/lattice.hpp"

namespace bogolab::testing {

inline Vec random_complex_vector(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(n);
    for (int j = 0; j < n; ++j) v[j] = cxd(gauss(rng), gauss(rng));
    return v;
}

// L2-normalized periodic gaussian packet (optionally with a phase twist k0).
inline GridFunction gaussian_packet(const GridSpec& g, double center, double width,
                                    double k0 = 0.0) {
    Vec v(g.modes);
    for (int j = 0; j < g.modes; ++j) {
        double x = minimal_image(g.node(j) - center, g.length);
        v[j] = std::exp(cxd(-x * x / (2.0 * width * width), k0 * g.node(j)));
    }
    GridFunction u{g, v};
    u.values /= l2_norm(u);
    return u;
}

// Normalized plane wave exp(i k_q x)/sqrt(L) for integer mode index q.
inline GridFunction plane_wave(const GridSpec& g, int q) {
    Vec v(g.modes);
    double k = 2.0 * pi / g.length * q;
    for (int j = 0; j < g.modes; ++j)
        v[j] = std::exp(iu * k * g.node(j)) / std::sqrt(g.length);
    return GridFunction{g, v};
}

// Random L2-normalized grid function.
inline GridFunction random_state(const GridSpec& g, unsigned seed) {
    GridFunction u{g, random_complex_vector(g.modes, seed)};
    u.values /= l2_norm(u);
    return u;
}

}  // namespace bogolab::testing
