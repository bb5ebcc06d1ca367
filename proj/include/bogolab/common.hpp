#pragma once

#include <complex>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bogolab {

using cxd = std::complex<double>;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Mat = Eigen::MatrixXcd;
using RMat = Eigen::MatrixXd;

constexpr double pi = 3.14159265358979323846;
constexpr cxd iu{0.0, 1.0};

// FNV-1a, used to stamp a config hash onto every output row.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// Shortest representation that round-trips a double; keeps CSV output deterministic.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace bogolab
