#pragma once

// Dense matrix exponential by scaling-and-squaring with a plain Taylor sum.
// Test oracle only: slow but independent of any integrator under test.

#include <Eigen/Dense>
#include <cmath>

namespace bogolab::testing {

inline Eigen::MatrixXd expm_taylor(const Eigen::MatrixXd& a) {
    const double nrm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    if (nrm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
    Eigen::MatrixXd b = a / std::pow(2.0, squarings);

    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    Eigen::MatrixXd sum = term;
    for (int k = 1; k <= 80; ++k) {
        term = (term * b / static_cast<double>(k)).eval();
        sum += term;
        if (term.cwiseAbs().maxCoeff() < 1e-20) break;
    }
    for (int i = 0; i < squarings; ++i) sum = (sum * sum).eval();
    return sum;
}

}  // namespace bogolab::testing
