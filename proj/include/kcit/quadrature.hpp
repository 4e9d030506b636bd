#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "kcit/errors.hpp"

namespace kcit {

/// Gauss-Hermite rule in the probabilists' normalization: for Z ~ N(0, 1),
/// E[f(Z)] ~= sum_i w_i f(x_i). Nodes and weights come from the Golub-Welsch
/// eigenproblem of the three-term recurrence H_{k+1} = x H_k - k H_{k-1}.
struct GaussHermite {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;

    static GaussHermite make(int order) {
        if (order < 1) throw config_error("GaussHermite: order must be >= 1");
        Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
        for (int k = 1; k < order; ++k) {
            const double b = std::sqrt(static_cast<double>(k));
            jacobi(k, k - 1) = b;
            jacobi(k - 1, k) = b;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
        if (es.info() != Eigen::Success)
            throw numerical_error("GaussHermite: eigensolve failed");
        GaussHermite gh;
        gh.nodes = es.eigenvalues();
        gh.weights.resize(order);
        for (int i = 0; i < order; ++i) {
            const double q0 = es.eigenvectors()(0, i);
            gh.weights(i) = q0 * q0;  // total weight of N(0,1) is 1
        }
        return gh;
    }

    /// E[f(Z)] for Z ~ N(0,1).
    template <typename F>
    double expect(F&& f) const {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < nodes.size(); ++i) acc += weights(i) * f(nodes(i));
        return acc;
    }

    /// E[f(Z1, Z2)] for independent standard normals.
    template <typename F>
    double expect2(F&& f) const {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < nodes.size(); ++i)
            for (Eigen::Index j = 0; j < nodes.size(); ++j)
                acc += weights(i) * weights(j) * f(nodes(i), nodes(j));
        return acc;
    }
};

}  // namespace kcit
