#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kcit/errors.hpp"

namespace kcit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class KernelKind { gaussian, linear, constant, weight_product };

inline std::string to_string(KernelKind k) {
    switch (k) {
        case KernelKind::gaussian: return "gaussian";
        case KernelKind::linear: return "linear";
        case KernelKind::constant: return "constant";
        case KernelKind::weight_product: return "weight-product";
    }
    return "?";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "gaussian") return KernelKind::gaussian;
    if (s == "linear") return KernelKind::linear;
    if (s == "constant") return KernelKind::constant;
    if (s == "weight-product") return KernelKind::weight_product;
    throw config_error("unknown kernel kind: " + s);
}

/// Scalar weight function w for the product kernel k(c,c') = w(c) w(c').
/// Names are registry keys so kernel specs stay serializable.
using WeightFn = std::function<double(const Eigen::Ref<const Vector>&)>;

inline WeightFn resolve_weight_fn(const std::string& name, double user_const) {
    if (name == "identity")
        return [](const Eigen::Ref<const Vector>& c) { return c(0); };
    if (name == "sign")
        return [](const Eigen::Ref<const Vector>& c) { return c(0) >= 0.0 ? 1.0 : -1.0; };
    if (name == "constant")
        return [user_const](const Eigen::Ref<const Vector>&) { return user_const; };
    throw config_error("unknown weight function: " + name);
}

/// Description of a positive-definite kernel.
///
/// Gaussian uses per-dimension lengthscales:
///   k(x, y) = exp(-sum_d (x_d - y_d)^2 / (2 l_d^2)).
struct KernelSpec {
    KernelKind kind = KernelKind::gaussian;
    Vector lengthscales;          // gaussian only; one entry per input dimension
    std::string weight_fn;        // weight-product only
    double weight_const = 1.0;    // used by weight_fn == "constant"

    static KernelSpec gaussian(const Vector& ls) {
        KernelSpec s;
        s.kind = KernelKind::gaussian;
        s.lengthscales = ls;
        s.validate();
        return s;
    }
    static KernelSpec gaussian(double ls, Eigen::Index dim = 1) {
        return gaussian(Vector::Constant(dim, ls));
    }
    /// Convenience for the squared-lengthscale parameterization used in sweeps.
    static KernelSpec gaussian_sq(double ell_sq, Eigen::Index dim = 1) {
        if (!(ell_sq > 0.0)) throw config_error("squared lengthscale must be positive");
        return gaussian(std::sqrt(ell_sq), dim);
    }
    static KernelSpec gaussian_sq(const Vector& ell_sq) {
        return gaussian(ell_sq.array().sqrt().matrix());
    }
    static KernelSpec linear() {
        KernelSpec s;
        s.kind = KernelKind::linear;
        return s;
    }
    static KernelSpec constant() {
        KernelSpec s;
        s.kind = KernelKind::constant;
        return s;
    }
    static KernelSpec weight_product(const std::string& fn, double user_const = 1.0) {
        KernelSpec s;
        s.kind = KernelKind::weight_product;
        s.weight_fn = fn;
        s.weight_const = user_const;
        resolve_weight_fn(fn, user_const);  // fail early if unknown
        return s;
    }

    void validate() const {
        if (kind == KernelKind::gaussian) {
            if (lengthscales.size() == 0)
                throw config_error("gaussian kernel needs at least one lengthscale");
            for (Eigen::Index d = 0; d < lengthscales.size(); ++d)
                if (!(lengthscales(d) > 0.0) || !std::isfinite(lengthscales(d)))
                    throw config_error("gaussian lengthscales must be positive and finite");
        }
    }
};

/// k(x, y) for a single pair of points.
inline double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                          const Eigen::Ref<const Vector>& y) {
    if (x.size() != y.size()) throw config_error("eval_kernel: dimension mismatch between points");
    switch (spec.kind) {
        case KernelKind::gaussian: {
            if (x.size() != spec.lengthscales.size())
                throw config_error("eval_kernel: point dimension does not match lengthscales");
            spec.validate();
            double arg = 0.0;
            for (Eigen::Index d = 0; d < x.size(); ++d) {
                const double diff = x(d) - y(d);
                const double l = spec.lengthscales(d);
                arg += diff * diff / (2.0 * l * l);
            }
            return std::exp(-arg);
        }
        case KernelKind::linear:
            return x.dot(y);
        case KernelKind::constant:
            return 1.0;
        case KernelKind::weight_product: {
            const WeightFn w = resolve_weight_fn(spec.weight_fn, spec.weight_const);
            return w(x) * w(y);
        }
    }
    throw config_error("eval_kernel: unreachable kernel kind");
}

/// Kernel evaluations over two point sets (rows are points).
struct GramMatrix {
    Matrix values;
    Eigen::Index left_n = 0;
    Eigen::Index right_n = 0;
    bool self = false;  // true when left and right are the same point set
};

/// Gram matrix between X and Y; values(i, j) = k(X_i, Y_j).
inline GramMatrix gram(const KernelSpec& spec, const Eigen::Ref<const Matrix>& X,
                       const Eigen::Ref<const Matrix>& Y) {
    GramMatrix g;
    g.left_n = X.rows();
    g.right_n = Y.rows();
    g.values.resize(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j)
            g.values(i, j) = eval_kernel(spec, X.row(i).transpose(), Y.row(j).transpose());
    return g;
}

/// Self Gram matrix; fills the upper triangle once and mirrors it, so the
/// result is symmetric to the bit.
inline GramMatrix gram(const KernelSpec& spec, const Eigen::Ref<const Matrix>& X) {
    GramMatrix g;
    g.left_n = g.right_n = X.rows();
    g.self = true;
    const Eigen::Index n = X.rows();
    g.values.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        g.values(i, i) = eval_kernel(spec, X.row(i).transpose(), X.row(i).transpose());
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = eval_kernel(spec, X.row(i).transpose(), X.row(j).transpose());
            g.values(i, j) = v;
            g.values(j, i) = v;
        }
    }
    return g;
}

/// Fast path used throughout the pipeline: Gaussian self-Gram from a shared
/// squared-distance matrix, k = exp(-D2 / (2 ell_sq)). Scalar lengthscale.
inline Matrix squared_distance_matrix(const Eigen::Ref<const Matrix>& X) {
    Vector sq = X.rowwise().squaredNorm();
    Matrix d2 = (-2.0 * X * X.transpose());
    d2.colwise() += sq;
    d2.rowwise() += sq.transpose();
    return d2.cwiseMax(0.0);
}

inline Matrix gaussian_gram_from_d2(const Eigen::Ref<const Matrix>& d2, double ell_sq) {
    return (-d2 / (2.0 * ell_sq)).array().exp().matrix();
}

/// Median of the strictly positive pairwise Euclidean distances of X.
/// The usual starting point for lengthscale grids.
inline double median_heuristic(const Eigen::Ref<const Matrix>& X) {
    const Eigen::Index n = X.rows();
    if (n < 2) throw config_error("median_heuristic: need at least two points");
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = (X.row(i) - X.row(j)).norm();
            if (d > 0.0) dists.push_back(d);
        }
    if (dists.empty())
        throw numerical_error("median_heuristic: all points identical, no positive distance");
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    double med = dists[mid];
    if (dists.size() % 2 == 0) {
        // lower middle element completes the even-count median
        const double lo = *std::max_element(dists.begin(), dists.begin() + mid);
        med = 0.5 * (med + lo);
    }
    return med;
}

}  // namespace kcit
