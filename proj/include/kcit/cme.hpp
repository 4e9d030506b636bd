#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "kcit/errors.hpp"
#include "kcit/kernels.hpp"

namespace kcit {

/// Gram matrix of centered features on a test set,
///   (K_A^c)_ij = <phi(a_i) - mu(c_i), phi(a_j) - mu(c_j)>.
/// Symmetric and PSD up to eigensolver tolerance.
struct CenteredGram {
    Matrix values;
};

/// Conditional mean embedding fitted by kernel ridge regression, kept in dual
/// form: mu(c) = Phi_T^tr (K_reg^tr + lambda m I)^{-1} k_reg^tr(c). Targets are
/// never featurized; every downstream quantity is assembled from Gram entries.
///
/// Ridge convention: the system solved is (K + lambda * m * I), i.e. lambda is
/// per-sample, so a grid of lambdas transfers across training sizes. A paper
/// using (K + lambda' I) corresponds to lambda' = lambda * m.
class CmeModel {
  public:
    CmeModel() = default;

    /// The lambda -> infinity limit: mu == 0 everywhere, so centered Grams
    /// reduce to the raw target Gram.
    static CmeModel null_model(KernelSpec target_kernel) {
        CmeModel m;
        m.null_ = true;
        m.target_kernel_ = std::move(target_kernel);
        return m;
    }

    bool is_null_model() const { return null_; }
    const KernelSpec& regression_kernel() const { return regression_kernel_; }
    const KernelSpec& target_kernel() const { return target_kernel_; }
    double ridge() const { return ridge_; }
    double jitter_used() const { return jitter_; }
    const Matrix& train_c() const { return train_c_; }
    const Matrix& train_targets() const { return train_targets_; }
    Eigen::Index train_size() const { return train_c_.rows(); }

    /// Solve (K_reg + lambda m I) X = B.
    Matrix solve(const Eigen::Ref<const Matrix>& b) const {
        if (null_) throw numerical_error("CmeModel: null model has no factorization");
        return llt_.solve(b);
    }

    /// Scalar predictions a_hat(c) for a linear target kernel on scalar
    /// targets; this is plain kernel ridge regression of the target values.
    Vector predict_mean(const Eigen::Ref<const Matrix>& test_c) const {
        if (null_) return Vector::Zero(test_c.rows());
        if (target_kernel_.kind != KernelKind::linear || train_targets_.cols() != 1)
            throw config_error("predict_mean: requires a scalar linear target kernel");
        const Matrix k_cross = gram(regression_kernel_, train_c_, test_c).values;  // m x n
        return k_cross.transpose() * llt_.solve(train_targets_.col(0).eval());
    }

    friend CmeModel fit_cme(const Eigen::Ref<const Matrix>& train_c,
                            const Eigen::Ref<const Matrix>& train_targets,
                            const KernelSpec& regression_kernel, const KernelSpec& target_kernel,
                            double ridge);
    friend CenteredGram centered_test_gram(const CmeModel& model,
                                           const Eigen::Ref<const Matrix>& test_c,
                                           const Eigen::Ref<const Matrix>& test_targets);

  private:
    bool null_ = false;
    KernelSpec regression_kernel_;
    KernelSpec target_kernel_;
    double ridge_ = 0.0;
    double jitter_ = 0.0;
    Matrix train_c_;
    Matrix train_targets_;
    Matrix target_gram_;  // K_T^tr, cached for the mu-mu inner products
    Eigen::LLT<Matrix> llt_;
};

/// Fit the dual-form embedding. If the Cholesky of (K + lambda m I) fails, a
/// jitter of 1e-10 * tr(K)/m is added and escalated by factors of 10 up to
/// 1e-6 * tr(K)/m before giving up.
inline CmeModel fit_cme(const Eigen::Ref<const Matrix>& train_c,
                        const Eigen::Ref<const Matrix>& train_targets,
                        const KernelSpec& regression_kernel, const KernelSpec& target_kernel,
                        double ridge) {
    const Eigen::Index m = train_c.rows();
    if (m < 2) throw config_error("fit_cme: need at least two training points");
    if (train_targets.rows() != m)
        throw config_error("fit_cme: conditioning and target point counts differ");
    if (!(ridge > 0.0)) throw config_error("fit_cme: ridge must be positive");

    CmeModel model;
    model.regression_kernel_ = regression_kernel;
    model.target_kernel_ = target_kernel;
    model.ridge_ = ridge;
    model.train_c_ = train_c;
    model.train_targets_ = train_targets;
    model.target_gram_ = gram(target_kernel, train_targets).values;

    const Matrix k_reg = gram(regression_kernel, train_c).values;
    const double md = static_cast<double>(m);
    Matrix system = k_reg + ridge * md * Matrix::Identity(m, m);
    const double jitter_unit = k_reg.trace() / md;
    double jitter = 0.0;
    for (;;) {
        model.llt_.compute(system + jitter * Matrix::Identity(m, m));
        if (model.llt_.info() == Eigen::Success) break;
        jitter = (jitter == 0.0) ? 1e-10 * jitter_unit : 10.0 * jitter;
        if (jitter > 1e-6 * jitter_unit)
            throw numerical_error("fit_cme: factorization failed, final jitter " +
                                  std::to_string(jitter));
    }
    model.jitter_ = jitter;
    return model;
}

/// Centered target Gram on test data. With W = (K_reg + lambda m I)^{-1},
///   cross_ij = k_reg^tr(c_i)' W k_T^tr(t_j)        (= <mu(c_i), phi(t_j)>)
///   mumu_ij  = k_reg^tr(c_i)' W K_T^tr W k_reg^tr(c_j)
///   out_ij   = k_T(t_i, t_j) - cross_ij - cross_ji + mumu_ij.
inline CenteredGram centered_test_gram(const CmeModel& model,
                                       const Eigen::Ref<const Matrix>& test_c,
                                       const Eigen::Ref<const Matrix>& test_targets) {
    if (test_c.rows() != test_targets.rows())
        throw config_error("centered_test_gram: test point counts differ");
    CenteredGram out;
    const Matrix k_test = gram(model.target_kernel(), test_targets).values;
    if (model.is_null_model()) {
        out.values = k_test;
        return out;
    }
    const Matrix k_c_cross = gram(model.regression_kernel_, model.train_c_, test_c).values;
    const Matrix u = model.llt_.solve(k_c_cross);  // W k_reg^tr(c_j), m x n
    const Matrix k_t_cross =
        gram(model.target_kernel_, model.train_targets_, test_targets).values;  // m x n
    const Matrix cross = u.transpose() * k_t_cross;                             // n x n
    const Matrix mumu = u.transpose() * model.target_gram_ * u;                 // n x n
    out.values = k_test - cross - cross.transpose() + mumu;
    // symmetrize away the last-bit asymmetry of cross + cross'
    out.values = 0.5 * (out.values + out.values.transpose()).eval();
    return out;
}

/// Result of the closed-form leave-one-out grid search.
struct LooSelection {
    KernelSpec kernel;
    double ridge = 0.0;
    double loo_error = std::numeric_limits<double>::infinity();
};

namespace detail {

// Larger ridge wins ties, then larger (first) lengthscale; smoother models
// are preferred when the LOO error cannot distinguish candidates.
inline bool loo_candidate_better(double err, double ridge, const KernelSpec& kernel,
                                 const LooSelection& best) {
    constexpr double rel_tie = 1e-12;
    const double tol = rel_tie * std::max(std::abs(err), std::abs(best.loo_error));
    if (err < best.loo_error - tol) return true;
    if (err > best.loo_error + tol) return false;
    if (ridge != best.ridge) return ridge > best.ridge;
    const double ls_new = kernel.kind == KernelKind::gaussian ? kernel.lengthscales(0) : 0.0;
    const double ls_old =
        best.kernel.kind == KernelKind::gaussian ? best.kernel.lengthscales(0) : 0.0;
    return ls_new > ls_old;
}

}  // namespace detail

namespace detail {

// Mean closed-form LOO error of one (K_reg, ridge) candidate, or +inf when
// the hat matrix saturates (some H_ii >= 1 - 1e-12) or the factorization
// fails.
inline double loo_error_for(const Matrix& k_reg, const Matrix& k_target, double ridge) {
    const Eigen::Index m = k_reg.rows();
    const double md = static_cast<double>(m);
    Eigen::LLT<Matrix> llt(k_reg + ridge * md * Matrix::Identity(m, m));
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Matrix h = llt.solve(k_reg);  // (K + lambda m I)^{-1} K
    for (Eigen::Index i = 0; i < m; ++i)
        if (h(i, i) >= 1.0 - 1e-12) return std::numeric_limits<double>::infinity();
    const Matrix e = Matrix::Identity(m, m) - h;
    const Matrix ke = k_target * e;
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double resid_sq = std::max(e.col(i).dot(ke.col(i)), 0.0);
        const double denom = 1.0 - h(i, i);
        total += resid_sq / (denom * denom);
    }
    return total / md;
}

}  // namespace detail

/// Closed-form leave-one-out selection of (regression kernel, ridge).
///
/// For the hat matrix H = K (K + lambda m I)^{-1}, the held-out residual of
/// point i has RKHS norm ||resid_i|| / (1 - H_ii), where resid_i is the
/// full-fit residual; its squared norm is ((I-H) K_T (I-H))_ii, assembled from
/// target-kernel Gram entries only. The returned error is the mean over i.
/// Candidates with some H_ii >= 1 - 1e-12 are skipped.
inline LooSelection loo_select(const Eigen::Ref<const Matrix>& train_c,
                               const Eigen::Ref<const Matrix>& train_targets,
                               const std::vector<KernelSpec>& regression_grid,
                               const KernelSpec& target_kernel,
                               const std::vector<double>& ridge_grid) {
    const Eigen::Index m = train_c.rows();
    if (m < 2) throw config_error("loo_select: need at least two training points");
    if (regression_grid.empty() || ridge_grid.empty())
        throw config_error("loo_select: grids must be non-empty");
    for (double r : ridge_grid)
        if (!(r > 0.0)) throw config_error("loo_select: ridge values must be positive");

    const Matrix k_target = gram(target_kernel, train_targets).values;

    LooSelection best;
    bool found = false;
    for (const KernelSpec& kernel : regression_grid) {
        const Matrix k_reg = gram(kernel, train_c).values;
        for (double ridge : ridge_grid) {
            const double err = detail::loo_error_for(k_reg, k_target, ridge);
            if (!std::isfinite(err)) continue;
            if (!found || detail::loo_candidate_better(err, ridge, kernel, best)) {
                best.kernel = kernel;
                best.ridge = ridge;
                best.loo_error = err;
                found = true;
            }
        }
    }
    if (!found) throw numerical_error("loo_select: every candidate was degenerate");
    return best;
}

/// Per-dimension lengthscale selection for multi-dimensional conditioning
/// inputs: cyclic coordinate descent over multiplier grids anchored at the
/// per-coordinate median heuristic, with the ridge re-selected before and
/// after the lengthscale sweeps. Irrelevant coordinates get widened until
/// they stop hurting the regression.
inline LooSelection loo_select_ard(const Eigen::Ref<const Matrix>& train_c,
                                   const Eigen::Ref<const Matrix>& train_targets,
                                   const KernelSpec& target_kernel,
                                   const std::vector<double>& ridge_grid,
                                   const std::vector<double>& multipliers, int sweeps = 2) {
    const Eigen::Index m = train_c.rows();
    const Eigen::Index dim = train_c.cols();
    if (m < 2) throw config_error("loo_select_ard: need at least two training points");
    if (ridge_grid.empty() || multipliers.empty())
        throw config_error("loo_select_ard: grids must be non-empty");

    const Matrix k_target = gram(target_kernel, train_targets).values;
    Vector base(dim), current(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
        base(d) = median_heuristic(train_c.col(d));
        current(d) = base(d);
    }

    auto eval = [&](const Vector& ls, double ridge) {
        return detail::loo_error_for(gram(KernelSpec::gaussian(ls), train_c).values, k_target,
                                     ridge);
    };
    auto pick_ridge = [&](const Vector& ls, double* err_out) {
        const Matrix k_reg = gram(KernelSpec::gaussian(ls), train_c).values;
        double best_err = std::numeric_limits<double>::infinity();
        double best_ridge = ridge_grid.front();
        for (double ridge : ridge_grid) {
            const double err = detail::loo_error_for(k_reg, k_target, ridge);
            if (err < best_err || (err == best_err && ridge > best_ridge)) {
                best_err = err;
                best_ridge = ridge;
            }
        }
        *err_out = best_err;
        return best_ridge;
    };

    double best_err = 0.0;
    double ridge = pick_ridge(current, &best_err);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (Eigen::Index d = 0; d < dim; ++d) {
            Vector trial = current;
            for (double mult : multipliers) {
                trial(d) = base(d) * mult;
                const double err = eval(trial, ridge);
                if (err < best_err || (err == best_err && trial(d) > current(d))) {
                    best_err = err;
                    current(d) = trial(d);
                }
            }
        }
    }
    ridge = pick_ridge(current, &best_err);
    if (!std::isfinite(best_err))
        throw numerical_error("loo_select_ard: every candidate was degenerate");

    LooSelection out;
    out.kernel = KernelSpec::gaussian(current);
    out.ridge = ridge;
    out.loo_error = best_err;
    return out;
}

}  // namespace kcit
