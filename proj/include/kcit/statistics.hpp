#pragma once

#include <cmath>

#include <Eigen/Core>

#include "kcit/errors.hpp"
#include "kcit/kernels.hpp"

namespace kcit {

/// U-statistic kernel matrix, h_ij = (K_C)_ij (K_A^c)_ij (K_B^c)_ij.
struct HMatrix {
    Matrix values;

    Eigen::Index n() const { return values.rows(); }
};

inline HMatrix make_h_matrix(const Eigen::Ref<const Matrix>& k_c,
                             const Eigen::Ref<const Matrix>& k_a_centered,
                             const Eigen::Ref<const Matrix>& k_b_centered) {
    if (k_c.rows() != k_c.cols() || k_a_centered.rows() != k_c.rows() ||
        k_a_centered.cols() != k_c.cols() || k_b_centered.rows() != k_c.rows() ||
        k_b_centered.cols() != k_c.cols())
        throw config_error("make_h_matrix: factor matrices must share one square size");
    HMatrix h;
    h.values = k_c.cwiseProduct(k_a_centered).cwiseProduct(k_b_centered);
    return h;
}

/// Moment quantities of a second-order U-statistic with kernel h.
struct MomentSummary {
    double u_mean = 0.0;       // U = |mu_h|^2, the population statistic
    double nu1 = 0.0;          // <mu_h, C_h mu_h>
    double nu2 = 0.0;          // |C_h|_HS^2
    double var_un = 0.0;       // 4 nu1 / n + 2 nu2 / (n (n-1))
    double sigma2_h1_n = 0.0;  // plug-in variance, the 4*nu1 scale

    static double var_formula(double nu1, double nu2, Eigen::Index n) {
        return 4.0 * nu1 / static_cast<double>(n) +
               2.0 * nu2 / (static_cast<double>(n) * static_cast<double>(n - 1));
    }
};

/// Off-diagonal mean of h: the U-statistic value.
inline double kci_ustat(const HMatrix& h) {
    const Eigen::Index n = h.n();
    if (n < 2) throw config_error("kci_ustat: need n >= 2");
    const double total = h.values.sum() - h.values.diagonal().sum();
    return total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

/// HSIC-form unbiased estimator on the pair (K, L):
///   (1/(n(n-3))) ( tr(KL) + (1'K1)(1'L1)/((n-1)(n-2)) - (2/(n-1)) 1'KL1 ).
/// K is the centered A Gram, L the elementwise product of the centered B Gram
/// with the C Gram. Centralizing this way averages out part of the
/// regression error.
inline double kci_hsic_unbiased(const Eigen::Ref<const Matrix>& K,
                                const Eigen::Ref<const Matrix>& L) {
    const Eigen::Index n = K.rows();
    if (n < 4) throw config_error("kci_hsic_unbiased: need n >= 4");
    if (K.cols() != n || L.rows() != n || L.cols() != n)
        throw config_error("kci_hsic_unbiased: K and L must be square of the same size");
    const double nd = static_cast<double>(n);
    const double tr_kl = K.cwiseProduct(L).sum();
    const Vector k_rows = K.rowwise().sum();
    const Vector l_rows = L.rowwise().sum();
    const double k_tot = k_rows.sum();
    const double l_tot = l_rows.sum();
    const double cross = k_rows.dot(l_rows);  // 1'KL1 for symmetric K
    return (tr_kl + k_tot * l_tot / ((nd - 1.0) * (nd - 2.0)) - 2.0 * cross / (nd - 1.0)) /
           (nd * (nd - 3.0));
}

/// Studentized residual-covariance statistic. For each entry (p, q):
/// R_i = resid_a(i,p) resid_b(i,q), T_pq = sqrt(n) mean(R) / sd(R) with the
/// population (1/n) standard deviation; the scalar statistic is max |T_pq|.
struct GcmResult {
    double statistic = 0.0;
    Matrix per_entry;
};

inline GcmResult gcm_statistic(const Eigen::Ref<const Matrix>& resid_a,
                               const Eigen::Ref<const Matrix>& resid_b) {
    const Eigen::Index n = resid_a.rows();
    if (n < 2) throw config_error("gcm_statistic: need n >= 2");
    if (resid_b.rows() != n) throw config_error("gcm_statistic: row count mismatch");
    GcmResult out;
    out.per_entry.resize(resid_a.cols(), resid_b.cols());
    for (Eigen::Index p = 0; p < resid_a.cols(); ++p) {
        for (Eigen::Index q = 0; q < resid_b.cols(); ++q) {
            const Vector r = resid_a.col(p).cwiseProduct(resid_b.col(q));
            const double mean = r.mean();
            const double var = r.squaredNorm() / static_cast<double>(n) - mean * mean;
            if (!(var > 0.0))
                throw numerical_error("gcm_statistic: degenerate residual product");
            const double t = std::sqrt(static_cast<double>(n)) * mean / std::sqrt(var);
            out.per_entry(p, q) = t;
            out.statistic = std::max(out.statistic, std::abs(t));
        }
    }
    return out;
}

/// Weighted variant: the residual products are multiplied by w_i first.
inline GcmResult wgcm_statistic(const Eigen::Ref<const Matrix>& resid_a,
                                const Eigen::Ref<const Matrix>& resid_b,
                                const Eigen::Ref<const Vector>& weights) {
    if (weights.size() != resid_a.rows())
        throw config_error("wgcm_statistic: weight count mismatch");
    const Matrix wa = resid_a.array().colwise() * weights.array();
    return gcm_statistic(wa, resid_b);
}

/// Plug-in variance estimator
///   sigma^2_{H1,n} = (4/n^3) sum_i (sum_j h_ij)^2 - (4/n^4) (sum_ij h_ij)^2,
/// with diagonal terms included in the row sums, clamped below at zero.
inline double empirical_variance_sigma2(const HMatrix& h) {
    const Eigen::Index n = h.n();
    if (n < 2) throw config_error("empirical_variance_sigma2: need n >= 2");
    const double nd = static_cast<double>(n);
    const Vector row_sums = h.values.rowwise().sum();
    const double total = row_sums.sum();
    const double value =
        4.0 / (nd * nd * nd) * row_sums.squaredNorm() - 4.0 / (nd * nd * nd * nd) * total * total;
    return std::max(value, 0.0);
}

/// SNR_{n,lambda} = U_n / sqrt(sigma^2_{H1,n} + lambda).
inline double snr_estimate(const HMatrix& h, double lambda_reg) {
    if (lambda_reg < 0.0) throw config_error("snr_estimate: lambda must be nonnegative");
    const double denom_sq = empirical_variance_sigma2(h) + lambda_reg;
    if (!(denom_sq > 0.0)) throw numerical_error("snr_estimate: zero denominator");
    return kci_ustat(h) / std::sqrt(denom_sq);
}

/// V-statistic plug-ins of the population moments from the Gram matrix
/// G_ij = <phi_h(X_i), phi_h(X_j)>. Biased (diagonals included), which is
/// fine at the sample sizes the pipeline uses:
///   U            off-diagonal mean of G,
///   nu1 plug-in  E[<mu, phi(X)>^2] - (full mean)^2,
///   nu2 plug-in  E[G(X,X')^2] - 2 E[<mu, phi(X)>^2] + (full mean)^2.
inline MomentSummary population_moments_from_samples(const Eigen::Ref<const Matrix>& G) {
    const Eigen::Index n = G.rows();
    if (n < 4) throw config_error("population_moments_from_samples: need n >= 4");
    if (G.cols() != n) throw config_error("population_moments_from_samples: G must be square");
    const double nd = static_cast<double>(n);
    const Vector row_sums = G.rowwise().sum();
    const double total = row_sums.sum();
    const double full_mean = total / (nd * nd);
    const double second_cond = row_sums.squaredNorm() / (nd * nd * nd);  // E[<mu,phi(X)>^2]
    const double second_full = G.squaredNorm() / (nd * nd);              // E[G(X,X')^2]

    MomentSummary m;
    m.u_mean = (total - G.diagonal().sum()) / (nd * (nd - 1.0));
    m.nu1 = std::max(second_cond - full_mean * full_mean, 0.0);
    m.nu2 = std::max(second_full - 2.0 * second_cond + full_mean * full_mean, 0.0);
    m.var_un = MomentSummary::var_formula(m.nu1, m.nu2, n);
    m.sigma2_h1_n = 4.0 * m.nu1;
    return m;
}

}  // namespace kcit
