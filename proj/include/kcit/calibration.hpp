#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "kcit/errors.hpp"
#include "kcit/rng.hpp"
#include "kcit/statistics.hpp"

namespace kcit {

// ---------------------------------------------------------------------------
// Normal CDF and quantile.
// ---------------------------------------------------------------------------

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

/// Inverse standard normal CDF (Wichura's AS 241, double precision).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw config_error("normal_quantile: p must lie in (0,1)");
    const double q = p - 0.5;
    double r, num, den;
    if (std::abs(q) <= 0.425) {
        r = 0.180625 - q * q;
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                    6.7265770927008700853e4) *
                       r +
                   4.5921953931549871457e4) *
                      r +
                  1.3731693765509461125e4) *
                     r +
                 1.9715909503065514427e3) *
                    r +
                1.3314166789178437745e2) *
                   r +
               3.3871328727963666080e0);
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                    3.9307895800092710610e4) *
                       r +
                   2.1213794301586595867e4) *
                      r +
                  5.3941960214247511077e3) *
                     r +
                 6.8718700749205790830e2) *
                    r +
                4.2313330701600911252e1) *
                   r +
               1.0);
        return q * num / den;
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    if (r <= 5.0) {
        r -= 1.6;
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) *
                       r +
                   1.27045825245236838258e0) *
                      r +
                  3.64784832476320460504e0) *
                     r +
                 5.76949722146069140550e0) *
                    r +
                4.63033784615654529590e0) *
                   r +
               1.42343711074968357734e0);
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) *
                       r +
                   1.48103976427480074590e-1) *
                      r +
                  6.89767334985100004550e-1) *
                     r +
                 1.67638483018380384940e0) *
                    r +
                2.05319162663775882187e0) *
                   r +
               1.0);
    } else {
        r -= 5.0;
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) *
                       r +
                   2.65321895265761230930e-2) *
                      r +
                  2.96560571828504891230e-1) *
                     r +
                 1.78482653991729133580e0) *
                    r +
                5.46378491116411436990e0) *
                   r +
               6.65790464350110377720e0);
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) *
                       r +
                   7.86869131145613259100e-4) *
                      r +
                  1.48753612908506148525e-2) *
                     r +
                 1.36929880922735805310e-1) *
                    r +
                5.99832206555887937690e-1) *
                   r +
               1.0);
    }
    const double v = num / den;
    return q < 0.0 ? -v : v;
}

// ---------------------------------------------------------------------------
// Wild bootstrap.
// ---------------------------------------------------------------------------

enum class Multiplier { rademacher, gaussian };

inline std::string to_string(Multiplier m) {
    return m == Multiplier::rademacher ? "rademacher" : "gaussian";
}

inline Multiplier multiplier_from_string(const std::string& s) {
    if (s == "rademacher") return Multiplier::rademacher;
    if (s == "gaussian") return Multiplier::gaussian;
    throw config_error("unknown multiplier: " + s);
}

struct BootstrapConfig {
    int num_samples = 1000;
    Multiplier multiplier = Multiplier::rademacher;
    std::uint64_t seed = 0;
    // p-value correction (1 + #{V_s >= obs}) / (S + 1); off by default to
    // match the plain 1/S formula.
    bool plus_one_correction = false;
};

inline Vector draw_multipliers(Rng& rng, Multiplier kind, Eigen::Index n) {
    Vector q(n);
    if (kind == Multiplier::rademacher)
        for (Eigen::Index i = 0; i < n; ++i) q(i) = rng.rademacher();
    else
        for (Eigen::Index i = 0; i < n; ++i) q(i) = rng.normal();
    return q;
}

struct BootstrapResult {
    double pvalue = 1.0;
    Vector samples;
};

/// Null calibration of the HSIC-form statistic. Draw s uses the substream
/// seed substream_seed(cfg.seed, s) and computes
///   V_s = kci_hsic_unbiased(q_s q_s' .* K, L);
/// the p-value is (1/S) #{ observed < V_s }. Samples are indexed, then
/// reduced, so any evaluation order gives identical output.
inline BootstrapResult wild_bootstrap_pvalue(const Eigen::Ref<const Matrix>& K,
                                             const Eigen::Ref<const Matrix>& L, double observed,
                                             const BootstrapConfig& cfg) {
    const Eigen::Index n = K.rows();
    if (n < 4) throw config_error("wild_bootstrap_pvalue: need n >= 4");
    if (cfg.num_samples < 1) throw config_error("wild_bootstrap_pvalue: need S >= 1");
    BootstrapResult out;
    out.samples.resize(cfg.num_samples);
    int exceed = 0;
    for (int s = 0; s < cfg.num_samples; ++s) {
        Rng rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(s)));
        const Vector q = draw_multipliers(rng, cfg.multiplier, n);
        const Matrix k_tilde = K.cwiseProduct(q * q.transpose());
        const double v = kci_hsic_unbiased(k_tilde, L);
        out.samples(s) = v;
        if (observed < v) ++exceed;
    }
    if (cfg.plus_one_correction)
        out.pvalue = (1.0 + exceed) / (cfg.num_samples + 1.0);
    else
        out.pvalue = static_cast<double>(exceed) / cfg.num_samples;
    return out;
}

/// Simple-form wild bootstrap draws Y = (1/n) sum_{i != j} h_ij e_i e_j.
/// Zero mean for either multiplier.
inline Vector wild_offdiag_samples(const Eigen::Ref<const Matrix>& H, int num_samples,
                                   Multiplier kind, std::uint64_t seed) {
    const Eigen::Index n = H.rows();
    Vector out(num_samples);
    for (int s = 0; s < num_samples; ++s) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(s)));
        const Vector e = draw_multipliers(rng, kind, n);
        const double quad = e.dot(H * e);
        const double diag = H.diagonal().dot(e.cwiseProduct(e));
        out(s) = (quad - diag) / static_cast<double>(n);
    }
    return out;
}

/// Trace-centered quadratic form Y = (1/n)(e' H e - tr H) with Gaussian
/// multipliers: equal in distribution to sum_r lambda_r (X_r^2 - 1) over the
/// eigenvalues lambda_r of H/n. (For Rademacher multipliers this coincides
/// with the off-diagonal form.)
inline Vector wild_centered_quadform_samples(const Eigen::Ref<const Matrix>& H, int num_samples,
                                             std::uint64_t seed) {
    const Eigen::Index n = H.rows();
    const double tr = H.trace();
    Vector out(num_samples);
    for (int s = 0; s < num_samples; ++s) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(s)));
        const Vector e = draw_multipliers(rng, Multiplier::gaussian, n);
        out(s) = (e.dot(H * e) - tr) / static_cast<double>(n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-sample Hoeffding test (true embeddings, bounded kernels).
// ---------------------------------------------------------------------------

/// t_n = 32 ka kb kc sqrt(log(1/alpha) / (n-1)).
inline double hoeffding_threshold(double kappa_a, double kappa_b, double kappa_c, Eigen::Index n,
                                  double alpha) {
    if (!(kappa_a > 0.0 && kappa_b > 0.0 && kappa_c > 0.0))
        throw config_error("hoeffding_threshold: kappa bounds must be positive");
    if (n < 2) throw config_error("hoeffding_threshold: need n >= 2");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw config_error("hoeffding_threshold: alpha must lie in (0,1)");
    return 32.0 * kappa_a * kappa_b * kappa_c *
           std::sqrt(std::log(1.0 / alpha) / static_cast<double>(n - 1));
}

/// Reject when the statistic strictly exceeds the threshold.
inline bool hoeffding_test(double kci_n_true_embeddings, double threshold) {
    return kci_n_true_embeddings > threshold;
}

/// The Hoeffding tail bound as a p-value; p < alpha iff stat > t_n.
inline double hoeffding_pvalue(double stat, double kappa_a, double kappa_b, double kappa_c,
                               Eigen::Index n) {
    if (stat <= 0.0) return 1.0;
    const double denom = 32.0 * kappa_a * kappa_b * kappa_c;
    const double z = stat / denom;
    return std::min(1.0, std::exp(-static_cast<double>(n - 1) * z * z));
}

// ---------------------------------------------------------------------------
// Threshold bound (moment-matched normal / Cantelli).
// ---------------------------------------------------------------------------

struct ThresholdPair {
    double q_cantelli = 0.0;  // T1 = sqrt((1-rho)/rho), distribution-free
    double q_normal = 0.0;    // T2 = Phi^{-1}(1-rho), normal approximation
};

/// Minimal q with Pr(Z > q/n) <= rho: q = n KCI_hat + T_i sqrt(n^2 Var).
inline ThresholdPair cantelli_normal_threshold(double kci_hat, double var_kci_n, Eigen::Index n,
                                               double rho) {
    if (var_kci_n < 0.0) throw config_error("cantelli_normal_threshold: negative variance");
    if (!(rho > 0.0 && rho < 1.0))
        throw config_error("cantelli_normal_threshold: rho must lie in (0,1)");
    const double nd = static_cast<double>(n);
    const double scale = std::sqrt(nd * nd * var_kci_n);
    ThresholdPair out;
    out.q_cantelli = nd * kci_hat + std::sqrt((1.0 - rho) / rho) * scale;
    out.q_normal = nd * kci_hat + normal_quantile(1.0 - rho) * scale;
    return out;
}

// ---------------------------------------------------------------------------
// Wild-bootstrap alignment bound.
// ---------------------------------------------------------------------------

struct BoundReport {
    double b_shift = 0.0;  // KCI_hat / sqrt(Var(KCI_hat_n))
    double k_var = 0.0;    // Var(Y | H) / (n^2 Var(KCI_hat_n))
    double delta = 0.0;    // |H|_inf^2 / |H|_2^2 over eigenvalue magnitudes
    double r1 = 0.0;
    double r2 = 0.0;
    double r3 = 0.0;
    double bound = 0.0;
    double var_y_given_h = 0.0;      // 2 sum lambda_r^2
    double third_moment_y = 0.0;     // 8 sum lambda_r^3
    bool negative_eigenvalues = false;  // the bound assumes a PSD H
};

inline double psi_bound(double x) {
    return x * std::exp(6.283185307179586476925286766559 * x) / std::sqrt(6.283185307179586476925286766559);
}

/// Kolmogorov-distance bound between the Gaussian-multiplier wild bootstrap
/// of H and the moment-matched normal of n KCI_hat_n:
///   Psi(R1 k^{3/2} + b + pi |k - 1|) + R2 k^{-1/2} + R3,
/// with R1 = (4/3) sqrt(2) pi^2 |H~|_3^3/|H~|_2^3, R2 = 2^{-5/4} pi^{-2} /
/// sqrt(1-2 delta), R3 = (2 pi)^{-7/2}, over the eigenvalues of H~ = H/n.
/// Schatten norms use absolute eigenvalues; a warning flag is set when any
/// eigenvalue is negative.
inline BoundReport bootstrap_alignment_bound(const HMatrix& h, double kci_hat,
                                             double var_kci_n) {
    const Eigen::Index n = h.n();
    if (n < 2) throw config_error("bootstrap_alignment_bound: need n >= 2");
    if (!(var_kci_n > 0.0))
        throw config_error("bootstrap_alignment_bound: variance must be positive");
    const double max_abs = h.values.cwiseAbs().maxCoeff();
    const double asym = (h.values - h.values.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * std::max(max_abs, 1e-300))
        throw numerical_error("bootstrap_alignment_bound: input matrix is not symmetric");

    Eigen::SelfAdjointEigenSolver<Matrix> es(h.values / static_cast<double>(n),
                                             Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw numerical_error("bootstrap_alignment_bound: eigensolve failed");
    const Vector lam = es.eigenvalues();

    BoundReport rep;
    double s2 = 0.0, s3_abs = 0.0, s3_signed = 0.0, max_l = 0.0;
    for (Eigen::Index r = 0; r < lam.size(); ++r) {
        const double l = lam(r);
        const double al = std::abs(l);
        if (l < 0.0) rep.negative_eigenvalues = true;
        s2 += l * l;
        s3_abs += al * al * al;
        s3_signed += l * l * l;
        max_l = std::max(max_l, al);
    }
    if (!(s2 > 0.0)) throw numerical_error("bootstrap_alignment_bound: zero matrix");
    rep.delta = max_l * max_l / s2;
    if (rep.delta >= 0.5)
        throw numerical_error("bootstrap_alignment_bound: dominant eigenvalue (delta >= 1/2)");

    rep.var_y_given_h = 2.0 * s2;
    rep.third_moment_y = 8.0 * s3_signed;
    rep.b_shift = kci_hat / std::sqrt(var_kci_n);
    const double nd = static_cast<double>(n);
    rep.k_var = rep.var_y_given_h / (nd * nd * var_kci_n);

    const double pi = 3.14159265358979323846;
    rep.r1 = (4.0 / 3.0) * std::sqrt(2.0) * pi * pi * s3_abs / std::pow(s2, 1.5);
    rep.r2 = std::pow(2.0, -1.25) / (pi * pi * std::sqrt(1.0 - 2.0 * rep.delta));
    rep.r3 = std::pow(2.0 * pi, -3.5);
    rep.bound = psi_bound(rep.r1 * std::pow(rep.k_var, 1.5) + rep.b_shift +
                          pi * std::abs(rep.k_var - 1.0)) +
                rep.r2 / std::sqrt(rep.k_var) + rep.r3;
    return rep;
}

}  // namespace kcit
