#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kcit/errors.hpp"
#include "kcit/kernels.hpp"
#include "kcit/quadrature.hpp"
#include "kcit/rng.hpp"
#include "kcit/statistics.hpp"

namespace kcit {

struct Dataset {
    Matrix a;  // n x 1
    Matrix b;  // n x 1
    Matrix c;  // n x dim_c

    Eigen::Index n() const { return c.rows(); }
};

enum class Hypothesis { null_hypothesis, alternative };

inline std::string to_string(Hypothesis h) {
    return h == Hypothesis::null_hypothesis ? "null" : "alternative";
}

inline Hypothesis hypothesis_from_string(const std::string& s) {
    if (s == "null") return Hypothesis::null_hypothesis;
    if (s == "alternative") return Hypothesis::alternative;
    throw config_error("unknown hypothesis: " + s);
}

/// Mean functions are drawn from a fixed registry so scenario configs stay
/// serializable; adding one is a code change on purpose.
inline std::function<double(double)> resolve_mean_fn(const std::string& name) {
    if (name == "cos") return [](double x) { return std::cos(x); };
    if (name == "exp") return [](double x) { return std::exp(x); };
    if (name == "sin") return [](double x) { return std::sin(x); };
    if (name == "linear") return [](double x) { return x; };
    if (name == "zero") return [](double) { return 0.0; };
    throw config_error("unknown mean function: " + name);
}

/// Named regression-error function Delta(c); all registry entries are bounded
/// on the range the generators produce.
struct DeltaSpec {
    std::string name = "zero";  // zero, scaled-sin, scaled-gaussian-bump
    double scale = 0.0;
    double omega = 1.0;   // scaled-sin frequency
    double center = 0.0;  // bump location
    double width = 1.0;   // bump width

    std::function<double(double)> resolve() const {
        if (name == "zero") return [](double) { return 0.0; };
        if (name == "scaled-sin") {
            const double s = scale, w = omega;
            return [s, w](double x) { return s * std::sin(w * x); };
        }
        if (name == "scaled-gaussian-bump") {
            const double s = scale, c0 = center, w = width;
            return [s, c0, w](double x) {
                const double z = (x - c0) / w;
                return s * std::exp(-0.5 * z * z);
            };
        }
        throw config_error("unknown delta function: " + name);
    }

    bool is_zero() const { return name == "zero" || scale == 0.0; }
};

struct RegressionErrorSpec {
    DeltaSpec delta_a;
    DeltaSpec delta_b;
};

/// Synthetic data-generating process:
///   C ~ N(0, I), A = f_a(e_a' C) + tau r_A, B = f_b(e_b' C) + tau r_B,
///   (r_A, r_B) | C ~ N(0, [[1, g], [g, 1]]) with g = 0 under the null and
///   g = sin(beta e_c' C) under the alternative.
struct ScenarioConfig {
    std::string f_a = "cos";
    std::string f_b = "exp";
    double tau = 0.1;
    double beta = 1.0;
    Hypothesis hypothesis = Hypothesis::null_hypothesis;
    int dim_c = 1;
    int e_a = 1;  // 1-based coordinate selectors (3-D scenarios)
    int e_b = 1;
    int e_c = 1;

    void validate() const {
        if (dim_c != 1 && dim_c != 3) throw config_error("ScenarioConfig: dim_c must be 1 or 3");
        if (tau < 0.0) throw config_error("ScenarioConfig: tau must be nonnegative");
        if (beta < 0.0) throw config_error("ScenarioConfig: beta must be nonnegative");
        for (int e : {e_a, e_b, e_c})
            if (e < 1 || e > dim_c)
                throw config_error("ScenarioConfig: coordinate selector out of range");
    }

    double gamma(double ec_coord) const {
        return hypothesis == Hypothesis::alternative ? std::sin(beta * ec_coord) : 0.0;
    }
};

/// Draw n samples. Per sample the stream is consumed in a fixed order
/// (C coordinates, r_A, the independent z for r_B), so replays are exact.
inline Dataset generate(const ScenarioConfig& cfg, Eigen::Index n, std::uint64_t seed) {
    cfg.validate();
    if (n < 1) throw config_error("generate: need n >= 1");
    const auto fa = resolve_mean_fn(cfg.f_a);
    const auto fb = resolve_mean_fn(cfg.f_b);
    Rng rng(seed);
    Dataset ds;
    ds.a.resize(n, 1);
    ds.b.resize(n, 1);
    ds.c.resize(n, cfg.dim_c);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int d = 0; d < cfg.dim_c; ++d) ds.c(i, d) = rng.normal();
        const double r_a = rng.normal();
        const double z = rng.normal();
        const double g = cfg.gamma(ds.c(i, cfg.e_c - 1));
        // exact conditional correlation by construction
        const double r_b = g * r_a + std::sqrt(std::max(1.0 - g * g, 0.0)) * z;
        ds.a(i, 0) = fa(ds.c(i, cfg.e_a - 1)) + cfg.tau * r_a;
        ds.b(i, 0) = fb(ds.c(i, cfg.e_b - 1)) + cfg.tau * r_b;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Closed-form oracles for the 1-D family with linear A/B kernels and a
// Gaussian C kernel of squared lengthscale ell_sq.
// ---------------------------------------------------------------------------

/// Population KCI under the alternative:
///   (tau^4 / 2) e^{-beta^2} sqrt(u/(u+2)) (e^{2 beta^2/(u+2)} - 1), u = ell_sq.
/// ell_sq = +inf (the GCM limit) gives 0: an averaged conditional covariance
/// of sin(beta C) vanishes.
inline double oracle_kci(double tau, double beta, double ell_sq) {
    if (!(ell_sq > 0.0)) throw config_error("oracle_kci: ell_sq must be positive");
    if (std::isinf(ell_sq)) return 0.0;
    const double tau4 = tau * tau * tau * tau;
    const double u = ell_sq;
    return 0.5 * tau4 * std::exp(-beta * beta) * std::sqrt(u / (u + 2.0)) *
           std::expm1(2.0 * beta * beta / (u + 2.0));
}

/// v_c = E[(E'[h | X])^2] of the U-statistic kernel; exact exponential form.
/// Grouped through expm1 so the small-beta and large-ell cancellations keep
/// their relative accuracy.
inline double oracle_vc(double tau, double beta, double ell_sq) {
    const double u = ell_sq;
    const double b2 = beta * beta;
    const double tau8 = std::pow(tau, 8);
    if (std::isinf(u)) {
        // k_C == 1: E'[h|X] = tau^4 gamma(C) E[gamma] = 0 under the sin family
        return 0.0;
    }
    const double pref = tau8 * u * std::exp(-b2 * u / (u + 1.0)) / std::sqrt((u + 1.0) * (u + 3.0));
    const double x = 2.0 * b2 / ((u + 1.0) * (u + 3.0));
    const double a = 4.0 * b2 / (u + 3.0);
    const double c = 2.0 * b2 * (4.0 * u + 3.0) / ((u + 1.0) * (u + 3.0));
    const double bracket =
        -std::expm1(-x) +
        std::exp(-2.0 * b2) * (-0.5 * std::expm1(a) + 0.25 * std::expm1(-x) + 0.25 * std::expm1(c));
    return pref * bracket;
}

/// v_s = E[h^2]; exact exponential form (the squared kernel halves the
/// effective squared lengthscale, hence the (u+4) factors).
inline double oracle_vs(double tau, double beta, double ell_sq) {
    const double u = ell_sq;
    const double b2 = beta * beta;
    const double tau8 = std::pow(tau, 8);
    double root, e_ks;  // sqrt term and the exp(-2 b^2 u/(u+2)) factor
    double t_pair, t_inner1, t_inner2, t_inner3;
    if (std::isinf(u)) {
        root = 1.0;
        e_ks = std::exp(-2.0 * b2);
        t_pair = std::exp(-2.0 * b2);
        t_inner1 = 1.0;
        t_inner2 = std::exp(-2.0 * b2);
        t_inner3 = std::exp(-2.0 * b2);
    } else {
        root = std::sqrt(u / (u + 4.0));
        e_ks = std::exp(-2.0 * b2 * u / (u + 2.0));
        t_pair = std::exp(-2.0 * b2 * (u + 2.0) / (u + 4.0));
        t_inner1 = std::exp(-8.0 * b2 / ((u + 2.0) * (u + 4.0)));
        t_inner2 = std::exp(-2.0 * b2 * (u + 4.0) / (u + 2.0));
        t_inner3 = std::exp(-2.0 * b2 * u * u / ((u + 2.0) * (u + 4.0)));
    }
    const double bracket =
        4.0 - 2.0 * t_pair + e_ks * (-2.0 * t_inner1 + 0.5 * t_inner2 + 0.5 * t_inner3);
    return tau8 * root * bracket;
}

struct VarianceComponents {
    double v_c = 0.0;  // E[(E'[h|X])^2]
    double v_m = 0.0;  // (E[h])^2
    double v_s = 0.0;  // E[h^2]
    MomentSummary moments;
};

namespace detail {

inline MomentSummary moments_from_components(double kci, double v_c, double v_m, double v_s,
                                             Eigen::Index n) {
    MomentSummary m;
    m.u_mean = kci;
    m.nu1 = std::max(v_c - v_m, 0.0);
    m.nu2 = std::max(v_s + v_m - 2.0 * v_c, 0.0);
    m.var_un = MomentSummary::var_formula(m.nu1, m.nu2, n);
    m.sigma2_h1_n = 4.0 * m.nu1;
    return m;
}

}  // namespace detail

/// Exact Var(KCI_n) = ((4n-8) v_c - (4n-6) v_m + 2 v_s) / (n(n-1)), reported
/// through the (nu1, nu2) = (v_c - v_m, v_s + v_m - 2 v_c) mapping so the
/// MomentSummary identity holds to machine precision.
inline VarianceComponents oracle_variance(double tau, double beta, double ell_sq,
                                          Eigen::Index n) {
    if (n < 2) throw config_error("oracle_variance: need n >= 2");
    VarianceComponents out;
    const double kci = oracle_kci(tau, beta, ell_sq);
    out.v_c = oracle_vc(tau, beta, ell_sq);
    out.v_m = kci * kci;
    out.v_s = oracle_vs(tau, beta, ell_sq);
    out.moments = detail::moments_from_components(kci, out.v_c, out.v_m, out.v_s, n);
    return out;
}

// ---------------------------------------------------------------------------
// Quadrature oracles for injected regression errors (null hypothesis).
// ---------------------------------------------------------------------------

struct QuadDiag {
    bool converged = true;
    double rel_diff = 0.0;
};

namespace detail {

inline double gaussian_pair_kernel(double c, double cp, double ell_sq) {
    if (std::isinf(ell_sq)) return 1.0;
    const double d = c - cp;
    return std::exp(-d * d / (2.0 * ell_sq));
}

// E[k_C(C,C') p(C) p(C')] over independent standard normals, p = delta_a*delta_b.
inline double noisy_kci_at_order(const RegressionErrorSpec& err, double ell_sq, int order) {
    const auto da = err.delta_a.resolve();
    const auto db = err.delta_b.resolve();
    const GaussHermite gh = GaussHermite::make(order);
    // precompute p at the nodes
    Vector p(gh.nodes.size());
    for (Eigen::Index i = 0; i < gh.nodes.size(); ++i)
        p(i) = da(gh.nodes(i)) * db(gh.nodes(i));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < gh.nodes.size(); ++i)
        for (Eigen::Index j = 0; j < gh.nodes.size(); ++j)
            acc += gh.weights(i) * gh.weights(j) *
                   gaussian_pair_kernel(gh.nodes(i), gh.nodes(j), ell_sq) * p(i) * p(j);
    return acc;
}

inline bool order_converged(double coarse, double fine, double* rel_out) {
    const double scale = std::max(std::abs(coarse), std::abs(fine));
    const double rel = scale > 0.0 ? std::abs(coarse - fine) / scale : 0.0;
    if (rel_out) *rel_out = rel;
    return rel <= 1e-8;
}

}  // namespace detail

/// Null-hypothesis bias of the noisy statistic,
///   KCI_hat = E[k_C(C,C') Delta_a(C) Delta_b(C) Delta_a(C') Delta_b(C')],
/// by tensor Gauss-Hermite quadrature (order 64, order-48 convergence check).
inline double oracle_noisy_kci(const RegressionErrorSpec& err, double ell_sq,
                               QuadDiag* diag = nullptr) {
    if (err.delta_a.is_zero() || err.delta_b.is_zero()) {
        if (diag) *diag = QuadDiag{};
        return 0.0;
    }
    const double fine = detail::noisy_kci_at_order(err, ell_sq, 64);
    const double coarse = detail::noisy_kci_at_order(err, ell_sq, 48);
    QuadDiag d;
    d.converged = detail::order_converged(coarse, fine, &d.rel_diff);
    if (diag) *diag = d;
    return fine;
}

namespace detail {

inline VarianceComponents noisy_variance_at_order(const RegressionErrorSpec& err, double tau,
                                                  double ell_sq, Eigen::Index n, int order) {
    const auto da = err.delta_a.resolve();
    const auto db = err.delta_b.resolve();
    const double tau2 = tau * tau;
    const GaussHermite gh = GaussHermite::make(order);
    const Eigen::Index q = gh.nodes.size();
    Vector p(q), g(q);
    for (Eigen::Index i = 0; i < q; ++i) {
        const double va = da(gh.nodes(i));
        const double vb = db(gh.nodes(i));
        p(i) = va * vb;
        g(i) = (tau2 + va * va) * (tau2 + vb * vb);
    }
    VarianceComponents out;
    // v_c: inner expectation over C' per outer node
    double v_c = 0.0;
    for (Eigen::Index i = 0; i < q; ++i) {
        double inner = 0.0;
        for (Eigen::Index j = 0; j < q; ++j)
            inner += gh.weights(j) * gaussian_pair_kernel(gh.nodes(i), gh.nodes(j), ell_sq) * p(j);
        v_c += gh.weights(i) * g(i) * inner * inner;
    }
    out.v_c = v_c;
    const double kci = noisy_kci_at_order(err, ell_sq, order);
    out.v_m = kci * kci;
    double v_s = 0.0;
    const double half_ell = std::isinf(ell_sq) ? ell_sq : 0.5 * ell_sq;  // k^2 halves ell_sq
    for (Eigen::Index i = 0; i < q; ++i)
        for (Eigen::Index j = 0; j < q; ++j)
            v_s += gh.weights(i) * gh.weights(j) *
                   gaussian_pair_kernel(gh.nodes(i), gh.nodes(j), half_ell) * g(i) * g(j);
    out.v_s = v_s;
    out.moments = moments_from_components(kci, out.v_c, out.v_m, out.v_s, n);
    return out;
}

}  // namespace detail

/// Var(KCI_hat_n) under the null with injected errors; v_c by nested
/// quadrature, v_m = KCI_hat^2, v_s with the squared kernel, combined by the
/// same (4n-8, 4n-6, 2) rule as the exact family. The squared kernel couples
/// the two axes more strongly than the plain one, so this oracle runs at
/// order 128 with an order-doubling check against 256.
inline VarianceComponents oracle_noisy_variance(const RegressionErrorSpec& err, double tau,
                                                double ell_sq, Eigen::Index n,
                                                QuadDiag* diag = nullptr) {
    if (n < 2) throw config_error("oracle_noisy_variance: need n >= 2");
    const VarianceComponents fine = detail::noisy_variance_at_order(err, tau, ell_sq, n, 256);
    const VarianceComponents coarse = detail::noisy_variance_at_order(err, tau, ell_sq, n, 128);
    QuadDiag d;
    double rel_var = 0.0;
    d.converged = detail::order_converged(coarse.moments.var_un, fine.moments.var_un, &rel_var);
    d.rel_diff = rel_var;
    if (diag) *diag = d;
    return fine;
}

// ---------------------------------------------------------------------------
// 3-D scenarios: per-dimension Gaussian C kernel, null-hypothesis bias.
// ---------------------------------------------------------------------------

namespace detail {

// E[f(X, X')] for the auxiliary pair with Cov = [[1-s, s], [s, 1-s]],
// s = 1/(ell_sq + 2); realized as X = z1/sqrt(2) + b z2, X' = z1/sqrt(2) - b z2.
template <typename F>
double correlated_pair_expect(double ell_sq, F&& f, int order) {
    const double s = std::isinf(ell_sq) ? 0.0 : 1.0 / (ell_sq + 2.0);
    const double b = std::sqrt(std::max(0.5 - s, 0.0));
    const GaussHermite gh = GaussHermite::make(order);
    const double inv_sqrt2 = 0.7071067811865475244;
    return gh.expect2([&](double z1, double z2) {
        const double x = inv_sqrt2 * z1 + b * z2;
        const double xp = inv_sqrt2 * z1 - b * z2;
        return f(x, xp);
    });
}

}  // namespace detail

/// Null-hypothesis KCI_hat for a 3-D C with per-dimension squared
/// lengthscales. Shared coordinate (e_a == e_b): a single correlated pair
/// carries the whole product. Separate coordinates: the expectation
/// factorizes into per-coordinate pieces.
inline double oracle_noisy_kci_3d(const RegressionErrorSpec& err, const Vector& ell_sq,
                                  int e_a, int e_b, int order = 48) {
    if (ell_sq.size() != 3) throw config_error("oracle_noisy_kci_3d: need three lengthscales");
    if (e_a < 1 || e_a > 3 || e_b < 1 || e_b > 3)
        throw config_error("oracle_noisy_kci_3d: coordinate selector out of range");
    const auto da = err.delta_a.resolve();
    const auto db = err.delta_b.resolve();
    double pref = 1.0;
    for (int i = 0; i < 3; ++i) pref *= std::sqrt(ell_sq(i) / (ell_sq(i) + 2.0));
    if (e_a == e_b) {
        const double q = detail::correlated_pair_expect(
            ell_sq(e_a - 1),
            [&](double x, double xp) { return da(x) * db(x) * da(xp) * db(xp); }, order);
        return pref * q;
    }
    const double qa = detail::correlated_pair_expect(
        ell_sq(e_a - 1), [&](double x, double xp) { return da(x) * da(xp); }, order);
    const double qb = detail::correlated_pair_expect(
        ell_sq(e_b - 1), [&](double x, double xp) { return db(x) * db(xp); }, order);
    return pref * qa * qb;
}

/// Non-factorized route for the separate-coordinate case: one joint
/// quadrature over both auxiliary pairs. Used to cross-check the factorized
/// evaluation.
inline double oracle_noisy_kci_3d_joint(const RegressionErrorSpec& err, const Vector& ell_sq,
                                        int e_a, int e_b, int order = 32) {
    if (e_a == e_b) return oracle_noisy_kci_3d(err, ell_sq, e_a, e_b, order);
    const auto da = err.delta_a.resolve();
    const auto db = err.delta_b.resolve();
    double pref = 1.0;
    for (int i = 0; i < 3; ++i) pref *= std::sqrt(ell_sq(i) / (ell_sq(i) + 2.0));
    const double sa = 1.0 / (ell_sq(e_a - 1) + 2.0);
    const double sb = 1.0 / (ell_sq(e_b - 1) + 2.0);
    const double ba = std::sqrt(0.5 - sa);
    const double bb = std::sqrt(0.5 - sb);
    const GaussHermite gh = GaussHermite::make(order);
    const double inv_sqrt2 = 0.7071067811865475244;
    double acc = 0.0;
    for (Eigen::Index i1 = 0; i1 < gh.nodes.size(); ++i1)
        for (Eigen::Index i2 = 0; i2 < gh.nodes.size(); ++i2)
            for (Eigen::Index j1 = 0; j1 < gh.nodes.size(); ++j1)
                for (Eigen::Index j2 = 0; j2 < gh.nodes.size(); ++j2) {
                    const double xa = inv_sqrt2 * gh.nodes(i1) + ba * gh.nodes(i2);
                    const double xap = inv_sqrt2 * gh.nodes(i1) - ba * gh.nodes(i2);
                    const double xb = inv_sqrt2 * gh.nodes(j1) + bb * gh.nodes(j2);
                    const double xbp = inv_sqrt2 * gh.nodes(j1) - bb * gh.nodes(j2);
                    acc += gh.weights(i1) * gh.weights(i2) * gh.weights(j1) * gh.weights(j2) *
                           da(xa) * da(xap) * db(xb) * db(xbp);
                }
    return pref * acc;
}

// ---------------------------------------------------------------------------
// Analytic SNR curve over a lengthscale grid.
// ---------------------------------------------------------------------------

struct OracleSnrPoint {
    double ell_sq = 0.0;
    double kci = 0.0;
    double var_un = 0.0;
    double nu1 = 0.0;
    double snr = 0.0;
};

struct OracleSnrCurve {
    std::vector<OracleSnrPoint> points;
    std::size_t argmax = 0;
};

/// Per candidate: closed-form KCI and variance, and SNR = KCI / sqrt(4 nu1/n),
/// the leading asymptotic standard deviation under the alternative.
inline OracleSnrCurve oracle_snr_curve(double tau, double beta, const std::vector<double>& grid,
                                       Eigen::Index n) {
    if (grid.empty()) throw config_error("oracle_snr_curve: empty grid");
    OracleSnrCurve curve;
    curve.points.reserve(grid.size());
    for (double ell_sq : grid) {
        const VarianceComponents vc = oracle_variance(tau, beta, ell_sq, n);
        OracleSnrPoint pt;
        pt.ell_sq = ell_sq;
        pt.kci = vc.moments.u_mean;
        pt.var_un = vc.moments.var_un;
        pt.nu1 = vc.moments.nu1;
        const double denom_sq = 4.0 * vc.moments.nu1 / static_cast<double>(n);
        if (!(denom_sq > 0.0))
            throw numerical_error("oracle_snr_curve: zero denominator (tau or beta is zero?)");
        pt.snr = pt.kci / std::sqrt(denom_sq);
        if (!curve.points.empty() && pt.snr > curve.points[curve.argmax].snr)
            curve.argmax = curve.points.size();
        curve.points.push_back(pt);
    }
    return curve;
}

// ---------------------------------------------------------------------------
// True-embedding residuals and centered Grams (known mean functions).
// ---------------------------------------------------------------------------

/// Residuals a - f_a(e_a' c), b - f_b(e_b' c); with linear A/B kernels the
/// centered Grams are the outer products of these vectors.
inline std::pair<Vector, Vector> true_residuals(const Dataset& ds, const ScenarioConfig& cfg) {
    cfg.validate();
    const auto fa = resolve_mean_fn(cfg.f_a);
    const auto fb = resolve_mean_fn(cfg.f_b);
    const Eigen::Index n = ds.n();
    Vector ra(n), rb(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        ra(i) = ds.a(i, 0) - fa(ds.c(i, cfg.e_a - 1));
        rb(i) = ds.b(i, 0) - fb(ds.c(i, cfg.e_b - 1));
    }
    return {ra, rb};
}

/// Residuals against contaminated regressions mu + Delta: the injected-error
/// statistic uses a_i - f_a(.) - Delta_a(e_a' c_i).
inline std::pair<Vector, Vector> noisy_residuals(const Dataset& ds, const ScenarioConfig& cfg,
                                                 const RegressionErrorSpec& err) {
    auto [ra, rb] = true_residuals(ds, cfg);
    const auto da = err.delta_a.resolve();
    const auto db = err.delta_b.resolve();
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        ra(i) -= da(ds.c(i, cfg.e_a - 1));
        rb(i) -= db(ds.c(i, cfg.e_b - 1));
    }
    return {ra, rb};
}

enum class Target { a, b };

/// Centered Gram for a Gaussian target kernel with the *true* embedding of
/// A | C = c ~ N(f(c), tau^2); Gaussian convolution gives every inner product
/// in closed form:
///   <mu(c), phi(t)>   = sqrt(l^2/(l^2+tau^2))  exp(-(t - f(c))^2 / (2(l^2+tau^2)))
///   <mu(c), mu(c')>   = sqrt(l^2/(l^2+2tau^2)) exp(-(f(c)-f(c'))^2 / (2(l^2+2tau^2))).
inline Matrix true_centered_gram_gaussian(const Dataset& ds, const ScenarioConfig& cfg,
                                          Target target, double lengthscale) {
    cfg.validate();
    if (!(lengthscale > 0.0))
        throw config_error("true_centered_gram_gaussian: lengthscale must be positive");
    const bool is_a = target == Target::a;
    const auto f = resolve_mean_fn(is_a ? cfg.f_a : cfg.f_b);
    const int coord = (is_a ? cfg.e_a : cfg.e_b) - 1;
    const Matrix& t = is_a ? ds.a : ds.b;
    const Eigen::Index n = ds.n();
    const double l2 = lengthscale * lengthscale;
    const double tau2 = cfg.tau * cfg.tau;
    const double cross_var = l2 + tau2;
    const double mumu_var = l2 + 2.0 * tau2;
    const double cross_amp = std::sqrt(l2 / cross_var);
    const double mumu_amp = std::sqrt(l2 / mumu_var);

    Vector means(n);
    for (Eigen::Index i = 0; i < n; ++i) means(i) = f(ds.c(i, coord));

    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double dt = t(i, 0) - t(j, 0);
            const double raw = std::exp(-dt * dt / (2.0 * l2));
            const double dij = t(j, 0) - means(i);
            const double dji = t(i, 0) - means(j);
            const double cross_ij = cross_amp * std::exp(-dij * dij / (2.0 * cross_var));
            const double cross_ji = cross_amp * std::exp(-dji * dji / (2.0 * cross_var));
            const double dm = means(i) - means(j);
            const double mumu = mumu_amp * std::exp(-dm * dm / (2.0 * mumu_var));
            const double v = raw - cross_ij - cross_ji + mumu;
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

}  // namespace kcit
