#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "kcit/cme.hpp"
#include "kcit/errors.hpp"
#include "kcit/kernels.hpp"
#include "kcit/statistics.hpp"

namespace kcit {

struct SelectionConfig {
    std::vector<double> grid;       // candidate squared lengthscales (scalar C)
    double reg_const = 1e-5;        // the ell in lambda = ell * n^{-1/3}
    bool refine = false;            // golden-section refinement around the grid argmax
    bool use_raw_ustat = false;     // raw U-statistic numerator instead of the HSIC form
    int coord_sweeps = 2;           // cyclic coordinate-descent sweeps (multi-dim C)
    std::vector<double> dim_multipliers;  // per-dimension grid = mult * median^2 (multi-dim)

    void validate() const {
        if (grid.empty()) throw config_error("SelectionConfig: empty grid");
        for (double g : grid)
            if (!(g > 0.0)) throw config_error("SelectionConfig: grid entries must be positive");
        if (reg_const < 0.0) throw config_error("SelectionConfig: reg_const must be nonnegative");
    }
};

struct SnrPoint {
    double ell_sq = 0.0;
    double snr = 0.0;
    double u_stat = 0.0;  // the numerator actually used for the SNR
    double sigma2 = 0.0;
    int dim = 0;  // varying dimension (multi-dim search); 0 for scalar C
};

struct SelectionResult {
    KernelSpec best;
    double best_snr = 0.0;
    std::vector<SnrPoint> curve;
};

namespace detail {

struct SnrEvaluator {
    const Matrix& ka_c;
    const Matrix& kb_c;
    double lambda_reg;
    bool use_raw;

    // h built from a ready C Gram; numerator per config, sigma^2 from h.
    SnrPoint eval(const Matrix& k_c, double ell_sq_label, int dim_label) const {
        HMatrix h = make_h_matrix(k_c, ka_c, kb_c);
        SnrPoint pt;
        pt.ell_sq = ell_sq_label;
        pt.dim = dim_label;
        pt.sigma2 = empirical_variance_sigma2(h);
        pt.u_stat = use_raw ? kci_ustat(h) : kci_hsic_unbiased(ka_c, kb_c.cwiseProduct(k_c));
        const double denom_sq = pt.sigma2 + lambda_reg;
        if (!(denom_sq > 0.0)) throw numerical_error("select_kc: zero SNR denominator");
        pt.snr = pt.u_stat / std::sqrt(denom_sq);
        return pt;
    }
};

inline double golden_section_log(double lo, double hi,
                                 const std::function<double(double)>& value, int iters,
                                 double* best_x, double* best_v) {
    const double phi = 0.6180339887498948482;
    double a = std::log(lo), b = std::log(hi);
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = value(std::exp(x1)), f2 = value(std::exp(x2));
    for (int it = 0; it < iters; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = value(std::exp(x2));
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = value(std::exp(x1));
        }
    }
    if (f1 >= f2) {
        *best_x = std::exp(x1);
        *best_v = f1;
    } else {
        *best_x = std::exp(x2);
        *best_v = f2;
    }
    return *best_v;
}

}  // namespace detail

/// Choose the conditioning kernel k_C on the training split by maximizing the
/// empirical SNR, with regularizer lambda = reg_const * n^{-1/3}. The centered
/// Grams of both embeddings are built once; each candidate only rebuilds K_C.
/// Ties go to the larger squared lengthscale. With cfg.refine, a
/// golden-section search on log ell_sq runs between the grid neighbors of the
/// argmax and the refined value is kept only if it does not lose to the grid.
///
/// Multi-dimensional C searches per-dimension grids (dim_multipliers around
/// the per-coordinate median heuristic) by cyclic coordinate descent.
inline SelectionResult select_kc(const Eigen::Ref<const Matrix>& train_c,
                                 const Eigen::Ref<const Matrix>& train_a,
                                 const Eigen::Ref<const Matrix>& train_b, const CmeModel& cme_a,
                                 const CmeModel& cme_b, const SelectionConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = train_c.rows();
    if (n < 4) throw config_error("select_kc: need at least 4 training points");
    const double lambda_reg = cfg.reg_const * std::pow(static_cast<double>(n), -1.0 / 3.0);

    const Matrix ka_c = centered_test_gram(cme_a, train_c, train_a).values;
    const Matrix kb_c = centered_test_gram(cme_b, train_c, train_b).values;
    detail::SnrEvaluator ev{ka_c, kb_c, lambda_reg, cfg.use_raw_ustat};

    SelectionResult result;

    if (train_c.cols() == 1) {
        const Matrix d2 = squared_distance_matrix(train_c);
        std::size_t best = 0;
        bool any = false;
        for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
            SnrPoint pt;
            try {
                pt = ev.eval(gaussian_gram_from_d2(d2, cfg.grid[i]), cfg.grid[i], 0);
            } catch (const numerical_error&) {
                continue;  // degenerate candidate
            }
            result.curve.push_back(pt);
            if (!any || pt.snr > result.best_snr ||
                (pt.snr == result.best_snr && pt.ell_sq > cfg.grid[best])) {
                best = i;
                result.best_snr = pt.snr;
                any = true;
            }
        }
        if (!any) throw numerical_error("select_kc: every candidate was degenerate");
        double best_ell = cfg.grid[best];
        if (cfg.refine && cfg.grid.size() >= 2) {
            const double lo = best > 0 ? cfg.grid[best - 1] : cfg.grid[best] / 4.0;
            const double hi =
                best + 1 < cfg.grid.size() ? cfg.grid[best + 1] : cfg.grid[best] * 4.0;
            double rx = best_ell, rv = result.best_snr;
            detail::golden_section_log(
                lo, hi,
                [&](double ell) { return ev.eval(gaussian_gram_from_d2(d2, ell), ell, 0).snr; },
                24, &rx, &rv);
            if (rv >= result.best_snr) {
                best_ell = rx;
                result.best_snr = rv;
            }
        }
        result.best = KernelSpec::gaussian_sq(best_ell);
        return result;
    }

    // multi-dimensional C: coordinate descent over per-dimension grids
    const Eigen::Index dim = train_c.cols();
    std::vector<double> mults = cfg.dim_multipliers.empty()
                                    ? cfg.grid
                                    : cfg.dim_multipliers;
    Vector ell_sq(dim);
    std::vector<Vector> grids(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
        const double med = median_heuristic(train_c.col(d));
        const double base = std::max(med * med, 1e-12);
        ell_sq(d) = base;
        grids[d].resize(static_cast<Eigen::Index>(mults.size()));
        for (std::size_t i = 0; i < mults.size(); ++i)
            grids[d](static_cast<Eigen::Index>(i)) = base * mults[i];
    }
    std::vector<Matrix> d2_dim(dim);
    for (Eigen::Index d = 0; d < dim; ++d) d2_dim[d] = squared_distance_matrix(train_c.col(d));

    auto gram_for = [&](const Vector& ls_sq) {
        Matrix arg = Matrix::Zero(n, n);
        for (Eigen::Index d = 0; d < dim; ++d) arg += d2_dim[d] / (2.0 * ls_sq(d));
        return (-arg).array().exp().matrix().eval();
    };

    double best_snr = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int sweep = 0; sweep < cfg.coord_sweeps; ++sweep) {
        for (Eigen::Index d = 0; d < dim; ++d) {
            Vector trial = ell_sq;
            for (Eigen::Index i = 0; i < grids[d].size(); ++i) {
                trial(d) = grids[d](i);
                SnrPoint pt;
                try {
                    pt = ev.eval(gram_for(trial), trial(d), static_cast<int>(d) + 1);
                } catch (const numerical_error&) {
                    continue;
                }
                result.curve.push_back(pt);
                if (!any || pt.snr > best_snr ||
                    (pt.snr == best_snr && trial(d) > ell_sq(d))) {
                    best_snr = pt.snr;
                    ell_sq(d) = trial(d);
                    any = true;
                }
            }
        }
    }
    if (!any) throw numerical_error("select_kc: every candidate was degenerate");
    result.best_snr = best_snr;
    result.best = KernelSpec::gaussian_sq(ell_sq);
    return result;
}

}  // namespace kcit
