#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "kcit/calibration.hpp"
#include "kcit/cme.hpp"
#include "kcit/errors.hpp"
#include "kcit/kernels.hpp"
#include "kcit/selection.hpp"
#include "kcit/statistics.hpp"
#include "kcit/synthetic.hpp"

namespace kcit {

enum class Method { kci, kci_powermax, gcm, wgcm, hoeffding_true_embeddings };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::kci: return "kci";
        case Method::kci_powermax: return "kci-powermax";
        case Method::gcm: return "gcm";
        case Method::wgcm: return "wgcm";
        case Method::hoeffding_true_embeddings: return "hoeffding-true-embeddings";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "kci") return Method::kci;
    if (s == "kci-powermax") return Method::kci_powermax;
    if (s == "gcm") return Method::gcm;
    if (s == "wgcm") return Method::wgcm;
    if (s == "hoeffding-true-embeddings") return Method::hoeffding_true_embeddings;
    throw config_error("unknown method: " + s);
}

struct TestConfig {
    Eigen::Index train_size = 200;
    Eigen::Index test_size = 200;
    double alpha = 0.05;
    Method method = Method::kci;

    KernelSpec kernel_a = KernelSpec::linear();
    KernelSpec kernel_b = KernelSpec::linear();
    double ell_sq_c = 1.0;  // fixed k_C for method == kci (and the bound tools)

    SelectionConfig selection;           // k_C search (kci-powermax)
    BootstrapConfig bootstrap;           // null calibration
    std::vector<double> ridge_grid;      // LOO ridge candidates
    std::vector<double> lengthscale_multipliers;  // LOO kernel grid around the median
    Eigen::Index loo_max_points = 256;   // LOO selection subsample cap (fit uses all)

    std::string weight_fn = "sign";  // wgcm weight function
    double weight_const = 1.0;

    std::uint64_t master_seed = 0;

    TestConfig() {
        selection.grid = log_spaced(1e-2, 1e2, 20);
        ridge_grid = log_spaced(1e-6, 10.0, 10);
        lengthscale_multipliers = {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    }

    static std::vector<double> log_spaced(double lo, double hi, int count) {
        std::vector<double> out;
        out.reserve(count);
        if (count == 1) {
            out.push_back(lo);
            return out;
        }
        const double step = (std::log(hi) - std::log(lo)) / (count - 1);
        for (int i = 0; i < count; ++i) out.push_back(std::exp(std::log(lo) + step * i));
        return out;
    }

    void validate() const {
        if (train_size < 4 || test_size < 4)
            throw config_error("TestConfig: train and test sizes must be >= 4");
        if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("TestConfig: alpha not in (0,1)");
        if (method == Method::hoeffding_true_embeddings) {
            for (const KernelSpec* k : {&kernel_a, &kernel_b})
                if (k->kind != KernelKind::gaussian && k->kind != KernelKind::constant)
                    throw config_error(
                        "TestConfig: the hoeffding method requires bounded kernels on A and B");
        }
    }
};

/// Train rows of a dataset; selection and fitting read only this.
struct TrainSplit {
    Matrix a, b, c;
};

/// Test rows, behind counting accessors: the pipeline asserts the statistic
/// phase is the first reader. Each test run is single-threaded internally,
/// so a plain counter suffices.
class TestSplit {
  public:
    TestSplit(Matrix a, Matrix b, Matrix c)
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {}

    const Matrix& a() const { ++reads_; return a_; }
    const Matrix& b() const { ++reads_; return b_; }
    const Matrix& c() const { ++reads_; return c_; }
    Eigen::Index n() const { return c_.rows(); }
    long reads() const { return reads_; }

  private:
    Matrix a_, b_, c_;
    mutable long reads_ = 0;
};

struct TestResult {
    double statistic = 0.0;
    double pvalue = 1.0;
    bool reject = false;
    std::optional<KernelSpec> selected_kc;

    // diagnostics
    std::vector<SnrPoint> snr_curve;
    LooSelection loo_a, loo_b;
    double threshold = 0.0;  // hoeffding path
    long test_reads_before_statistic = -1;
    double selected_ell_sq = 0.0;
};

namespace detail {

inline std::pair<TrainSplit, TestSplit> split_dataset(const Dataset& ds, Eigen::Index m,
                                                      Eigen::Index n) {
    if (ds.n() < m + n) throw config_error("split_dataset: dataset smaller than m + n");
    TrainSplit train{ds.a.topRows(m), ds.b.topRows(m), ds.c.topRows(m)};
    TestSplit test(ds.a.middleRows(m, n), ds.b.middleRows(m, n), ds.c.middleRows(m, n));
    return {std::move(train), std::move(test)};
}

inline std::vector<KernelSpec> regression_grid_for(const Matrix& train_c,
                                                   const std::vector<double>& multipliers) {
    const double med = median_heuristic(train_c);
    std::vector<KernelSpec> grid;
    grid.reserve(multipliers.size());
    for (double mult : multipliers)
        grid.push_back(KernelSpec::gaussian(med * mult, train_c.cols()));
    return grid;
}

inline KernelSpec target_kernel_for(const KernelSpec& configured, const Matrix& train_targets) {
    if (configured.kind != KernelKind::gaussian || configured.lengthscales.size() > 0)
        return configured;
    // gaussian requested without an explicit lengthscale: median heuristic
    KernelSpec k = configured;
    k.lengthscales = Vector::Constant(train_targets.cols(), median_heuristic(train_targets));
    return k;
}

struct FittedCmes {
    CmeModel cme_a, cme_b;
    LooSelection loo_a, loo_b;
};

inline FittedCmes fit_both_cmes(const TrainSplit& train, const TestConfig& cfg) {
    const Eigen::Index m = train.c.rows();
    const Eigen::Index m_loo = std::min(m, cfg.loo_max_points);
    const Matrix loo_c = train.c.topRows(m_loo);

    FittedCmes out;
    const KernelSpec ka = target_kernel_for(cfg.kernel_a, train.a);
    const KernelSpec kb = target_kernel_for(cfg.kernel_b, train.b);
    if (train.c.cols() == 1) {
        const std::vector<KernelSpec> reg_grid =
            regression_grid_for(train.c, cfg.lengthscale_multipliers);
        out.loo_a = loo_select(loo_c, train.a.topRows(m_loo), reg_grid, ka, cfg.ridge_grid);
        out.loo_b = loo_select(loo_c, train.b.topRows(m_loo), reg_grid, kb, cfg.ridge_grid);
    } else {
        // per-dimension lengthscales: the mean functions typically depend on
        // a few coordinates, and widening the rest is what makes the
        // regressions accurate
        out.loo_a = loo_select_ard(loo_c, train.a.topRows(m_loo), ka, cfg.ridge_grid,
                                   cfg.lengthscale_multipliers);
        out.loo_b = loo_select_ard(loo_c, train.b.topRows(m_loo), kb, cfg.ridge_grid,
                                   cfg.lengthscale_multipliers);
    }
    out.cme_a = fit_cme(train.c, train.a, out.loo_a.kernel, ka, out.loo_a.ridge);
    out.cme_b = fit_cme(train.c, train.b, out.loo_b.kernel, kb, out.loo_b.ridge);
    return out;
}

inline KernelSpec fixed_kc_spec(const TestConfig& cfg, Eigen::Index dim_c) {
    if (std::isinf(cfg.ell_sq_c)) return KernelSpec::constant();
    return KernelSpec::gaussian_sq(Vector::Constant(dim_c, cfg.ell_sq_c));
}

}  // namespace detail

/// One full test on a pre-generated dataset (first m rows train, next n test).
/// The scenario is required by the hoeffding path, which needs the true mean
/// functions; every other method ignores it.
inline TestResult run_single_test(const Dataset& ds, const TestConfig& cfg,
                                  const std::optional<ScenarioConfig>& scenario = std::nullopt,
                                  std::uint64_t run_seed = 0) {
    cfg.validate();
    auto [train, test] = detail::split_dataset(ds, cfg.train_size, cfg.test_size);
    const Eigen::Index n = cfg.test_size;
    TestResult result;

    if (cfg.method == Method::hoeffding_true_embeddings) {
        if (!scenario)
            throw config_error("run_single_test: hoeffding method needs a scenario");
        result.test_reads_before_statistic = test.reads();
        const Matrix& test_a = test.a();
        const Matrix& test_b = test.b();
        const Matrix& test_c = test.c();
        Dataset test_ds{test_a, test_b, test_c};
        const double ell_a = cfg.kernel_a.kind == KernelKind::gaussian &&
                                     cfg.kernel_a.lengthscales.size() > 0
                                 ? cfg.kernel_a.lengthscales(0)
                                 : 1.0;
        const double ell_b = cfg.kernel_b.kind == KernelKind::gaussian &&
                                     cfg.kernel_b.lengthscales.size() > 0
                                 ? cfg.kernel_b.lengthscales(0)
                                 : 1.0;
        const Matrix ka_c = true_centered_gram_gaussian(test_ds, *scenario, Target::a, ell_a);
        const Matrix kb_c = true_centered_gram_gaussian(test_ds, *scenario, Target::b, ell_b);
        const Matrix kc = gram(detail::fixed_kc_spec(cfg, test_c.cols()), test_c).values;
        const HMatrix h = make_h_matrix(kc, ka_c, kb_c);
        result.statistic = kci_ustat(h);
        result.threshold = hoeffding_threshold(1.0, 1.0, 1.0, n, cfg.alpha);
        result.pvalue = hoeffding_pvalue(result.statistic, 1.0, 1.0, 1.0, n);
        result.reject = hoeffding_test(result.statistic, result.threshold);
        return result;
    }

    // regression phase: training split only
    const detail::FittedCmes fitted = detail::fit_both_cmes(train, cfg);
    result.loo_a = fitted.loo_a;
    result.loo_b = fitted.loo_b;

    if (cfg.method == Method::gcm || cfg.method == Method::wgcm) {
        result.test_reads_before_statistic = test.reads();
        const Vector resid_a = test.a().col(0) - fitted.cme_a.predict_mean(test.c());
        const Vector resid_b = test.b().col(0) - fitted.cme_b.predict_mean(test.c());
        GcmResult g;
        if (cfg.method == Method::gcm) {
            g = gcm_statistic(resid_a, resid_b);
        } else {
            const WeightFn w = resolve_weight_fn(cfg.weight_fn, cfg.weight_const);
            Vector weights(n);
            const Matrix& test_c = test.c();
            for (Eigen::Index i = 0; i < n; ++i)
                weights(i) = w(test_c.row(i).transpose());
            g = wgcm_statistic(resid_a, resid_b, weights);
        }
        result.statistic = g.statistic;
        result.pvalue = 2.0 * (1.0 - normal_cdf(std::abs(g.statistic)));
        result.reject = result.pvalue < cfg.alpha;
        return result;
    }

    // conditioning kernel: fixed from config, or SNR-maximized on the train split
    KernelSpec kc_spec = detail::fixed_kc_spec(cfg, train.c.cols());
    if (cfg.method == Method::kci_powermax) {
        SelectionResult sel =
            select_kc(train.c, train.a, train.b, fitted.cme_a, fitted.cme_b, cfg.selection);
        kc_spec = sel.best;
        result.snr_curve = std::move(sel.curve);
        result.selected_kc = kc_spec;
        result.selected_ell_sq =
            kc_spec.lengthscales(0) * kc_spec.lengthscales(0);
    }

    result.test_reads_before_statistic = test.reads();
    const Matrix& test_a = test.a();
    const Matrix& test_b = test.b();
    const Matrix& test_c = test.c();
    const Matrix ka_c = centered_test_gram(fitted.cme_a, test_c, test_a).values;
    const Matrix kb_c = centered_test_gram(fitted.cme_b, test_c, test_b).values;
    const Matrix kc = gram(kc_spec, test_c).values;
    const Matrix L = kb_c.cwiseProduct(kc);
    result.statistic = kci_hsic_unbiased(ka_c, L);

    BootstrapConfig bs = cfg.bootstrap;
    bs.seed = substream_seed(run_seed == 0 ? cfg.master_seed : run_seed, 0x626f6f74ULL);
    const BootstrapResult boot = wild_bootstrap_pvalue(ka_c, L, result.statistic, bs);
    result.pvalue = boot.pvalue;
    result.reject = result.pvalue < cfg.alpha;
    return result;
}

/// Generate fresh data for one repetition and test it. The per-repetition
/// seed is master_seed XOR the repetition index.
inline TestResult run_single_test(const ScenarioConfig& scenario, const TestConfig& cfg,
                                  std::uint64_t rep_index = 0) {
    const std::uint64_t seed = cfg.master_seed ^ rep_index;
    const Dataset ds = generate(scenario, cfg.train_size + cfg.test_size,
                                substream_seed(seed, 0x64617461ULL));
    return run_single_test(ds, cfg, scenario, seed);
}

struct ExperimentSummary {
    double rate = 0.0;        // rejection rate
    double std_error = 0.0;   // sqrt(p (1-p) / R)
    std::vector<TestResult> runs;
};

/// Repeat the test on fresh data. Repetitions are distributed over threads
/// and written to indexed slots, so the summary does not depend on the
/// parallelism degree.
inline ExperimentSummary run_experiment(const TestConfig& cfg, const ScenarioConfig& scenario,
                                        int repetitions, int threads = 1) {
    if (repetitions < 1) throw config_error("run_experiment: need repetitions >= 1");
    ExperimentSummary summary;
    summary.runs.resize(repetitions);
    threads = std::max(1, threads);
    std::atomic<int> next{0};
    std::vector<std::string> failures(threads);
    auto worker = [&](int tid) {
        try {
            for (;;) {
                const int r = next.fetch_add(1);
                if (r >= repetitions) break;
                summary.runs[r] =
                    run_single_test(scenario, cfg, static_cast<std::uint64_t>(r));
            }
        } catch (const std::exception& e) {
            failures[tid] = e.what();
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& t : pool) t.join();
    }
    for (const std::string& f : failures)
        if (!f.empty()) throw numerical_error("run_experiment: repetition failed: " + f);

    int rejections = 0;
    for (const TestResult& r : summary.runs) rejections += r.reject ? 1 : 0;
    const double rd = static_cast<double>(repetitions);
    summary.rate = rejections / rd;
    summary.std_error = std::sqrt(summary.rate * (1.0 - summary.rate) / rd);
    return summary;
}

enum class SweepAxis { ell_sq, beta, train_size };

inline std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::ell_sq: return "ell_sq";
        case SweepAxis::beta: return "beta";
        case SweepAxis::train_size: return "train_size";
    }
    return "?";
}

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "ell_sq") return SweepAxis::ell_sq;
    if (s == "beta") return SweepAxis::beta;
    if (s == "train_size") return SweepAxis::train_size;
    throw config_error("unknown sweep axis: " + s);
}

struct SweepRow {
    double value = 0.0;
    double rate = 0.0;
    double std_error = 0.0;
    double oracle_kci = std::numeric_limits<double>::quiet_NaN();
    double oracle_var = std::numeric_limits<double>::quiet_NaN();
    double oracle_snr = std::numeric_limits<double>::quiet_NaN();
};

/// One run_experiment per axis value; rows carry the closed-form oracle
/// values where the scenario admits them (1-D, alternative with beta > 0 for
/// the SNR column).
inline std::vector<SweepRow> sweep(TestConfig cfg, ScenarioConfig scenario, SweepAxis axis,
                                   const std::vector<double>& values, int repetitions,
                                   int threads = 1) {
    if (values.empty()) throw config_error("sweep: need at least one value");
    std::vector<SweepRow> rows;
    rows.reserve(values.size());
    for (double v : values) {
        TestConfig run_cfg = cfg;
        ScenarioConfig run_scn = scenario;
        switch (axis) {
            case SweepAxis::ell_sq: run_cfg.ell_sq_c = v; break;
            case SweepAxis::beta: run_scn.beta = v; break;
            case SweepAxis::train_size:
                run_cfg.train_size = static_cast<Eigen::Index>(v);
                break;
        }
        const ExperimentSummary s = run_experiment(run_cfg, run_scn, repetitions, threads);
        SweepRow row;
        row.value = v;
        row.rate = s.rate;
        row.std_error = s.std_error;
        if (run_scn.dim_c == 1) {
            const double ell = run_cfg.ell_sq_c;
            const double beta_eff =
                run_scn.hypothesis == Hypothesis::alternative ? run_scn.beta : 0.0;
            row.oracle_kci = oracle_kci(run_scn.tau, beta_eff, ell);
            const VarianceComponents vc =
                oracle_variance(run_scn.tau, beta_eff, ell, run_cfg.test_size);
            row.oracle_var = vc.moments.var_un;
            if (vc.moments.nu1 > 0.0)
                row.oracle_snr =
                    row.oracle_kci /
                    std::sqrt(4.0 * vc.moments.nu1 / static_cast<double>(run_cfg.test_size));
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace kcit
