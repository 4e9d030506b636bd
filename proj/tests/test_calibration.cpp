#include <catch2/catch.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "kcit/calibration.hpp"
#include "kcit/rng.hpp"
#include "test_helpers.hpp"

using namespace kcit;

TEST_CASE("normal quantile and cdf") {
    CHECK(normal_quantile(0.5) == Approx(0.0).margin(1e-14));
    CHECK(normal_quantile(0.95) == Approx(1.6448536269514722).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_cdf(normal_quantile(0.123)) == Approx(0.123).epsilon(1e-12));
    CHECK_THROWS_AS(normal_quantile(0.0), config_error);
    CHECK_THROWS_AS(normal_quantile(1.0), config_error);
}

TEST_CASE("wild bootstrap p-value sentinels and determinism") {
    Rng rng(101);
    const Matrix k = kcit_test::random_psd(rng, 12);
    const Matrix l = kcit_test::random_psd(rng, 12);
    BootstrapConfig cfg;
    cfg.num_samples = 50;
    cfg.seed = 2718;

    const double inf = std::numeric_limits<double>::infinity();
    CHECK(wild_bootstrap_pvalue(k, l, inf, cfg).pvalue == 0.0);
    CHECK(wild_bootstrap_pvalue(k, l, -inf, cfg).pvalue == 1.0);

    const BootstrapResult r1 = wild_bootstrap_pvalue(k, l, 0.01, cfg);
    const BootstrapResult r2 = wild_bootstrap_pvalue(k, l, 0.01, cfg);
    CHECK(r1.pvalue == r2.pvalue);
    CHECK(r1.samples.isApprox(r2.samples));
}

TEST_CASE("wild bootstrap p-value replays by hand") {
    Rng rng(103);
    const Matrix k = kcit_test::random_psd(rng, 8);
    const Matrix l = kcit_test::random_psd(rng, 8);
    BootstrapConfig cfg;
    cfg.num_samples = 4;
    cfg.seed = 42424242ULL;
    const double observed = 0.002;
    const BootstrapResult res = wild_bootstrap_pvalue(k, l, observed, cfg);

    int exceed = 0;
    for (int s = 0; s < 4; ++s) {
        Rng stream(substream_seed(cfg.seed, s));
        Vector q(8);
        for (Eigen::Index i = 0; i < 8; ++i) q(i) = stream.rademacher();
        const Matrix kt = k.cwiseProduct(q * q.transpose());
        const double v = kci_hsic_unbiased(kt, l);
        CHECK(res.samples(s) == v);
        if (observed < v) ++exceed;
    }
    CHECK(res.pvalue == Approx(exceed / 4.0));
}

TEST_CASE("wild bootstrap simple form has zero mean") {
    Rng rng(107);
    const Matrix h = kcit_test::random_symmetric(rng, 30);
    for (Multiplier mult : {Multiplier::rademacher, Multiplier::gaussian}) {
        const Vector draws = wild_offdiag_samples(h, 10000, mult, 515151);
        std::vector<double> v(draws.data(), draws.data() + draws.size());
        const double mean = kcit_test::mean_of(v);
        const double se = std::sqrt(kcit_test::variance_of(v) / v.size());
        CHECK(std::abs(mean) <= 3.0 * se);
    }
}

TEST_CASE("gaussian wild bootstrap matches the eigenvalue mixture") {
    Rng rng(109);
    const Matrix h = kcit_test::random_psd(rng, 60) * 60.0;  // O(1) entries
    const int draws = 10000;
    const Vector y = wild_centered_quadform_samples(h, draws, 90210);

    Eigen::SelfAdjointEigenSolver<Matrix> es(h / 60.0, Eigen::EigenvaluesOnly);
    const Vector lam = es.eigenvalues();
    Rng mix_rng(777777);
    std::vector<double> mixture(draws);
    for (int s = 0; s < draws; ++s) {
        double acc = 0.0;
        for (Eigen::Index r = 0; r < lam.size(); ++r) {
            const double z = mix_rng.normal();
            acc += lam(r) * (z * z - 1.0);
        }
        mixture[s] = acc;
    }
    std::vector<double> yv(y.data(), y.data() + y.size());
    CHECK(kcit_test::ks_two_sample(yv, mixture) <= 0.03);
}

TEST_CASE("hoeffding threshold and test") {
    CHECK(hoeffding_threshold(1.0, 1.0, 1.0, 101, 0.05) == Approx(5.5386).margin(1e-3));
    CHECK(hoeffding_threshold(1.0, 1.0, 1.0, 50, 1.0 - 1e-12) == Approx(0.0).margin(1e-4));
    CHECK(hoeffding_threshold(1.0, 1.0, 1.0, 2, std::exp(-1.0)) == Approx(32.0).epsilon(1e-12));
    CHECK_THROWS_AS(hoeffding_threshold(1.0, 1.0, 1.0, 100, 0.0), config_error);
    CHECK_THROWS_AS(hoeffding_threshold(1.0, 1.0, 1.0, 100, 1.0), config_error);

    CHECK_FALSE(hoeffding_test(0.0, 5.5386));
    CHECK(hoeffding_test(6.0, 5.5386));
    CHECK_FALSE(hoeffding_test(5.5386, 5.5386));  // strict inequality
}

TEST_CASE("cantelli and normal thresholds") {
    const Eigen::Index n = 100;
    const ThresholdPair t = cantelli_normal_threshold(0.0, 1.0 / (100.0 * 100.0), n, 0.05);
    CHECK(t.q_cantelli == Approx(std::sqrt(19.0)).epsilon(1e-12));
    CHECK(t.q_normal == Approx(1.6448536269514722).epsilon(1e-10));

    const ThresholdPair z = cantelli_normal_threshold(0.37, 0.0, 10, 0.05);
    CHECK(z.q_cantelli == Approx(3.7).epsilon(1e-12));
    CHECK(z.q_normal == Approx(3.7).epsilon(1e-12));

    const ThresholdPair half = cantelli_normal_threshold(0.0, 1.0, 5, 0.5);
    CHECK(half.q_cantelli == Approx(5.0).epsilon(1e-12));          // T1 = 1
    CHECK(half.q_normal == Approx(0.0).margin(1e-12));             // T2 = 0
    CHECK_THROWS_AS(cantelli_normal_threshold(0.0, 1.0, 5, 0.0), config_error);
}

TEST_CASE("cantelli threshold guarantees coverage for skewed simulants") {
    // exponential-like samples with known mean and variance
    Rng rng(113);
    const double rho = 0.05;
    const Eigen::Index n = 50;
    const double mean = 1.0, var = 1.0;  // Exp(1) via inverse cdf
    const ThresholdPair t = cantelli_normal_threshold(mean, var, n, rho);
    int exceed_cantelli = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const double x = -std::log(1.0 - rng.uniform01());
        if (x > t.q_cantelli / static_cast<double>(n)) ++exceed_cantelli;
    }
    const double rate = static_cast<double>(exceed_cantelli) / draws;
    const double se = std::sqrt(rho * (1.0 - rho) / draws);
    CHECK(rate <= rho + 3.0 * se);
}

TEST_CASE("normal threshold is exact for normal simulants") {
    Rng rng(127);
    const double rho = 0.05;
    const Eigen::Index n = 20;
    const double mean = 0.3, sd = 2.0;
    const ThresholdPair t = cantelli_normal_threshold(mean, sd * sd, n, rho);
    int exceed = 0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        const double x = mean + sd * rng.normal();
        if (x > t.q_normal / static_cast<double>(n)) ++exceed;
    }
    const double rate = static_cast<double>(exceed) / draws;
    const double se = std::sqrt(rho * (1.0 - rho) / draws);
    CHECK(std::abs(rate - rho) <= 3.0 * se);
}

TEST_CASE("bootstrap alignment bound") {
    // identity H: eigenvalues of H/n are all 1/n
    const Eigen::Index n = 100;
    HMatrix h;
    h.values = Matrix::Identity(n, n);
    const double var_kci = 2.0 / (static_cast<double>(n) * n * (n - 1.0));  // kvar ~ 1
    const BoundReport rep = bootstrap_alignment_bound(h, 0.0, var_kci);
    CHECK(rep.delta == Approx(0.01).epsilon(1e-12));
    CHECK(rep.r1 == Approx((4.0 / 3.0) * std::sqrt(2.0) * M_PI * M_PI / 10.0).epsilon(1e-12));
    CHECK(rep.r1 == Approx(1.8617).margin(1e-3));  // quoted approximation of the closed form
    CHECK(rep.r3 == Approx(std::pow(2.0 * M_PI, -3.5)).epsilon(1e-15));
    CHECK(rep.bound ==
          Approx(psi_bound(rep.r1 * std::pow(rep.k_var, 1.5) + rep.b_shift +
                           M_PI * std::abs(rep.k_var - 1.0)) +
                 rep.r2 / std::sqrt(rep.k_var) + rep.r3)
              .epsilon(1e-12));
    CHECK_FALSE(rep.negative_eigenvalues);

    CHECK(psi_bound(0.0) == 0.0);

    // rank-1 matrix: delta = 1 -> dominant eigenvalue error
    Rng rng(131);
    const Vector u = kcit_test::random_matrix(rng, 20, 1).col(0);
    HMatrix rank1;
    rank1.values = u * u.transpose();
    CHECK_THROWS_AS(bootstrap_alignment_bound(rank1, 0.0, 1.0), numerical_error);

    // asymmetric input is rejected
    HMatrix asym;
    asym.values = Matrix::Identity(4, 4);
    asym.values(0, 1) = 1e-3;
    CHECK_THROWS_AS(bootstrap_alignment_bound(asym, 0.0, 1.0), numerical_error);

    // indefinite input sets the warning flag
    HMatrix indef;
    indef.values = Matrix::Zero(6, 6);
    indef.values.diagonal() << 1.0, 1.0, 1.0, 1.0, -0.5, 0.4;
    const BoundReport warn = bootstrap_alignment_bound(indef, 0.0, 1.0);
    CHECK(warn.negative_eigenvalues);
}
