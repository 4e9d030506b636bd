#pragma once

#include <string>

#include <json.hpp>

#include "kcit/errors.hpp"
#include "kcit/pipeline.hpp"

namespace kcit {

using json = nlohmann::json;

inline KernelSpec kernel_spec_from_json(const json& j) {
    const std::string kind = j.value("kind", "gaussian");
    if (kind == "linear") return KernelSpec::linear();
    if (kind == "constant") return KernelSpec::constant();
    if (kind == "weight-product")
        return KernelSpec::weight_product(j.value("weight_fn", "identity"),
                                          j.value("weight_const", 1.0));
    if (kind == "gaussian") {
        if (j.contains("ell_sq")) return KernelSpec::gaussian_sq(j["ell_sq"].get<double>());
        if (j.contains("lengthscales")) {
            const auto ls = j["lengthscales"].get<std::vector<double>>();
            Vector v(static_cast<Eigen::Index>(ls.size()));
            for (std::size_t i = 0; i < ls.size(); ++i) v(static_cast<Eigen::Index>(i)) = ls[i];
            return KernelSpec::gaussian(v);
        }
        // lengthscale resolved later from the data (median heuristic)
        KernelSpec k;
        k.kind = KernelKind::gaussian;
        return k;
    }
    throw config_error("kernel_spec_from_json: unknown kind " + kind);
}

inline json kernel_spec_to_json(const KernelSpec& k) {
    json j;
    j["kind"] = to_string(k.kind);
    if (k.kind == KernelKind::gaussian && k.lengthscales.size() > 0) {
        std::vector<double> ls(k.lengthscales.data(),
                               k.lengthscales.data() + k.lengthscales.size());
        j["lengthscales"] = ls;
    }
    if (k.kind == KernelKind::weight_product) {
        j["weight_fn"] = k.weight_fn;
        j["weight_const"] = k.weight_const;
    }
    return j;
}

inline DeltaSpec delta_spec_from_json(const json& j) {
    DeltaSpec d;
    d.name = j.value("name", "zero");
    d.scale = j.value("scale", 0.0);
    d.omega = j.value("omega", 1.0);
    d.center = j.value("center", 0.0);
    d.width = j.value("width", 1.0);
    d.resolve();  // validate the name
    return d;
}

inline ScenarioConfig scenario_from_json(const json& j) {
    ScenarioConfig s;
    s.f_a = j.value("f_a", s.f_a);
    s.f_b = j.value("f_b", s.f_b);
    s.tau = j.value("tau", s.tau);
    s.beta = j.value("beta", s.beta);
    s.hypothesis = hypothesis_from_string(j.value("hypothesis", "null"));
    s.dim_c = j.value("dim_c", s.dim_c);
    s.e_a = j.value("e_a", s.e_a);
    s.e_b = j.value("e_b", s.e_b);
    s.e_c = j.value("e_c", s.e_c);
    s.validate();
    return s;
}

inline RegressionErrorSpec regression_error_from_json(const json& j) {
    RegressionErrorSpec err;
    if (j.contains("delta_a")) err.delta_a = delta_spec_from_json(j["delta_a"]);
    if (j.contains("delta_b")) err.delta_b = delta_spec_from_json(j["delta_b"]);
    return err;
}

inline TestConfig test_config_from_json(const json& j) {
    TestConfig cfg;
    cfg.train_size = j.value("train_size", cfg.train_size);
    cfg.test_size = j.value("test_size", cfg.test_size);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.method = method_from_string(j.value("method", "kci"));
    if (j.contains("kernel_a")) cfg.kernel_a = kernel_spec_from_json(j["kernel_a"]);
    if (j.contains("kernel_b")) cfg.kernel_b = kernel_spec_from_json(j["kernel_b"]);
    cfg.ell_sq_c = j.value("ell_sq_c", cfg.ell_sq_c);
    if (j.contains("selection")) {
        const json& sel = j["selection"];
        if (sel.contains("grid")) cfg.selection.grid = sel["grid"].get<std::vector<double>>();
        cfg.selection.reg_const = sel.value("reg_const", cfg.selection.reg_const);
        cfg.selection.refine = sel.value("refine", cfg.selection.refine);
        cfg.selection.use_raw_ustat = sel.value("use_raw_ustat", cfg.selection.use_raw_ustat);
        cfg.selection.coord_sweeps = sel.value("coord_sweeps", cfg.selection.coord_sweeps);
        if (sel.contains("dim_multipliers"))
            cfg.selection.dim_multipliers = sel["dim_multipliers"].get<std::vector<double>>();
    }
    if (j.contains("bootstrap")) {
        const json& bs = j["bootstrap"];
        cfg.bootstrap.num_samples = bs.value("num_samples", cfg.bootstrap.num_samples);
        cfg.bootstrap.multiplier =
            multiplier_from_string(bs.value("multiplier", "rademacher"));
        cfg.bootstrap.plus_one_correction =
            bs.value("plus_one_correction", cfg.bootstrap.plus_one_correction);
    }
    if (j.contains("ridge_grid")) cfg.ridge_grid = j["ridge_grid"].get<std::vector<double>>();
    if (j.contains("lengthscale_multipliers"))
        cfg.lengthscale_multipliers = j["lengthscale_multipliers"].get<std::vector<double>>();
    cfg.loo_max_points = j.value("loo_max_points", cfg.loo_max_points);
    cfg.weight_fn = j.value("weight_fn", cfg.weight_fn);
    cfg.weight_const = j.value("weight_const", cfg.weight_const);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.validate();
    return cfg;
}

inline json test_result_to_json(const TestResult& r) {
    json j;
    j["statistic"] = r.statistic;
    j["pvalue"] = r.pvalue;
    j["reject"] = r.reject;
    if (r.selected_kc) j["selected_kc"] = kernel_spec_to_json(*r.selected_kc);
    if (r.threshold > 0.0) j["threshold"] = r.threshold;
    j["loo_a"] = {{"ridge", r.loo_a.ridge}, {"loo_error", r.loo_a.loo_error}};
    j["loo_b"] = {{"ridge", r.loo_b.ridge}, {"loo_error", r.loo_b.loo_error}};
    j["test_reads_before_statistic"] = r.test_reads_before_statistic;
    if (!r.snr_curve.empty()) {
        json curve = json::array();
        for (const SnrPoint& p : r.snr_curve)
            curve.push_back({{"lengthscale_sq", p.ell_sq},
                             {"snr", p.snr},
                             {"u_stat", p.u_stat},
                             {"sigma2", p.sigma2},
                             {"dim", p.dim}});
        j["snr_curve"] = curve;
    }
    return j;
}

}  // namespace kcit
