// Command-line front end: generate synthetic data, run single tests,
// repeated experiments, sweeps, analytic oracle curves, and the
// threshold/bootstrap bound reports. Configuration is a JSON file (see
// README); a few common fields can be overridden by flags.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "kcit/config_json.hpp"
#include "kcit/io.hpp"
#include "kcit/pipeline.hpp"

namespace {

using kcit::json;

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw kcit::config_error("cannot open config: " + path);
    json j;
    in >> j;
    return j;
}

void emit(const std::string& out_path, const std::string& contents) {
    if (out_path.empty())
        std::cout << contents;
    else
        kcit::write_file(out_path, contents);
}

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int repetitions = 0;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--out", args.out_path, "output path (default: stdout)");
    cmd->add_option("--seed", args.seed, "master seed override")
        ->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--repetitions", args.repetitions, "repetition count override");
    cmd->add_option("--threads", args.threads, "worker threads");
}

kcit::ScenarioConfig scenario_from(const json& cfg) {
    return cfg.contains("scenario") ? kcit::scenario_from_json(cfg["scenario"])
                                    : kcit::ScenarioConfig{};
}

kcit::TestConfig test_from(const json& cfg, const CommonArgs& args) {
    kcit::TestConfig t = cfg.contains("test") ? kcit::test_config_from_json(cfg["test"])
                                              : kcit::TestConfig{};
    if (args.seed_set) t.master_seed = args.seed;
    return t;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kcit: kernel conditional independence testing toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    Eigen::Index gen_n = 200;

    CLI::App* cmd_generate = app.add_subcommand("generate", "scenario -> CSV dataset");
    add_common(cmd_generate, args);
    cmd_generate->add_option("-n,--num-samples", gen_n, "rows to generate");

    CLI::App* cmd_test = app.add_subcommand("test", "single test -> JSON result");
    add_common(cmd_test, args);
    std::string data_path;
    cmd_test->add_option("--data", data_path, "CSV dataset instead of a generated scenario");

    CLI::App* cmd_experiment =
        app.add_subcommand("experiment", "repeated tests -> CSV summary");
    add_common(cmd_experiment, args);

    CLI::App* cmd_sweep = app.add_subcommand("sweep", "axis sweep -> CSV");
    add_common(cmd_sweep, args);

    CLI::App* cmd_oracle = app.add_subcommand("oracle", "analytic curves -> CSV");
    add_common(cmd_oracle, args);

    CLI::App* cmd_bounds = app.add_subcommand("bounds", "threshold/bootstrap bounds -> JSON");
    add_common(cmd_bounds, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const json cfg = load_config(args.config_path);

        if (cmd_generate->parsed()) {
            const kcit::ScenarioConfig scenario = scenario_from(cfg);
            const std::uint64_t seed = args.seed_set ? args.seed : cfg.value("seed", 0ULL);
            const kcit::Dataset ds = kcit::generate(scenario, gen_n, seed);
            emit(args.out_path, kcit::dataset_to_csv(ds));
        } else if (cmd_test->parsed()) {
            const kcit::TestConfig tc = test_from(cfg, args);
            kcit::TestResult result;
            if (!data_path.empty()) {
                std::ifstream in(data_path);
                if (!in) throw kcit::config_error("cannot open dataset: " + data_path);
                const kcit::Dataset ds = kcit::dataset_from_csv(in);
                std::optional<kcit::ScenarioConfig> scn;
                if (cfg.contains("scenario")) scn = scenario_from(cfg);
                result = kcit::run_single_test(ds, tc, scn, tc.master_seed);
            } else {
                result = kcit::run_single_test(scenario_from(cfg), tc, 0);
            }
            json out = kcit::test_result_to_json(result);
            out["method"] = kcit::to_string(tc.method);
            emit(args.out_path, out.dump(2) + "\n");
        } else if (cmd_experiment->parsed()) {
            const kcit::TestConfig tc = test_from(cfg, args);
            const kcit::ScenarioConfig scenario = scenario_from(cfg);
            int reps = args.repetitions > 0
                           ? args.repetitions
                           : cfg.value("experiment", json::object()).value("repetitions", 100);
            const kcit::ExperimentSummary sum =
                kcit::run_experiment(tc, scenario, reps, args.threads);
            std::ostringstream out;
            out << kcit::kCsvSchemaLine << "\n";
            out << "repetitions,rate,std_error\n";
            out << reps << "," << kcit::format_double(sum.rate) << ","
                << kcit::format_double(sum.std_error) << "\n";
            emit(args.out_path, out.str());
        } else if (cmd_sweep->parsed()) {
            const kcit::TestConfig tc = test_from(cfg, args);
            const kcit::ScenarioConfig scenario = scenario_from(cfg);
            if (!cfg.contains("sweep"))
                throw kcit::config_error("sweep needs a \"sweep\" config section");
            const json& sw = cfg["sweep"];
            const kcit::SweepAxis axis =
                kcit::sweep_axis_from_string(sw.value("axis", "ell_sq"));
            const auto values = sw.at("values").get<std::vector<double>>();
            int reps = args.repetitions > 0 ? args.repetitions : sw.value("repetitions", 100);
            const auto rows = kcit::sweep(tc, scenario, axis, values, reps, args.threads);
            emit(args.out_path, kcit::sweep_to_csv(axis, rows));
        } else if (cmd_oracle->parsed()) {
            const kcit::ScenarioConfig scenario = scenario_from(cfg);
            const json& oc = cfg.contains("oracle") ? cfg["oracle"] : json::object();
            std::vector<double> grid;
            if (oc.contains("grid"))
                grid = oc["grid"].get<std::vector<double>>();
            else
                grid = kcit::TestConfig::log_spaced(1e-2, 1e2, 20);
            const Eigen::Index n = oc.value("n", 200);
            const kcit::OracleSnrCurve curve =
                kcit::oracle_snr_curve(scenario.tau, scenario.beta, grid, n);
            emit(args.out_path, kcit::oracle_curve_to_csv(curve));
        } else if (cmd_bounds->parsed()) {
            const kcit::ScenarioConfig scenario = scenario_from(cfg);
            const kcit::TestConfig tc = test_from(cfg, args);
            const json& bc = cfg.contains("bounds") ? cfg["bounds"] : json::object();
            const double rho = bc.value("rho", 0.05);
            const Eigen::Index n = tc.test_size;

            // h matrix from true-embedding grams on a fresh draw; gaussian
            // target kernels by default (linear ones concentrate the spectrum
            // on the smooth C directions and usually trip the delta < 1/2
            // requirement of the alignment bound)
            const kcit::Dataset ds = kcit::generate(scenario, n, tc.master_seed);
            const kcit::Matrix kc = kcit::gaussian_gram_from_d2(
                kcit::squared_distance_matrix(ds.c), tc.ell_sq_c);
            kcit::Matrix ka_c, kb_c;
            const std::string bound_kernels = bc.value("kernels", "gaussian");
            if (bound_kernels == "linear" || bc.value("inject_delta", false)) {
                auto [ra, rb] = bc.value("inject_delta", false)
                                    ? kcit::noisy_residuals(
                                          ds, scenario, kcit::regression_error_from_json(bc))
                                    : kcit::true_residuals(ds, scenario);
                ka_c = ra * ra.transpose();
                kb_c = rb * rb.transpose();
            } else if (bound_kernels == "gaussian") {
                const double ls_a = bc.value("lengthscale_a", 0.5);
                const double ls_b = bc.value("lengthscale_b", 0.5);
                ka_c = kcit::true_centered_gram_gaussian(ds, scenario, kcit::Target::a, ls_a);
                kb_c = kcit::true_centered_gram_gaussian(ds, scenario, kcit::Target::b, ls_b);
            } else {
                throw kcit::config_error("bounds: kernels must be gaussian or linear");
            }
            const kcit::HMatrix h = kcit::make_h_matrix(kc, ka_c, kb_c);

            const kcit::MomentSummary moments =
                kcit::population_moments_from_samples(h.values);
            const double kci_hat = moments.u_mean;
            double var_kci = std::max(moments.var_un, 1e-300);
            std::string variance_route = "plugin";
            // the exact closed forms apply to the linear-kernel 1-D family and
            // keep the variance mismatch honest (the plug-in nu1 is biased up
            // under the null)
            if (bc.value("variance", "plugin") == std::string("oracle")) {
                if (scenario.dim_c != 1 || bound_kernels != "linear")
                    throw kcit::config_error(
                        "bounds: oracle variance needs the 1-D linear-kernel route");
                if (bc.value("inject_delta", false)) {
                    var_kci = kcit::oracle_noisy_variance(
                                  kcit::regression_error_from_json(bc), scenario.tau,
                                  tc.ell_sq_c, n)
                                  .moments.var_un;
                } else {
                    const double beta_eff =
                        scenario.hypothesis == kcit::Hypothesis::alternative ? scenario.beta
                                                                             : 0.0;
                    var_kci = kcit::oracle_variance(scenario.tau, beta_eff, tc.ell_sq_c, n)
                                  .moments.var_un;
                }
                variance_route = "oracle";
            }
            const kcit::ThresholdPair thresholds =
                kcit::cantelli_normal_threshold(kci_hat, var_kci, n, rho);

            json out;
            out["n"] = n;
            out["rho"] = rho;
            out["kci_hat"] = kci_hat;
            out["var_kci_n"] = var_kci;
            out["variance_route"] = variance_route;
            out["threshold_q_cantelli"] = thresholds.q_cantelli;
            out["threshold_q_normal"] = thresholds.q_normal;
            // the alignment bound needs delta < 1/2; report the refusal
            // instead of losing the threshold part of the report
            try {
                const kcit::BoundReport rep =
                    kcit::bootstrap_alignment_bound(h, kci_hat, var_kci);
                out["alignment"] = {{"b_shift", rep.b_shift},
                                    {"k_var", rep.k_var},
                                    {"delta", rep.delta},
                                    {"r1", rep.r1},
                                    {"r2", rep.r2},
                                    {"r3", rep.r3},
                                    {"bound", rep.bound},
                                    {"negative_eigenvalues", rep.negative_eigenvalues}};
            } catch (const kcit::numerical_error& e) {
                out["alignment"] = {{"error", e.what()}};
            }
            emit(args.out_path, out.dump(2) + "\n");
        }
    } catch (const kcit::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const kcit::numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
