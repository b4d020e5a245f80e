#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "djqe.hpp"
#include "djqe/report.hpp"

namespace {

using namespace djqe;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumerical = 3;

struct SharedFlags {
    std::optional<int> m;
    std::optional<double> gamma;
    std::vector<double> gamma_grid;
    int folds = 2;
    int cv_folds = 5;
    std::uint64_t seed = 0;
    std::string partitioner = "pelt";
    std::string variant = "standard-dr";
    double clip_eps = 0.05;
    int mlp_depth = 1;
    int mlp_width = 10;
    int mlp_epochs = 300;
    double mlp_lr = 0.05;
    std::string optimizer = "gd";
    double weight_decay = 0.0;
    int jobs = 1;
    std::string out;

    [[nodiscard]] MlpSpec mlp() const {
        MlpSpec s;
        s.hidden_layers = mlp_depth;
        s.hidden_width = mlp_width;
        s.epochs = mlp_epochs;
        s.learning_rate = mlp_lr;
        s.optimizer = parse_optimizer(optimizer);
        s.weight_decay = weight_decay;
        s.validate();
        return s;
    }

    [[nodiscard]] EvalConfig config() const {
        EvalConfig c;
        c.m = m;
        if (gamma && !gamma_grid.empty()) throw ValidationError("--gamma and --gamma-grid are exclusive");
        if (gamma) c.gamma_grid = {*gamma};
        else c.gamma_grid = gamma_grid;
        c.folds = folds;
        c.cv_folds = cv_folds;
        c.mlp = mlp();
        c.seed = seed;
        c.clip_eps = clip_eps;
        c.variant = parse_variant(variant);
        c.partitioner = parse_partitioner(partitioner);
        c.threads = jobs;
        c.validate();
        return c;
    }
};

void add_seed(CLI::App* app, SharedFlags& f) { app->add_option("--seed", f.seed, "Master seed"); }

void add_mlp_flags(CLI::App* app, SharedFlags& f) {
    app->add_option("--mlp-depth", f.mlp_depth, "Hidden layers");
    app->add_option("--mlp-width", f.mlp_width, "Hidden units per layer");
    app->add_option("--mlp-epochs", f.mlp_epochs, "Training epochs");
    app->add_option("--mlp-lr", f.mlp_lr, "Learning rate");
    app->add_option("--optimizer", f.optimizer, "gd or adam");
    app->add_option("--weight-decay", f.weight_decay, "L2 penalty on network weights");
}

void add_eval_flags(CLI::App* app, SharedFlags& f) {
    app->add_option("--m", f.m, "Grid resolution (default ceil(n/10))");
    app->add_option("--gamma", f.gamma, "Fixed penalty");
    app->add_option("--gamma-grid", f.gamma_grid, "Penalty candidates for cross-validation")->delimiter(',');
    app->add_option("--folds", f.folds, "Cross-fitting folds");
    app->add_option("--cv-folds", f.cv_folds, "Folds used to select gamma");
    add_seed(app, f);
    app->add_option("--partitioner", f.partitioner, "pelt or exact-dp");
    app->add_option("--estimator-variant", f.variant, "standard-dr or paper-literal");
    app->add_option("--clip-eps", f.clip_eps, "Propensity clip");
    add_mlp_flags(app, f);
    app->add_option("--jobs", f.jobs, "Worker threads");
}

// Output files are written only after every one of them has been rendered.
void write_all(const std::vector<std::pair<std::string, std::string>>& files) {
    std::vector<std::string> done;
    for (const auto& [path, body] : files) {
        std::ofstream out(path, std::ios::binary);
        if (out) out << body;
        if (!out) {
            for (const auto& p : done) std::filesystem::remove(p);
            std::filesystem::remove(path);
            throw IoError("cannot write '" + path + "'");
        }
        done.push_back(path);
    }
}

std::string render_dataset(const Dataset& d) {
    std::ostringstream s;
    write_dataset_csv(s, d);
    return s.str();
}

int cmd_generate(const std::string& scenario, std::size_t n, int p, double noise_sd, const SharedFlags& f) {
    const ScenarioId id = parse_scenario(scenario);
    const Scenario sc(id, p, noise_sd);
    if (f.out.empty()) throw ValidationError("--out is required");
    const Dataset d = gen_data(sc, n, f.seed);
    write_all({{f.out, render_dataset(d)}});
    std::cout << "wrote " << n << " rows to " << f.out << '\n';
    std::cout << "oracle value " << detail::format_double(closed_form_value(id)) << '\n';
    return kExitOk;
}

Policy load_policy(const std::string& spec) {
    if (std::filesystem::exists(spec)) return Policy::tabulated(spec, read_action_column(spec));
    return builtin_policy(spec);
}

int cmd_evaluate(const std::string& data_path, const std::string& policy_spec, const std::string& bellman_path,
                 const SharedFlags& f) {
    const EvalConfig config = f.config();
    const Dataset data = read_dataset_csv(data_path);
    const Policy policy = load_policy(policy_spec);
    if (policy.is_tabulated()) static_cast<void>(policy.action(data, 0));

    const CrossFit cf = djqe_fit(data, config);
    const EvalReport rep = evaluate_cross_fit(data, cf, policy, config.variant);

    json j;
    j["config"] = to_json(config);
    j["config"]["m"] = cf.m;
    j["config"]["gamma_grid"] = cf.selection.grid;
    j["data"] = data_path;
    j["report"] = to_json(rep);

    std::vector<std::pair<std::string, std::string>> files;
    if (!f.out.empty()) files.emplace_back(f.out, j.dump(2) + "\n");
    if (!bellman_path.empty()) {
        std::ostringstream s;
        s << "fold,v,bell,tau\n";
        for (const auto& fold : cf.folds) {
            for (std::size_t v = 0; v < fold.bell.size(); ++v) {
                s << fold.fold_id << ',' << v << ',' << detail::format_double(fold.bell[v]) << ','
                  << (v == 0 ? -1 : fold.tau[v]) << '\n';
            }
        }
        files.emplace_back(bellman_path, s.str());
    }
    write_all(files);

    std::cout << "value " << detail::format_double(rep.value) << '\n';
    std::cout << "gamma " << detail::format_double(rep.gamma) << '\n';
    for (const auto& fold : rep.folds) {
        std::cout << "fold " << fold.fold_id << " changepoints";
        for (double c : fold.changepoint_locations) std::cout << ' ' << detail::format_double(c);
        std::cout << '\n';
    }
    std::cout << "propensity clip rate " << detail::format_double(rep.clip_rate) << '\n';
    return kExitOk;
}

int cmd_benchmark(const std::string& scenario, const std::vector<std::size_t>& ns, int p, int reps,
                  const std::vector<std::string>& method_names, const std::string& kernel,
                  const std::optional<double>& bandwidth, const std::vector<double>& multipliers,
                  double noise_sd, const SharedFlags& f) {
    const ScenarioId id = parse_scenario(scenario);
    std::vector<Method> methods;
    for (const auto& name : method_names) methods.push_back(parse_method(name));
    if (methods.empty()) throw ValidationError("no methods given (valid: djqe, kernel-dr)");
    if (ns.empty()) throw ValidationError("no sample sizes given");
    EvalConfig config = f.config();
    config.threads = 1;
    BenchmarkOptions opts;
    opts.kernel = parse_kernel(kernel);
    opts.bandwidth = bandwidth;
    if (!multipliers.empty()) opts.bandwidth_multipliers = multipliers;
    opts.jobs = f.jobs;
    opts.noise_sd = noise_sd;
    if (reps == 1) std::cerr << "warning: reps = 1, standard deviations are reported as 0\n";

    std::vector<BenchmarkResult> results;
    for (std::size_t n : ns) results.push_back(run_benchmark(id, n, p, reps, methods, config, opts));

    std::ostringstream csv;
    write_benchmark_csv_header(csv);
    for (const auto& r : results) write_benchmark_csv_rows(csv, r);
    if (!f.out.empty()) write_all({{f.out, csv.str()}});
    write_benchmark_table(std::cout, results);
    for (const auto& r : results) {
        for (const auto& m : r.methods) {
            if (m.bandwidth_multiplier) {
                std::cout << "n=" << r.n << " kernel-dr bandwidth multiplier "
                          << detail::format_double(*m.bandwidth_multiplier) << '\n';
            }
        }
    }
    if (f.out.empty()) std::cout << csv.str();
    return kExitOk;
}

int cmd_calibrate(const std::string& data_path, std::size_t n_sim, const SharedFlags& f) {
    if (f.out.empty()) throw ValidationError("--out prefix is required");
    const Dataset data = read_dataset_csv(data_path);
    const MlpSpec spec = f.mlp();
    const Calibration cal = calibrate(data, spec, derive_seed(f.seed, 0xCA));
    const Dataset sim = cal.simulate(n_sim, derive_seed(f.seed, 0x51));
    std::vector<double> best(sim.size());
    for (std::size_t i = 0; i < sim.size(); ++i) best[i] = cal.optimal_action(sim.x(i));

    std::ostringstream policy;
    policy << "action\n";
    for (double a : best) policy << detail::format_double(a) << '\n';

    json j;
    j["data"] = data_path;
    j["seed"] = f.seed;
    j["mlp"] = to_json(spec);
    j["sigma_hat"] = cal.sigma_hat;
    j["action_offset"] = data.action_scale().offset;
    j["action_scale"] = data.action_scale().scale;
    j["argmax_grid"] = kArgmaxGrid;
    j["simulated_rows"] = n_sim;
    j["qhat"] = to_json(cal.qhat.model);

    const std::string sim_path = f.out + ".sim.csv";
    const std::string policy_path = f.out + ".policy.csv";
    const std::string json_path = f.out + ".calibration.json";
    write_all({{sim_path, render_dataset(sim)}, {policy_path, policy.str()}, {json_path, j.dump(2) + "\n"}});
    std::cout << "sigma_hat " << detail::format_double(cal.sigma_hat) << '\n';
    std::cout << "wrote " << sim_path << ", " << policy_path << ", " << json_path << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep jump Q-evaluation for continuous-action off-policy evaluation"};
    app.set_config("--config", "", "TOML/INI file with flag defaults");
    app.require_subcommand(1);

    SharedFlags f;

    auto* gen = app.add_subcommand("generate", "Write a synthetic scenario dataset");
    std::string scenario = "s1";
    std::size_t n = 200;
    int p = 20;
    double noise_sd = 1.0;
    gen->add_option("--scenario", scenario, "s1, s2, s3, s4 or toy");
    gen->add_option("--n", n, "Rows");
    gen->add_option("--p", p, "Feature dimension");
    gen->add_option("--noise-sd", noise_sd, "Reward noise sd");
    add_seed(gen, f);
    gen->add_option("--out", f.out, "Output CSV")->required();

    auto* eval = app.add_subcommand("evaluate", "Estimate a policy value with DJQE");
    std::string data_path;
    std::string policy_spec;
    std::string bellman_path;
    eval->add_option("--data", data_path, "Input CSV (x_1..x_p,a,y)")->required();
    eval->add_option("--policy", policy_spec, "Built-in policy name or action-column CSV")->required();
    eval->add_option("--dump-bellman", bellman_path, "Write Bell and tau per fold as CSV");
    add_eval_flags(eval, f);
    eval->add_option("--out", f.out, "JSON report");

    auto* bench = app.add_subcommand("benchmark", "Replicate a scenario and report bias, sd and MSE");
    std::vector<std::size_t> ns{200};
    int bench_p = 5;
    int reps = 20;
    std::vector<std::string> methods{"djqe", "kernel-dr"};
    std::string kernel = "gaussian";
    std::optional<double> bandwidth;
    std::vector<double> multipliers;
    bench->add_option("--scenario", scenario, "s1, s2, s3, s4 or toy");
    bench->add_option("--n", ns, "Sample sizes")->delimiter(',');
    bench->add_option("--p", bench_p, "Feature dimension");
    bench->add_option("--reps", reps, "Replications");
    bench->add_option("--methods", methods, "djqe, kernel-dr")->delimiter(',');
    bench->add_option("--kernel", kernel, "gaussian, epanechnikov or boxcar");
    bench->add_option("--bandwidth", bandwidth, "Fixed kernel bandwidth");
    bench->add_option("--bandwidth-grid", multipliers, "Multipliers c of sd(A) n^-0.2")->delimiter(',');
    bench->add_option("--noise-sd", noise_sd, "Reward noise sd");
    add_eval_flags(bench, f);
    bench->add_option("--out", f.out, "Output CSV");

    auto* cal = app.add_subcommand("calibrate", "Fit a reward simulator to a dataset");
    std::size_t n_sim = 500;
    SharedFlags cf;
    cf.mlp_depth = 2;
    cf.mlp_width = 50;
    cf.mlp_epochs = 1000;
    cf.mlp_lr = 0.01;
    cf.optimizer = "adam";
    cal->add_option("--data", data_path, "Input CSV")->required();
    cal->add_option("--n", n_sim, "Simulated rows");
    add_seed(cal, cf);
    add_mlp_flags(cal, cf);
    cal->add_option("--out", cf.out, "Output prefix")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*gen) return cmd_generate(scenario, n, p, noise_sd, f);
        if (*eval) return cmd_evaluate(data_path, policy_spec, bellman_path, f);
        if (*bench) {
            return cmd_benchmark(scenario, ns, bench_p, reps, methods, kernel, bandwidth, multipliers, noise_sd, f);
        }
        if (*cal) return cmd_calibrate(data_path, n_sim, cf);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitOk;
}
