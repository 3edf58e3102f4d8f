// gridsafe: power-grid simulation and safety-evaluation toolkit.
// Subcommands: solve, mutate, dataset, fit, evaluate, report.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "gridsafe/cases.hpp"
#include "gridsafe/dataset_io.hpp"
#include "gridsafe/evalsafe.hpp"
#include "gridsafe/grid_json.hpp"
#include "gridsafe/opf.hpp"
#include "gridsafe/perturb.hpp"
#include "gridsafe/powerflow.hpp"
#include "gridsafe/ridge.hpp"

namespace fs = std::filesystem;
using namespace gridsafe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 2;
constexpr int kExitInput = 3;

int default_workers() {
    if (const char* env = std::getenv("GRIDSAFE_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) return w;
    }
    return 1;
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

Json loading_to_json(const LoadingReport& rep) {
    return Json{{"bus_bands",
                 Json{{"ideal", rep.bus_ideal},
                      {"acceptable", rep.bus_acceptable},
                      {"unsafe", rep.bus_unsafe}}},
                {"line_bands",
                 Json{{"ideal", rep.line_ideal},
                      {"elevated", rep.line_elevated},
                      {"dangerous", rep.line_dangerous}}}};
}

Json solution_to_json(const Grid& grid, const GridSolution& sol) {
    BusIndex index(grid);
    Json vm, va;
    for (int i = 0; i < index.size(); ++i) {
        const std::string key = std::to_string(index.ext_ids[i]);
        vm[key] = sol.state.vm[i];
        va[key] = sol.state.va[i];
    }
    Json gens;
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        gens[std::to_string(grid.generators[g].id)] =
            Json{{"p_mw", sol.gen_p_mw[static_cast<int>(g)]},
                 {"q_mvar", sol.gen_q_mvar[static_cast<int>(g)]}};
    }
    return Json{{"vm_pu", std::move(vm)},
                {"va_rad", std::move(va)},
                {"gen", std::move(gens)},
                {"slack", Json{{"p_mw", sol.slack_p_mw}, {"q_mvar", sol.slack_q_mvar}}}};
}

std::vector<Prediction> read_predictions_jsonl(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<Prediction> out;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw SchemaError("predictions line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            Prediction p;
            auto vm = j.at("bus").at("vm_pu").get<std::vector<double>>();
            auto va = j.at("bus").at("va_rad").get<std::vector<double>>();
            auto gp = j.at("gen").at("p_mw").get<std::vector<double>>();
            auto gq = j.at("gen").at("q_mvar").get<std::vector<double>>();
            if (vm.size() != va.size() || gp.size() != gq.size())
                throw SchemaError("predictions line " + std::to_string(line_no) +
                                  ": ragged arrays");
            p.state.vm = Eigen::Map<const VectorXd>(vm.data(), static_cast<int>(vm.size()));
            p.state.va = Eigen::Map<const VectorXd>(va.data(), static_cast<int>(va.size()));
            p.gen_p_mw = Eigen::Map<const VectorXd>(gp.data(), static_cast<int>(gp.size()));
            p.gen_q_mvar = Eigen::Map<const VectorXd>(gq.data(), static_cast<int>(gq.size()));
            p.slack_p_mw = j.at("slack").at("p_mw").get<double>();
            p.slack_q_mvar = j.at("slack").at("q_mvar").get<double>();
            out.push_back(std::move(p));
        } catch (const Json::exception& e) {
            throw SchemaError("predictions line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

MutationSpec build_spec(Scenario scenario, std::uint64_t seed, double mult_min, double mult_max,
                        double fraction) {
    MutationSpec spec;
    spec.scenario = scenario;
    spec.seed = seed;
    spec.load_mult_min = mult_min;
    spec.load_mult_max = mult_max;
    spec.load_fraction = fraction;
    validate_spec(spec);
    return spec;
}

// --- subcommand payloads ---

struct SolveArgs {
    std::string case_name = "case9";
    std::string task = "pf";
    double tol = 1e-8;
    int max_iter = 30;
    bool enforce_line_limits = false;
    std::string out_dir = ".";
};

int run_solve(const SolveArgs& args) {
    Grid grid = load_case(args.case_name);
    Json doc;
    GridSolution solution;
    if (args.task == "pf") {
        PFOptions opts;
        opts.tol = args.tol;
        opts.max_iter = args.max_iter;
        PFResult r = solve_powerflow(grid, opts);
        solution = r.solution;
        doc = solution_to_json(grid, r.solution);
        doc["iterations"] = r.iterations;
        doc["residual_norm"] = r.residual;
        std::printf("pf %s: residual %.3e after %d iterations\n", grid.name.c_str(), r.residual,
                    r.iterations);
    } else {
        OPFOptions opts;
        opts.enforce_line_limits = args.enforce_line_limits;
        OPFSolution r = solve_opf(grid, opts);
        solution = r.solution;
        AdmittanceMatrix adm = build_admittance(grid);
        FullResiduals res = full_residuals(grid, adm, r.solution);
        const double residual =
            std::max(res.p.cwiseAbs().maxCoeff(), res.q.cwiseAbs().maxCoeff());
        doc = solution_to_json(grid, r.solution);
        doc["iterations"] = r.outer_iterations;
        doc["residual_norm"] = residual;
        doc["objective"] = r.objective;
        doc["kkt_residual"] = r.kkt_residual;
        doc["feasible"] = r.feasible;
        std::printf("opf %s: objective %.6f, residual %.3e, feasible %s\n", grid.name.c_str(),
                    r.objective, residual, r.feasible ? "yes" : "no");
    }
    LoadingReport loading = loading_report(grid, solution);
    doc["case"] = grid.name;
    doc["task"] = args.task;
    doc["loading"] = loading_to_json(loading);
    std::printf("bus bands: %d ideal / %d acceptable / %d unsafe\n", loading.bus_ideal,
                loading.bus_acceptable, loading.bus_unsafe);
    std::printf("line bands: %d ideal / %d elevated / %d dangerous\n", loading.line_ideal,
                loading.line_elevated, loading.line_dangerous);
    const fs::path out = fs::path(args.out_dir) / "solution.json";
    write_text(out, doc.dump(2) + "\n");
    std::printf("wrote %s\n", out.string().c_str());
    return kExitOk;
}

struct MutateArgs {
    std::string case_name = "case9";
    std::string scenario = "load";
    std::uint64_t seed = 0;
    std::uint64_t draw_index = 0;
    double mult_min = 0.9;
    double mult_max = 1.1;
    double fraction = 1.0;
    std::string out_dir = ".";
};

int run_mutate(const MutateArgs& args) {
    Grid grid = load_case(args.case_name);
    MutationSpec spec = build_spec(scenario_from_string(args.scenario), args.seed, args.mult_min,
                                   args.mult_max, args.fraction);
    Mutation m = apply_mutation(grid, spec, args.draw_index);
    const fs::path grid_path = fs::path(args.out_dir) / "mutant.json";
    const fs::path meta_path = fs::path(args.out_dir) / "mutation.json";
    write_text(grid_path, grid_to_json(m.grid) + "\n");
    Json meta{{"case", grid.name},
              {"scenario", to_string(m.scenario)},
              {"draw_index", args.draw_index},
              {"spec", mutation_spec_to_json(spec)},
              {"degenerate", m.degenerate},
              {"metadata", m.metadata}};
    write_text(meta_path, meta.dump(2) + "\n");
    if (m.degenerate)
        std::printf("warning: degenerate price range, grid returned unchanged\n");
    std::printf("wrote %s and %s\n", grid_path.string().c_str(), meta_path.string().c_str());
    return kExitOk;
}

struct DatasetArgs {
    std::string case_name = "case9";
    std::string task = "pf";
    std::string train_scenario = "load";
    std::string test_scenario = "id";
    std::size_t n_train = 800;
    std::size_t n_test = 200;
    std::uint64_t seed = 0;
    double mult_min = 0.9;
    double mult_max = 1.1;
    double fraction = 1.0;
    int workers = default_workers();
    std::string out_dir = "dataset";
};

int run_dataset(const DatasetArgs& args) {
    Grid grid = load_case(args.case_name);
    const Task task = task_from_string(args.task);
    MutationSpec train_spec = build_spec(scenario_from_string(args.train_scenario), args.seed,
                                         args.mult_min, args.mult_max, args.fraction);
    MutationSpec test_spec = build_spec(scenario_from_string(args.test_scenario), args.seed,
                                        args.mult_min, args.mult_max, args.fraction);
    if (task == Task::PF && (train_spec.scenario == Scenario::PriceVariation ||
                             test_spec.scenario == Scenario::PriceVariation))
        std::printf("note: the pf task is price-agnostic; price mutants keep the base labels\n");

    GenerateOptions opt;
    opt.workers = args.workers;
    Dataset ds = generate_dataset(grid, task, train_spec, test_spec, args.n_train, args.n_test,
                                  opt);
    const std::string digest = export_dataset(ds, args.out_dir);
    std::printf("dataset %s task=%s train=%zu test=%zu rejections=%llu/%llu\n",
                grid.name.c_str(), args.task.c_str(), ds.train.size(), ds.test.size(),
                static_cast<unsigned long long>(ds.train_rejections),
                static_cast<unsigned long long>(ds.test_rejections));
    std::printf("digest %s\n", digest.c_str());
    std::printf("wrote %s/{manifest.json,train.jsonl,test.jsonl}\n", args.out_dir.c_str());
    return kExitOk;
}

struct FitArgs {
    std::string dataset_dir;
    double ridge = 1e-4;
    std::string out_path = "model.json";
};

int run_fit(const FitArgs& args) {
    Dataset ds = import_dataset(args.dataset_dir);
    RidgeModel model = fit_ridge(ds, args.ridge);
    write_text(args.out_path, ridge_to_json(model).dump() + "\n");
    std::printf("fitted ridge on %zu graphs: %d features -> %d outputs, ridge %.3e\n",
                ds.train.size(), model.layout.feature_dim, model.layout.output_dim(),
                model.ridge);
    std::printf("wrote %s\n", args.out_path.c_str());
    return kExitOk;
}

struct EvaluateArgs {
    std::string dataset_dir;
    bool oracle = false;
    std::string baseline;  // "ridge"
    std::string model_path;
    std::string predictions_path;
    double ridge = 1e-4;
    double mu = 0.1;
    double norm_order = 2.0;
    double boundary_tol = 1e-4;
    double pf_tol = 1e-2;
    bool svg = false;
    std::string out_dir = ".";
};

int run_evaluate(const EvaluateArgs& args) {
    Dataset ds = import_dataset(args.dataset_dir);
    std::vector<Prediction> preds;
    std::string source;
    if (args.oracle) {
        for (const auto& e : ds.test) preds.push_back(e.solution);
        source = "oracle";
    } else if (!args.model_path.empty()) {
        RidgeModel model = ridge_from_json(Json::parse(read_file(args.model_path)));
        for (const auto& e : ds.test) preds.push_back(predict(model, e.grid));
        source = "model:" + args.model_path;
    } else if (args.baseline == "ridge") {
        RidgeModel model = fit_ridge(ds, args.ridge);
        for (const auto& e : ds.test) preds.push_back(predict(model, e.grid));
        source = "baseline:ridge";
    } else if (!args.predictions_path.empty()) {
        preds = read_predictions_jsonl(args.predictions_path);
        source = "file:" + args.predictions_path;
    } else {
        throw ValidationError(
            "choose a prediction source: --oracle, --baseline ridge, --model or --predictions");
    }
    if (preds.size() != ds.test.size())
        throw DimensionError("prediction count " + std::to_string(preds.size()) +
                             " does not match test entries " + std::to_string(ds.test.size()));

    EvalConfig config;
    config.mu = args.mu;
    config.norm_order = args.norm_order;
    config.boundary_tol = args.boundary_tol;
    config.pf_tol = args.pf_tol;
    EvalReport rep = evaluate_predictions(ds.test, preds, config);
    RobustnessSummary rob = robustness_summary(rep, config);

    Json doc = report_to_json(rep);
    doc["source"] = source;
    doc["dataset_digest"] = dataset_digest(ds);
    doc["robust"] = rob.robust;
    doc["worst_distance"] = rob.worst_distance;
    doc["mu"] = config.mu;
    write_text(fs::path(args.out_dir) / "report.json", doc.dump(2) + "\n");
    write_text(fs::path(args.out_dir) / "report.csv", report_to_csv(rep));
    if (args.svg)
        write_text(fs::path(args.out_dir) / "constraints.svg", constraint_frequency_svg(rep));

    std::printf("evaluated %zu graphs from %s\n", rep.n_entries, source.c_str());
    std::printf("supervised nse: P_gen %.3e  Q_gen %.3e  P_slack %.3e  Q_slack %.3e  V %.3e  "
                "theta %.3e\n",
                rep.p_gen.mean, rep.q_gen.mean, rep.p_slack.mean, rep.q_slack.mean, rep.v.mean,
                rep.theta.mean);
    std::printf("ssl mse %.3e | invalid graphs %.1f%% | constraints %d\n", rep.ssl.mean,
                rep.percent_invalid, rep.total_constraints);
    std::printf("robust(mu=%g): %s (worst distance %.3e)\n", config.mu,
                rob.robust ? "yes" : "no", rob.worst_distance);
    std::printf("wrote %s/report.json and report.csv%s\n", args.out_dir.c_str(),
                args.svg ? " and constraints.svg" : "");
    return kExitOk;
}

struct ReportArgs {
    std::string report_path;
    std::string csv_path;
    std::string svg_path;
};

int run_report(const ReportArgs& args) {
    Json j = Json::parse(read_file(args.report_path));
    EvalReport rep;
    try {
        rep.n_entries = j.at("n_entries").get<std::size_t>();
        auto stat = [&](const char* k) {
            return MetricStat{j.at("supervised").at(k).at("mean").get<double>(),
                              j.at("supervised").at(k).at("std").get<double>()};
        };
        rep.p_gen = stat("P_gen");
        rep.q_gen = stat("Q_gen");
        rep.p_slack = stat("P_slack");
        rep.q_slack = stat("Q_slack");
        rep.v = stat("V");
        rep.theta = stat("theta");
        rep.ssl = MetricStat{j.at("ssl_mse").at("mean").get<double>(),
                             j.at("ssl_mse").at("std").get<double>()};
        rep.percent_invalid = j.at("percent_invalid").get<double>();
        rep.total_constraints = j.at("total_constraints").get<int>();
        for (const auto& [name, f] : j.at("constraint_frequency").items())
            rep.constraint_frequency.emplace_back(name, f.get<double>());
        rep.norm_order = j.at("norm_order").get<double>();
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("report document: ") + e.what());
    }
    if (!args.csv_path.empty()) write_text(args.csv_path, report_to_csv(rep));
    if (!args.svg_path.empty()) write_text(args.svg_path, constraint_frequency_svg(rep));
    std::printf("report: %zu graphs, %.1f%% invalid, %d constraints\n", rep.n_entries,
                rep.percent_invalid, rep.total_constraints);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridsafe: AC power flow / OPF solvers, perturbed grid datasets and "
                 "safety-aware evaluation of predicted solutions"};
    app.require_subcommand(1);

    SolveArgs solve_args;
    auto* solve = app.add_subcommand("solve", "Solve PF or OPF on a case");
    solve->add_option("--case", solve_args.case_name, "Bundled case name or path to a file");
    solve->add_option("--task", solve_args.task, "pf or opf")
        ->check(CLI::IsMember({"pf", "opf"}));
    solve->add_option("--tol", solve_args.tol, "PF convergence tolerance");
    solve->add_option("--max-iter", solve_args.max_iter, "PF iteration budget");
    solve->add_flag("--enforce-line-limits", solve_args.enforce_line_limits,
                    "Penalize line thermal limits in OPF");
    solve->add_option("--out", solve_args.out_dir, "Output directory");

    MutateArgs mutate_args;
    auto* mutate = app.add_subcommand("mutate", "Write one perturbed copy of a case");
    mutate->add_option("--case", mutate_args.case_name, "Bundled case name or path");
    mutate->add_option("--scenario", mutate_args.scenario, "load, id, price or line-outage")
        ->check(CLI::IsMember({"load", "id", "price", "line-outage"}));
    mutate->add_option("--seed", mutate_args.seed, "RNG seed");
    mutate->add_option("--draw-index", mutate_args.draw_index, "Mutation draw index");
    mutate->add_option("--load-mult-min", mutate_args.mult_min, "Load multiplier lower bound");
    mutate->add_option("--load-mult-max", mutate_args.mult_max, "Load multiplier upper bound");
    mutate->add_option("--load-fraction", mutate_args.fraction, "Fraction of loads affected");
    mutate->add_option("--out", mutate_args.out_dir, "Output directory");

    DatasetArgs dataset_args;
    auto* dataset = app.add_subcommand("dataset", "Generate a convergence-filtered dataset");
    dataset->add_option("--case", dataset_args.case_name, "Bundled case name or path");
    dataset->add_option("--task", dataset_args.task, "pf or opf")
        ->check(CLI::IsMember({"pf", "opf"}));
    dataset->add_option("--train-scenario", dataset_args.train_scenario,
                        "load, id, price or line-outage")
        ->check(CLI::IsMember({"load", "id", "price", "line-outage"}));
    dataset->add_option("--test-scenario", dataset_args.test_scenario,
                        "load, id, price or line-outage")
        ->check(CLI::IsMember({"load", "id", "price", "line-outage"}));
    dataset->add_option("--n-train", dataset_args.n_train, "Training entries");
    dataset->add_option("--n-test", dataset_args.n_test, "Test entries");
    dataset->add_option("--seed", dataset_args.seed, "RNG seed (single entropy source)");
    dataset->add_option("--load-mult-min", dataset_args.mult_min, "Load multiplier lower bound");
    dataset->add_option("--load-mult-max", dataset_args.mult_max, "Load multiplier upper bound");
    dataset->add_option("--load-fraction", dataset_args.fraction, "Fraction of loads affected");
    dataset->add_option("--workers", dataset_args.workers,
                        "Oracle solver threads (default: GRIDSAFE_WORKERS or 1)");
    dataset->add_option("--out", dataset_args.out_dir, "Output directory");

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "Fit the ridge baseline on a dataset");
    fit->add_option("--dataset", fit_args.dataset_dir, "Dataset directory")->required();
    fit->add_option("--ridge", fit_args.ridge, "Ridge coefficient");
    fit->add_option("--out", fit_args.out_path, "Model output path");

    EvaluateArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against stored oracles");
    evaluate->add_option("--dataset", eval_args.dataset_dir, "Dataset directory")->required();
    evaluate->add_flag("--oracle", eval_args.oracle, "Self-check: use the stored labels");
    evaluate->add_option("--baseline", eval_args.baseline, "Fit-and-predict baseline (ridge)")
        ->check(CLI::IsMember({"ridge"}));
    evaluate->add_option("--model", eval_args.model_path, "Saved ridge model path");
    evaluate->add_option("--predictions", eval_args.predictions_path,
                         "Predictions JSONL aligned with test.jsonl");
    evaluate->add_option("--ridge", eval_args.ridge, "Ridge coefficient for --baseline");
    evaluate->add_option("--mu", eval_args.mu, "Robustness threshold");
    evaluate->add_option("--norm-order", eval_args.norm_order, "Distance norm order p");
    evaluate->add_option("--boundary-tol", eval_args.boundary_tol, "Boundary tolerance");
    evaluate->add_option("--pf-tol", eval_args.pf_tol, "Power flow residual tolerance");
    evaluate->add_flag("--svg", eval_args.svg, "Also write the constraint bar chart");
    evaluate->add_option("--out", eval_args.out_dir, "Output directory");

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "Re-emit CSV/SVG from a stored report");
    report->add_option("--report", report_args.report_path, "report.json path")->required();
    report->add_option("--csv", report_args.csv_path, "CSV output path");
    report->add_option("--svg", report_args.svg_path, "SVG output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return run_solve(solve_args);
        if (mutate->parsed()) return run_mutate(mutate_args);
        if (dataset->parsed()) return run_dataset(dataset_args);
        if (fit->parsed()) return run_fit(fit_args);
        if (evaluate->parsed()) return run_evaluate(eval_args);
        if (report->parsed()) return run_report(report_args);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    } catch (const InfeasibleError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    } catch (const GenerationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }
    return kExitOk;
}
