// rnnmpc: sweep -> gen-data -> train -> evaluate -> run-closed-loop -> benchmark
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rnnmpc/csv.hpp"
#include "rnnmpc/errors.hpp"
#include "rnnmpc/pipeline.hpp"

using namespace rnnmpc;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

int report_error(const std::string& stage, const std::string& type, const std::string& message,
                 const std::string& path = {})
{
    json err = {{"stage", stage}, {"type", type}, {"message", message}};
    if (!path.empty()) err["path"] = path;
    std::cerr << json{{"error", err}}.dump(1) << "\n";
    return type == "config" ? kExitConfig : kExitStage;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"CSTR identification and RNN-MPC pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    std::string root = ".";
    bool quiet = false;
    app.add_option("-c,--config", config_path, "Experiment config (JSON); defaults when omitted");
    app.add_option("--root", root, std::string("Workspace root (overridden by $") + kRootEnvVar + ")");
    app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

    auto* show = app.add_subcommand("show-config", "Print the validated, fully defaulted config");

    SweepRequest sweep;
    std::string sweep_out;
    auto* sw = app.add_subcommand("sweep", "Steady-state sweep over reactor temperature");
    sw->add_option("--q", sweep.q, "Flow rate")->capture_default_str();
    sw->add_option("--t-min", sweep.t_min, "Lowest temperature")->capture_default_str();
    sw->add_option("--t-max", sweep.t_max, "Highest temperature")->capture_default_str();
    sw->add_option("--n", sweep.n, "Grid points")->capture_default_str()->check(CLI::PositiveNumber);
    sw->add_option("--out", sweep_out, "Output CSV (default <results>/sweep.csv)");
    auto* op_points = app.add_subcommand("operating-points", "Check steady states against the reference operating points");

    auto* gen = app.add_subcommand("gen-data", "Simulate the training and test excitation runs");

    std::optional<int> layers, nodes, epochs, batch;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::string data_dir, train_out;
    auto* tr = app.add_subcommand("train", "Train one LSTM architecture");
    tr->add_option("--layers", layers, "LSTM layers")->check(CLI::Range(1, 8));
    tr->add_option("--nodes", nodes, "Nodes per layer")->check(CLI::Range(1, 4096));
    tr->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    tr->add_option("--batch", batch, "Mini-batch size")->check(CLI::PositiveNumber);
    tr->add_option("--seed", seed, "Initialization and shuffling seed");
    tr->add_option("--lr", lr, "ADAM learning rate")->check(CLI::PositiveNumber);
    tr->add_option("--data", data_dir, "Dataset directory (default <root>/<paths.data>)");
    tr->add_option("--out", train_out, "Model file (default <models>/lstm_<L>x<N>_seed<S>.json)");

    std::string model_path;
    auto* ev = app.add_subcommand("evaluate", "Test-set RMSE of a saved model");
    ev->add_option("--model", model_path, "Model file")->required();
    ev->add_option("--data", data_dir, "Dataset directory (default <root>/<paths.data>)");

    ClosedLoopRequest cl;
    std::string cl_model;
    auto* run = app.add_subcommand("run-closed-loop", "Closed-loop runs for the configured scenarios");
    run->add_option("--model", cl_model, "RNN model file; the true-plant controller when omitted");
    run->add_option("--scenario", cl.scenarios, "Scenario name (repeatable; all by default)");
    run->add_flag("--svg", cl.svg, "Also write a static SVG plot per run");

    auto* bench = app.add_subcommand("benchmark", "Performance-index table over the configured architectures");
    auto* all = app.add_subcommand("reproduce-all", "Run every stage and write the summary report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    ExperimentConfig cfg;
    try {
        cfg = config_path.empty() ? validate_config(json::object()) : load_config(config_path);
        if (epochs) cfg.model.epochs = *epochs;
        if (batch) cfg.model.batch_size = *batch;
        if (lr) cfg.model.adam.lr = *lr;
        if (layers) cfg.model.arch.layers = *layers;
        if (nodes) cfg.model.arch.nodes = *nodes;
        if (seed) cfg.model.seed = *seed;
        if (!data_dir.empty()) cfg.paths.data = data_dir;
        cfg = validate_config(serialize_config(cfg));
    } catch (const ConfigError& e) {
        return report_error(stage, "config", e.what(), e.path());
    }

    Workspace ws(cfg, root);
    if (!quiet) ws.log = [](const std::string& m) { std::cerr << m << "\n"; };

    try {
        json out;
        if (*show) {
            out = serialize_config(cfg);
            out["config_digest"] = ws.digest();
        } else if (*sw) {
            if (!sweep_out.empty()) sweep.out = sweep_out;
            const auto rows = run_sweep(ws, sweep);
            out = {{"rows", rows.size()}, {"out", sweep.out.value_or(ws.results_dir() / "sweep.csv").string()}};
        } else if (*op_points) {
            bool pass = true;
            out["rows"] = json::array();
            for (const auto& r : check_operating_points(ws)) {
                out["rows"].push_back({{"T", r.T},
                                       {"computed", {r.computed.cA, r.computed.cR}},
                                       {"reference", {r.reference.cA, r.reference.cR}},
                                       {"pass", r.pass}});
                pass = pass && r.pass;
            }
            out["pass"] = pass;
        } else if (*gen) {
            const auto d = gen_data(ws);
            out = {{"train", ws.train_data().string()}, {"train_samples", d.train.size()},
                   {"test", ws.test_data().string()},   {"test_samples", d.test.size()}};
        } else if (*tr) {
            const auto prepared = prepare_data(ws, load_data(ws));
            TrainRequest req{cfg.model.arch, cfg.model.seed, std::nullopt};
            if (!train_out.empty()) req.out = train_out;
            const auto rep = train_model(ws, prepared, req);
            out = {{"model", rep.model_path.string()},
                   {"train_rmse", rep.train_rmse},
                   {"test_rmse", rep.test_rmse},
                   {"final_loss", rep.loss_history.back()}};
        } else if (*ev) {
            const auto rep = evaluate_model(ws, load_data(ws), model_path);
            out = {{"model", model_path}, {"train_rmse", rep.train_rmse}, {"test_rmse", rep.test_rmse},
                   {"digest_match", rep.model_digest == ws.digest()}};
        } else if (*run) {
            if (!cl_model.empty()) cl.model = cl_model;
            out = json::array();
            for (const auto& s : run_closed_loop(ws, cl))
                out.push_back({{"scenario", s.scenario}, {"J", s.J}, {"J_star", s.J_star}, {"I", s.index},
                               {"offset", s.verdict.offset}});
        } else if (*bench) {
            const auto report = run_benchmark(ws);
            std::cout << report_to_csv(report, cfg.make_scenarios());
            return 0;
        } else if (*all) {
            out = reproduce_all(ws);
        }
        std::cout << out.dump(1) << "\n";
    } catch (const ConfigError& e) {
        return report_error(stage, "config", e.what(), e.path());
    } catch (const std::exception& e) {
        return report_error(stage, "stage", e.what());
    }
    return 0;
}
