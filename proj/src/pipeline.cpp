#include "rnnmpc/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>

#include "rnnmpc/csv.hpp"
#include "rnnmpc/errors.hpp"

namespace rnnmpc {

namespace fs = std::filesystem;
using nlohmann::json;

Workspace::Workspace(ExperimentConfig config, fs::path root)
    : config_(std::move(config)), digest_(config_digest(config_)), root_(std::move(root))
{
    if (const char* env = std::getenv(kRootEnvVar); env && *env) root_ = env;
}

fs::path Workspace::data_dir() const
{
    return root_ / config_.paths.data;
}

fs::path Workspace::models_dir() const
{
    return root_ / config_.paths.models;
}

fs::path Workspace::results_dir() const
{
    return root_ / config_.paths.results;
}

fs::path Workspace::model_path(const ArchitectureSpec& a, std::uint64_t seed) const
{
    return models_dir() /
           ("lstm_" + std::to_string(a.layers) + "x" + std::to_string(a.nodes) + "_seed" + std::to_string(seed) +
            ".json");
}

void write_artifact(const fs::path& path, const std::string& content)
{
    fs::path tmp = path;
    tmp += ".partial";
    csv::write_file(tmp.string(), content);
    fs::rename(tmp, path);
}

namespace {

fs::path sidecar(const fs::path& path)
{
    fs::path p = path;
    p += ".meta.json";
    return p;
}

void write_json_artifact(const Workspace& ws, const fs::path& path, json j)
{
    j["config_digest"] = ws.digest();
    write_artifact(path, j.dump(1) + "\n");
}

std::string tag(const ArchitectureSpec& a)
{
    return std::to_string(a.layers) + "x" + std::to_string(a.nodes);
}

json solver_summary(const ClosedLoopSummary& s)
{
    return {{"scenario", s.scenario},
            {"J", s.J},
            {"J_star", s.J_star},
            {"I", s.index},
            {"offset", s.verdict.offset},
            {"mean_abs_error", {s.verdict.mean_abs_error.cA, s.verdict.mean_abs_error.cR}},
            {"solver_stats", stats_to_json(s.stats)}};
}

} // namespace

void write_csv_artifact(const Workspace& ws, const fs::path& path, const std::string& content)
{
    write_artifact(path, content);
    write_artifact(sidecar(path), json{{"artifact", path.filename().string()}, {"config_digest", ws.digest()}}.dump(1) +
                                      "\n");
}

std::string artifact_digest(const fs::path& path)
{
    const fs::path meta = path.extension() == ".json" ? path : sidecar(path);
    if (!fs::exists(meta)) return {};
    try {
        const json j = json::parse(csv::read_file(meta.string()));
        if (j.contains("config_digest")) return j["config_digest"].get<std::string>();
        if (j.contains("metadata") && j["metadata"].contains("config_digest"))
            return j["metadata"]["config_digest"].get<std::string>();
    } catch (const json::exception&) {
    }
    return {};
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> run_sweep(const Workspace& ws, const SweepRequest& req)
{
    if (req.n < 1) throw DomainError("sweep: n must be >= 1");
    if (!(req.t_min > 0.0) || !(req.t_max >= req.t_min)) throw DomainError("sweep: need 0 < t_min <= t_max");
    const auto rows = sweep_steady_states(req.q, linspace(req.t_min, req.t_max, req.n), ws.config().plant.kinetics);
    write_csv_artifact(ws, req.out.value_or(ws.results_dir() / "sweep.csv"), sweep_to_csv(rows));
    return rows;
}

std::vector<OperatingPointRow> check_operating_points(const Workspace& ws)
{
    const std::vector<OperatingPointRow> reference{
        {0.8, {0.692, 0.287}, {}, false},
        {1.1, {0.822, 0.152}, {}, false},
        {1.043, {0.324, 0.406}, {}, false},
    };
    constexpr double tol = 0.005;
    std::vector<OperatingPointRow> rows;
    std::string out = "q,T,C_A,C_R,ref_C_A,ref_C_R,pass\n";
    for (auto row : reference) {
        row.computed = steady_state({0.8, row.T}, ws.config().plant.kinetics);
        row.pass = std::abs(row.computed.cA - row.reference.cA) <= tol &&
                   std::abs(row.computed.cR - row.reference.cR) <= tol;
        out += "0.8," + csv::format_double(row.T) + ',' + csv::format_double(row.computed.cA) + ',' +
               csv::format_double(row.computed.cR) + ',' + csv::format_double(row.reference.cA) + ',' +
               csv::format_double(row.reference.cR) + ',' + (row.pass ? "true" : "false") + '\n';
        rows.push_back(row);
    }
    write_csv_artifact(ws, ws.results_dir() / "operating_points.csv", out);
    return rows;
}

DataSplit gen_data(const Workspace& ws)
{
    const Plant plant = ws.config().make_plant();
    auto simulate = [&](const StaircaseSpec& spec) {
        const auto profile = generate_excitation(spec);
        return simulate_trajectory(plant, profile, steady_state(profile.front(), plant.kinetics()));
    };
    DataSplit d{simulate(ws.config().excitation.train), simulate(ws.config().excitation.test)};
    write_csv_artifact(ws, ws.train_data(), trajectory_to_csv(d.train));
    write_csv_artifact(ws, ws.test_data(), trajectory_to_csv(d.test));
    ws.log("gen-data: " + std::to_string(d.train.size()) + " training and " + std::to_string(d.test.size()) +
           " test samples");
    return d;
}

DataSplit load_data(const Workspace& ws)
{
    DataSplit d;
    for (auto [path, traj] : {std::pair{ws.train_data(), &d.train}, std::pair{ws.test_data(), &d.test}}) {
        if (!fs::exists(path))
            throw DataError("dataset '" + path.string() + "' not found; run `rnnmpc gen-data` with this config first");
        const auto digest = artifact_digest(path);
        if (digest != ws.digest())
            throw DataError("dataset '" + path.string() +
                            "' was produced by a different configuration; rerun `rnnmpc gen-data`");
        *traj = trajectory_from_csv(csv::read_file(path.string()), ws.config().plant.dt);
    }
    return d;
}

PreparedData prepare_data(const Workspace& ws, const DataSplit& data)
{
    const int p = ws.config().mpc.p;
    PreparedData out;
    Dataset train{Split::train, make_windows(data.train, p), false, {}};
    Dataset test{Split::test, make_windows(data.test, p), false, {}};
    std::vector<std::string> warnings;
    out.train = normalize(train, &warnings);
    for (const auto& w : warnings) ws.log("warning: " + w);
    out.test = normalize(test, out.train.normalization);
    out.batch = encode_windows(out.train.windows, p);
    return out;
}

TrainReport train_model(const Workspace& ws, const PreparedData& data, const TrainRequest& req)
{
    const auto& cfg = ws.config();
    TrainOptions opts = cfg.train_options(req.seed);
    const int log_every = std::max(1, opts.epochs / 10);
    opts.on_epoch = [&](int epoch, double loss) {
        if ((epoch + 1) % log_every == 0)
            ws.log("train " + tag(req.arch) + " seed " + std::to_string(req.seed) + ": epoch " +
                   std::to_string(epoch + 1) + " loss " + csv::format_double(loss));
    };
    auto result = train(LstmNetwork::initialized(cfg.shape(req.arch), req.seed), data.batch, opts);

    TrainReport rep;
    rep.arch = req.arch;
    rep.seed = req.seed;
    rep.model_path = req.out.value_or(ws.model_path(req.arch, req.seed));
    rep.train_rmse = evaluate_rmse(result.net, data.train, data.train.normalization, cfg.kernel());
    rep.test_rmse = evaluate_rmse(result.net, data.test, data.train.normalization, cfg.kernel());
    rep.loss_history = std::move(result.loss_history);

    ModelFile mf{std::move(result.net), data.train.normalization,
                 {{"config_digest", ws.digest()},
                  {"layers", req.arch.layers},
                  {"nodes", req.arch.nodes},
                  {"seed", req.seed},
                  {"epochs", opts.epochs},
                  {"train_rmse", rep.train_rmse},
                  {"test_rmse", rep.test_rmse}}};
    fs::create_directories(rep.model_path.parent_path().empty() ? "." : rep.model_path.parent_path());
    write_artifact(rep.model_path, model_to_json(mf).dump(1) + "\n");

    std::string loss = "epoch,loss\n";
    for (std::size_t e = 0; e < rep.loss_history.size(); ++e)
        loss += std::to_string(e + 1) + ',' + csv::format_double(rep.loss_history[e]) + '\n';
    write_csv_artifact(ws, ws.results_dir() / ("loss_" + tag(req.arch) + "_seed" + std::to_string(req.seed) + ".csv"),
                       loss);
    ws.log("train " + tag(req.arch) + " seed " + std::to_string(req.seed) + ": test RMSE " +
           csv::format_double(rep.test_rmse));
    return rep;
}

EvaluateReport evaluate_model(const Workspace& ws, const DataSplit& data, const fs::path& model)
{
    if (!fs::exists(model)) throw DataError("model file '" + model.string() + "' not found; run `rnnmpc train` first");
    const auto mf = load_model(model.string());
    const int p = ws.config().mpc.p;
    if (mf.net.horizon() != p)
        throw DataError("model horizon " + std::to_string(mf.net.horizon()) + " differs from mpc.p");
    EvaluateReport rep;
    rep.model_digest = mf.metadata.value("config_digest", std::string{});
    if (rep.model_digest != ws.digest()) ws.log("warning: model was trained under a different configuration");
    // Scored with the model's own normalization record.
    const Dataset train{Split::train, make_windows(data.train, p), false, {}};
    const Dataset test{Split::test, make_windows(data.test, p), false, {}};
    rep.train_rmse = evaluate_rmse(mf.net, train, mf.normalization, ws.config().kernel());
    rep.test_rmse = evaluate_rmse(mf.net, test, mf.normalization, ws.config().kernel());
    return rep;
}

std::vector<ClosedLoopSummary> run_closed_loop(const Workspace& ws, const ClosedLoopRequest& req)
{
    const auto& cfg = ws.config();
    const Plant plant = cfg.make_plant();
    auto scenarios = cfg.make_scenarios();
    if (!req.scenarios.empty()) {
        std::vector<Scenario> picked;
        for (const auto& name : req.scenarios) {
            auto it = std::find_if(scenarios.begin(), scenarios.end(), [&](const Scenario& s) { return s.name == name; });
            if (it == scenarios.end()) throw DomainError("unknown scenario '" + name + "'");
            picked.push_back(*it);
        }
        scenarios = std::move(picked);
    }

    std::shared_ptr<const PredictiveModel> model;
    std::string controller = "nmpc";
    if (req.model) {
        if (!fs::exists(*req.model))
            throw DataError("model file '" + req.model->string() + "' not found; run `rnnmpc train` first");
        auto mf = load_model(req.model->string());
        if (mf.net.horizon() != cfg.mpc.p) throw DataError("model horizon differs from mpc.p");
        model = std::make_shared<RnnModel>(std::move(mf.net), mf.normalization, cfg.kernel());
        controller = "rnn_" + req.model->stem().string();
    }
    const TruePlantModel reference(plant, cfg.mpc.p);

    std::vector<ClosedLoopSummary> out;
    const fs::path dir = ws.results_dir() / "closed_loop";
    for (const auto& sc : scenarios) {
        ws.log("run-closed-loop: " + controller + " on " + sc.name);
        const auto ref = run_scenario(plant, sc, reference, cfg.mpc);
        const auto rec = model ? run_scenario(plant, sc, *model, cfg.mpc) : ref;
        ClosedLoopSummary s;
        s.scenario = sc.name;
        s.J = rec.J;
        s.J_star = ref.J;
        s.index = performance_index(rec.J, ref.J);
        s.verdict = offset_verdict(rec, cfg.mpc.y_star, cfg.benchmark.offset_window, cfg.benchmark.offset_threshold);
        s.stats = rec.stats;
        const std::string base = controller + "_" + sc.name;
        write_csv_artifact(ws, dir / (base + ".csv"), record_to_csv(rec));
        write_csv_artifact(ws, dir / (base + "_solver.csv"), diagnostics_to_csv(rec));
        write_json_artifact(ws, dir / (base + ".json"), solver_summary(s));
        if (req.svg) write_artifact(dir / (base + ".svg"), record_to_svg(rec, cfg.mpc.y_star));
        out.push_back(std::move(s));
    }
    return out;
}

BenchmarkReport run_benchmark(const Workspace& ws)
{
    const auto& cfg = ws.config();
    std::vector<Architecture> archs;
    for (const auto& a : cfg.benchmark.architectures)
        for (const auto seed : cfg.benchmark.seeds) {
            const auto path = ws.model_path(a, seed);
            if (!fs::exists(path))
                throw DataError("model '" + path.string() + "' not found; run `rnnmpc train --layers " +
                                std::to_string(a.layers) + " --nodes " + std::to_string(a.nodes) + " --seed " +
                                std::to_string(seed) + "` first");
            auto mf = load_model(path.string());
            const auto digest = mf.metadata.value("config_digest", std::string{});
            if (digest != ws.digest())
                throw DataError("model '" + path.string() + "' has config digest '" + digest +
                                "', expected '" + ws.digest() + "'; refusing to mix artifacts");
            if (mf.net.shape().hidden != std::vector<int>(static_cast<std::size_t>(a.layers), a.nodes))
                throw DataError("model '" + path.string() + "' does not have architecture " + tag(a));
            archs.push_back(
                {a.layers, a.nodes, seed, std::make_shared<RnnModel>(std::move(mf.net), mf.normalization, cfg.kernel())});
        }
    ws.log("benchmark: " + std::to_string(archs.size()) + " models x " + std::to_string(cfg.scenarios.size()) +
           " scenarios");
    const auto scenarios = cfg.make_scenarios();
    auto report = benchmark_suite(cfg.make_plant(), scenarios, cfg.mpc, archs, cfg.benchmark.offset_window,
                                  cfg.benchmark.offset_threshold);

    const fs::path dir = ws.results_dir() / "benchmark";
    json runs = json::array();
    for (std::size_t i = 0; i < report.reference.size(); ++i) {
        write_csv_artifact(ws, dir / ("nmpc_" + scenarios[i].name + ".csv"), record_to_csv(report.reference[i]));
        runs.push_back({{"controller", "nmpc"},
                        {"scenario", scenarios[i].name},
                        {"J", report.reference[i].J},
                        {"solver_stats", stats_to_json(report.reference[i].stats)}});
    }
    json rows = json::array();
    for (const auto& row : report.rows) {
        const std::string name =
            "rnn_" + std::to_string(row.layers) + "x" + std::to_string(row.nodes) + "_seed" + std::to_string(row.seed);
        for (std::size_t i = 0; i < row.runs.size(); ++i) {
            write_csv_artifact(ws, dir / (name + "_" + scenarios[i].name + ".csv"), record_to_csv(row.runs[i]));
            runs.push_back({{"controller", name},
                            {"seed", row.seed},
                            {"scenario", scenarios[i].name},
                            {"J", row.runs[i].J},
                            {"I", row.index[i]},
                            {"solver_stats", stats_to_json(row.runs[i].stats)}});
        }
        rows.push_back({{"layers", row.layers},
                        {"nodes", row.nodes},
                        {"seed", row.seed},
                        {"I", row.index},
                        {"I_avg", row.index_avg},
                        {"offset", row.offset}});
    }
    write_csv_artifact(ws, ws.results_dir() / "benchmark.csv", report_to_csv(report, scenarios));
    write_json_artifact(ws, ws.results_dir() / "benchmark.json", {{"rows", rows}, {"runs", runs}});
    return report;
}

double median(std::vector<double> v)
{
    if (v.empty()) throw DomainError("median of an empty list");
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json reproduce_all(const Workspace& ws)
{
    const auto& cfg = ws.config();
    json report;
    auto stage = [&](const char* name, auto&& fn) {
        ws.log("reproduce-all: " + std::string(name));
        json status = {{"stage", name}, {"status", "running"}, {"config_digest", ws.digest()}};
        write_artifact(ws.results_dir() / "status.json", status.dump(1) + "\n");
        fn();
    };

    stage("sweep", [&] {
        const auto rows = run_sweep(ws, {0.8, 0.5, 1.1, 121, std::nullopt});
        std::size_t peak = 0, ratio = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].x.cR > rows[peak].x.cR) peak = i;
            if (rows[i].x.cR / rows[i].x.cA > rows[ratio].x.cR / rows[ratio].x.cA) ratio = i;
        }
        report["sweep"] = {{"T_peak_C_R", rows[peak].T}, {"T_max_ratio", rows[ratio].T}};
    });
    stage("operating-points", [&] {
        json rows = json::array();
        bool all = true;
        for (const auto& r : check_operating_points(ws)) {
            rows.push_back({{"T", r.T}, {"computed", {r.computed.cA, r.computed.cR}}, {"pass", r.pass}});
            all = all && r.pass;
        }
        report["operating_points"] = {{"rows", rows}, {"pass", all}};
    });

    DataSplit data;
    stage("gen-data", [&] { data = gen_data(ws); });
    const auto prepared = prepare_data(ws, data);

    std::vector<StudyRow> study;
    std::vector<std::pair<ArchitectureSpec, std::uint64_t>> trained;
    auto ensure = [&](const ArchitectureSpec& a, std::uint64_t seed) {
        for (const auto& s : study)
            if (s.arch == a && s.seed == seed) return;
        const auto rep = train_model(ws, prepared, {a, seed, std::nullopt});
        study.push_back({a, seed, rep.train_rmse, rep.test_rmse});
    };
    stage("train", [&] {
        for (const auto* list : {&cfg.benchmark.study_architectures, &cfg.benchmark.architectures})
            for (const auto& a : *list)
                for (auto seed : cfg.benchmark.seeds) ensure(a, seed);
    });

    stage("rmse-report", [&] {
        std::string csv = "layers,nodes,seed,train_rmse,test_rmse\n";
        for (const auto& s : study)
            csv += std::to_string(s.arch.layers) + ',' + std::to_string(s.arch.nodes) + ',' + std::to_string(s.seed) +
                   ',' + csv::format_double(s.train_rmse) + ',' + csv::format_double(s.test_rmse) + '\n';
        write_csv_artifact(ws, ws.results_dir() / "rmse.csv", csv);
        json medians = json::array();
        std::string summary = "layers,nodes,seeds,median_test_rmse\n";
        for (const auto& a : cfg.benchmark.study_architectures) {
            std::vector<double> v;
            for (const auto& s : study)
                if (s.arch == a && std::count(cfg.benchmark.seeds.begin(), cfg.benchmark.seeds.end(), s.seed))
                    v.push_back(s.test_rmse);
            if (v.empty()) continue;
            const double m = median(v);
            medians.push_back({{"layers", a.layers}, {"nodes", a.nodes}, {"median_test_rmse", m}});
            summary += std::to_string(a.layers) + ',' + std::to_string(a.nodes) + ',' + std::to_string(v.size()) + ',' +
                       csv::format_double(m) + '\n';
        }
        write_csv_artifact(ws, ws.results_dir() / "rmse_summary.csv", summary);
        report["rmse"] = {{"medians", medians}};
    });

    stage("benchmark", [&] {
        const auto bench = run_benchmark(ws);
        json rows = json::array();
        double best = -1e300;
        bool offset_flagged = false;
        for (const auto& r : bench.rows) {
            rows.push_back({{"layers", r.layers},
                            {"nodes", r.nodes},
                            {"seed", r.seed},
                            {"I_avg", r.index_avg},
                            {"offset", r.offset}});
            best = std::max(best, r.index_avg);
            offset_flagged = offset_flagged || r.offset;
        }
        report["benchmark"] = {{"rows", rows}, {"best_I_avg", bench.rows.empty() ? json() : json(best)},
                               {"offset_flagged", offset_flagged}};
    });

    write_json_artifact(ws, ws.results_dir() / "report.json", report);
    write_artifact(ws.results_dir() / "status.json",
                   json{{"stage", "done"}, {"status", "complete"}, {"config_digest", ws.digest()}}.dump(1) + "\n");
    return report;
}

} // namespace rnnmpc
