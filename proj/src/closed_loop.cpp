#include "rnnmpc/closed_loop.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rnnmpc/csv.hpp"
#include "rnnmpc/errors.hpp"

namespace rnnmpc {

void Scenario::validate(const KineticParameters& kin, int p) const
{
    if (steps < 1) throw DomainError("scenario " + name + ": steps must be >= 1");
    if (warmup < p) throw DomainError("scenario " + name + ": warm-up must cover the p-step history");
    if (warmup >= steps) throw DomainError("scenario " + name + ": warm-up must be shorter than the run");
    const auto d = state_derivative(x0, u0, kin);
    if (std::hypot(d.cA, d.cR) >= 1e-6)
        throw DomainError("scenario " + name + ": x0 is not a steady state of u0");
}

Scenario make_scenario(std::string name, const ControlInput& u0, const KineticParameters& kin, int steps, int warmup)
{
    return {std::move(name), steady_state(u0, kin), u0, steps, warmup};
}

std::vector<Scenario> default_scenarios(const KineticParameters& kin, int steps, int warmup)
{
    return {make_scenario("startup", {0.8, 0.8}, kin, steps, warmup),
            make_scenario("recovery", {0.8, 1.1}, kin, steps, warmup)};
}

ClosedLoopRecord run_scenario(const Plant& plant, const Scenario& sc, const PredictiveModel& model,
                              const MpcSettings& s)
{
    s.validate();
    sc.validate(plant.kinetics(), s.p);
    if (model.horizon() != s.p) throw ShapeError("run_scenario: model horizon differs from settings.p");

    ClosedLoopRecord rec;
    rec.scenario = sc.name;
    rec.steps.reserve(static_cast<std::size_t>(sc.steps));
    HistoryBuffer hist(s.p);
    PlantState x = sc.x0;
    ControlInput u = sc.u0;
    std::vector<ControlInput> warm;

    for (int k = 0; k < sc.steps; ++k) {
        StepRecord row;
        row.k = k;
        row.t = k * plant.dt();
        row.y = x;
        hist.push_measurement(x);
        if (k >= sc.warmup) {
            const auto sol = solve_rhc(model, hist, s, warm);
            const ControlInput u_next = apply_first_move(sol.du, u, s);
            row.du = sol.du.front();
            u = u_next;
            row.controlled = true;
            row.stage_cost = tracking_cost(row.y, s) + move_cost(row.du, s);
            row.iterations = sol.iterations;
            row.evaluations = sol.evaluations;
            row.converged = sol.converged;
            row.solver_cost = sol.cost;
            row.constraint_residual = sol.constraint_residual;

            auto& st = rec.stats;
            ++st.solves;
            st.total_iterations += sol.iterations;
            st.max_iterations = std::max(st.max_iterations, sol.iterations);
            if (!sol.converged) ++st.not_converged;
            st.max_constraint_residual = std::max(st.max_constraint_residual, sol.constraint_residual);
            warm = shift_warm_start(sol.du);
        }
        row.u = u;
        hist.push_input(u);
        rec.J += row.stage_cost;
        rec.steps.push_back(row);
        x = plant.step(x, u);
    }
    return rec;
}

double performance_index(double J_rnn, double J_star)
{
    if (!(J_star > 0.0)) throw DomainError("performance index undefined: benchmark cost J* must be positive");
    return (1.0 - (J_rnn - J_star) / J_star) * 100.0;
}

OffsetVerdict offset_verdict(const ClosedLoopRecord& rec, const PlantState& y_star, int window_steps, double threshold)
{
    if (rec.steps.empty()) throw DomainError("offset_verdict: empty record");
    const auto n = std::min<std::size_t>(rec.steps.size(), static_cast<std::size_t>(std::max(window_steps, 1)));
    OffsetVerdict v;
    for (auto it = rec.steps.end() - static_cast<std::ptrdiff_t>(n); it != rec.steps.end(); ++it) {
        v.mean_abs_error.cA += std::abs(it->y.cA - y_star.cA);
        v.mean_abs_error.cR += std::abs(it->y.cR - y_star.cR);
    }
    v.mean_abs_error.cA /= static_cast<double>(n);
    v.mean_abs_error.cR /= static_cast<double>(n);
    v.offset = v.mean_abs_error.cA > threshold || v.mean_abs_error.cR > threshold;
    return v;
}

std::string record_to_csv(const ClosedLoopRecord& rec)
{
    using csv::format_double;
    std::string s = "k,t,C_A,C_R,q,T,dq,dT,stage_cost\n";
    for (const auto& r : rec.steps) {
        s += std::to_string(r.k);
        for (double v : {r.t, r.y.cA, r.y.cR, r.u.q, r.u.T, r.du.q, r.du.T, r.stage_cost}) {
            s += ',';
            s += format_double(v);
        }
        s += '\n';
    }
    return s;
}

std::string diagnostics_to_csv(const ClosedLoopRecord& rec)
{
    std::string s = "k,iterations,evaluations,converged,cost,constraint_residual\n";
    for (const auto& r : rec.steps) {
        if (!r.controlled) continue;
        s += std::to_string(r.k) + ',' + std::to_string(r.iterations) + ',' + std::to_string(r.evaluations) + ',' +
             (r.converged ? "1" : "0") + ',' + csv::format_double(r.solver_cost) + ',' +
             csv::format_double(r.constraint_residual) + '\n';
    }
    return s;
}

std::string record_to_svg(const ClosedLoopRecord& rec, const PlantState& y_star)
{
    constexpr double W = 640, H = 180, pad = 30;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << 4 * H << "\">\n";
    const double t_max = rec.steps.empty() ? 1.0 : std::max(rec.steps.back().t, 1e-9);
    auto panel = [&](int row, const char* label, auto value, double ref, bool has_ref) {
        double lo = 1e300, hi = -1e300;
        for (const auto& r : rec.steps) {
            lo = std::min(lo, value(r));
            hi = std::max(hi, value(r));
        }
        if (has_ref) {
            lo = std::min(lo, ref);
            hi = std::max(hi, ref);
        }
        if (hi - lo < 1e-9) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double y0 = row * H;
        auto px = [&](double t) { return pad + (W - 2 * pad) * t / t_max; };
        auto py = [&](double v) { return y0 + H - pad - (H - 2 * pad) * (v - lo) / (hi - lo); };
        svg << "<text x=\"" << pad << "\" y=\"" << y0 + 18 << "\" font-size=\"12\">" << label << " [" << lo << ", "
            << hi << "]</text>\n<polyline fill=\"none\" stroke=\"black\" points=\"";
        for (const auto& r : rec.steps) svg << px(r.t) << ',' << py(value(r)) << ' ';
        svg << "\"/>\n";
        if (has_ref)
            svg << "<line stroke=\"red\" stroke-dasharray=\"4\" x1=\"" << px(0) << "\" x2=\"" << px(t_max) << "\" y1=\""
                << py(ref) << "\" y2=\"" << py(ref) << "\"/>\n";
    };
    panel(0, "C_A", [](const StepRecord& r) { return r.y.cA; }, y_star.cA, true);
    panel(1, "C_R", [](const StepRecord& r) { return r.y.cR; }, y_star.cR, true);
    panel(2, "q", [](const StepRecord& r) { return r.u.q; }, 0.0, false);
    panel(3, "T", [](const StepRecord& r) { return r.u.T; }, 0.0, false);
    svg << "</svg>\n";
    return svg.str();
}

nlohmann::json stats_to_json(const SolverStats& s)
{
    return {{"solves", s.solves},
            {"total_iterations", s.total_iterations},
            {"max_iterations", s.max_iterations},
            {"not_converged", s.not_converged},
            {"max_constraint_residual", s.max_constraint_residual}};
}

BenchmarkReport benchmark_suite(const Plant& plant, const std::vector<Scenario>& scenarios, const MpcSettings& settings,
                                const std::vector<Architecture>& architectures, int offset_window_steps,
                                double offset_threshold)
{
    BenchmarkReport report;
    if (architectures.empty()) return report;
    for (const auto& a : architectures)
        if (!a.model) throw DomainError("benchmark: architecture without a trained model");

    const TruePlantModel reference_model(plant, settings.p);
    const std::size_t ns = scenarios.size();
    const std::size_t runs = ns * (architectures.size() + 1);
    std::vector<ClosedLoopRecord> results(runs);
    std::vector<std::string> errors(runs);

    // Run r < ns is the reference on scenario r; the rest are (architecture, scenario) pairs.
    const auto n_runs = static_cast<std::ptrdiff_t>(runs);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t r = 0; r < n_runs; ++r) {
        const auto ri = static_cast<std::size_t>(r);
        const std::size_t si = ri % ns;
        const PredictiveModel& model = ri < ns ? static_cast<const PredictiveModel&>(reference_model)
                                               : *architectures[ri / ns - 1].model;
        try {
            results[ri] = run_scenario(plant, scenarios[si], model, settings);
        } catch (const std::exception& e) {
            errors[ri] = e.what();
        }
    }
    for (std::size_t r = 0; r < runs; ++r)
        if (!errors[r].empty()) throw std::runtime_error("benchmark run " + std::to_string(r) + ": " + errors[r]);

    report.reference.assign(results.begin(), results.begin() + static_cast<std::ptrdiff_t>(ns));
    for (std::size_t a = 0; a < architectures.size(); ++a) {
        ReportRow row;
        row.layers = architectures[a].layers;
        row.nodes = architectures[a].nodes;
        row.seed = architectures[a].seed;
        double sum = 0.0;
        for (std::size_t si = 0; si < ns; ++si) {
            auto& rec = results[(a + 1) * ns + si];
            const double I = performance_index(rec.J, report.reference[si].J);
            row.index.push_back(I);
            sum += I;
            row.offset = row.offset ||
                         offset_verdict(rec, settings.y_star, offset_window_steps, offset_threshold).offset;
            row.runs.push_back(std::move(rec));
        }
        row.index_avg = ns ? sum / static_cast<double>(ns) : 0.0;
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string report_to_csv(const BenchmarkReport& report, const std::vector<Scenario>& scenarios)
{
    std::string s = "layers,nodes,seed";
    for (const auto& sc : scenarios) s += ",I_" + sc.name;
    s += ",I_avg,offset\n";
    for (const auto& row : report.rows) {
        s += std::to_string(row.layers) + ',' + std::to_string(row.nodes) + ',' + std::to_string(row.seed);
        for (double I : row.index) s += ',' + csv::format_double(I);
        s += ',' + csv::format_double(row.index_avg) + ',' + (row.offset ? "true" : "false") + '\n';
    }
    return s;
}

} // namespace rnnmpc
