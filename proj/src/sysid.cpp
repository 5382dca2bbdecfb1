#include "rnnmpc/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>


#include "rnnmpc/csv.hpp"
#include "rnnmpc/errors.hpp"

namespace rnnmpc {

std::vector<double> staircase_levels(const StaircaseSpec& spec)
{
    if (!(spec.t_step > 0.0)) throw DomainError("staircase step must be positive");
    if (!(spec.t_max >= spec.t_min)) throw DomainError("staircase range is empty");
    std::vector<double> up;
    for (int i = 0;; ++i) {
        const double t = spec.t_min + i * spec.t_step;
        if (t > spec.t_max + 1e-9) break;
        up.push_back(std::min(t, spec.t_max));
    }
    std::vector<double> levels = up;
    for (auto it = up.rbegin() + 1; it < up.rend(); ++it) levels.push_back(*it);
    return levels;
}

std::vector<ControlInput> generate_excitation(const StaircaseSpec& spec)
{
    if (spec.q_levels.empty()) throw DomainError("excitation needs at least one flow-rate level");
    if (spec.dwell < 1) throw DomainError("dwell must be >= 1");
    if (spec.ramp < 0 || spec.ramp >= spec.dwell) throw DomainError("ramp must lie in [0, dwell)");
    if (spec.jitter < 0.0) throw DomainError("jitter must be non-negative");
    for (double q : spec.q_levels)
        if (!(q > 0.0)) throw DomainError("flow-rate levels must be positive");

    const auto nominal = staircase_levels(spec);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> noise(-1.0, 1.0);

    std::vector<ControlInput> profile;
    profile.reserve(spec.q_levels.size() * nominal.size() * static_cast<std::size_t>(spec.dwell));
    double prev_T = std::numeric_limits<double>::quiet_NaN();
    for (double q : spec.q_levels) {
        for (double level : nominal) {
            double target = level + spec.jitter * noise(rng);
            target = std::clamp(target, spec.t_min, spec.t_max);
            for (int i = 0; i < spec.dwell; ++i) {
                double T = target;
                if (!std::isnan(prev_T) && i < spec.ramp)
                    T = prev_T + (target - prev_T) * (i + 1) / (spec.ramp + 1);
                profile.push_back({q, T});
            }
            prev_T = target;
        }
    }
    return profile;
}

Trajectory simulate_trajectory(const Plant& plant, const std::vector<ControlInput>& profile,
                               const PlantState& x0)
{
    Trajectory traj;
    traj.dt = plant.dt();
    traj.inputs = profile;
    traj.times.reserve(profile.size());
    traj.outputs.reserve(profile.size());
    PlantState x = x0;
    for (std::size_t k = 0; k < profile.size(); ++k) {
        traj.times.push_back(static_cast<double>(k) * plant.dt());
        traj.outputs.push_back(x);
        if (k + 1 < profile.size()) x = plant.step(x, profile[k]);
    }
    return traj;
}

std::vector<RegressorWindow> make_windows(const Trajectory& traj, int p)
{
    if (p < 1) throw DomainError("window horizon must be >= 1");
    if (traj.inputs.size() != traj.outputs.size()) throw DataError("trajectory inputs/outputs differ in length");
    const auto n = traj.size();
    if (n < static_cast<std::size_t>(p) + 1)
        throw DataError("trajectory of length " + std::to_string(n) + " is too short for p = " +
                        std::to_string(p));
    std::vector<RegressorWindow> out;
    out.reserve(n - p);
    for (std::size_t k = 0; k + p < n; ++k) {
        RegressorWindow w;
        w.y0 = traj.outputs[k];
        w.u_seq.assign(traj.inputs.begin() + k, traj.inputs.begin() + k + p);
        w.target = traj.outputs[k + p];
        out.push_back(std::move(w));
    }
    return out;
}

namespace {

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v)
    {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    ChannelScale to_scale(const char* name, std::vector<std::string>* warnings) const
    {
        if (hi > lo) return {0.5 * (hi + lo), 0.5 * (hi - lo)};
        if (warnings) warnings->push_back(std::string("channel ") + name + " is constant; using unit scale");
        return {lo, 1.0};
    }
};

} // namespace

Normalization fit_normalization(const std::vector<RegressorWindow>& windows, std::vector<std::string>* warnings)
{
    if (windows.empty()) throw DataError("cannot normalize an empty dataset");
    Range a, r, q, T;
    for (const auto& w : windows) {
        a.add(w.y0.cA);
        r.add(w.y0.cR);
        a.add(w.target.cA);
        r.add(w.target.cR);
        for (const auto& u : w.u_seq) {
            q.add(u.q);
            T.add(u.T);
        }
    }
    return {a.to_scale("C_A", warnings), r.to_scale("C_R", warnings), q.to_scale("q", warnings),
            T.to_scale("T", warnings)};
}

RegressorWindow normalize_window(const RegressorWindow& w, const Normalization& norm)
{
    RegressorWindow out;
    out.y0 = norm.apply(w.y0);
    out.target = norm.apply(w.target);
    out.u_seq.reserve(w.u_seq.size());
    for (const auto& u : w.u_seq) out.u_seq.push_back(norm.apply(u));
    return out;
}

Dataset normalize(const Dataset& ds, const Normalization& norm)
{
    if (ds.normalized) throw DataError("dataset is already normalized");
    if (ds.windows.empty()) throw DataError("cannot normalize an empty dataset");
    Dataset out;
    out.split = ds.split;
    out.normalized = true;
    out.normalization = norm;
    out.windows.reserve(ds.windows.size());
    for (const auto& w : ds.windows) out.windows.push_back(normalize_window(w, norm));
    return out;
}

Dataset normalize(const Dataset& ds, std::vector<std::string>* warnings)
{
    return normalize(ds, fit_normalization(ds.windows, warnings));
}

Dataset denormalize(const Dataset& ds)
{
    if (!ds.normalized) return ds;
    Dataset out;
    out.split = ds.split;
    out.normalized = false;
    out.normalization = ds.normalization;
    out.windows.reserve(ds.windows.size());
    const auto& n = ds.normalization;
    for (const auto& w : ds.windows) {
        RegressorWindow p;
        p.y0 = n.invert(w.y0);
        p.target = n.invert(w.target);
        for (const auto& u : w.u_seq) p.u_seq.push_back(n.invert(u));
        out.windows.push_back(std::move(p));
    }
    return out;
}

std::string trajectory_to_csv(const Trajectory& traj)
{
    std::string s = "k,C_A,C_R,q,T\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        s += std::to_string(k);
        for (double v : {traj.outputs[k].cA, traj.outputs[k].cR, traj.inputs[k].q, traj.inputs[k].T}) {
            s += ',';
            s += csv::format_double(v);
        }
        s += '\n';
    }
    return s;
}

Trajectory trajectory_from_csv(const std::string& text, double dt)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("dataset CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "k,C_A,C_R,q,T") throw DataError("unexpected dataset CSV header '" + line + "'");
    Trajectory traj;
    traj.dt = dt;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = csv::split(line);
        if (f.size() != 5) throw DataError("dataset CSV row " + std::to_string(expected) + " has " +
                                           std::to_string(f.size()) + " fields");
        if (static_cast<std::size_t>(csv::parse_double(f[0])) != expected)
            throw DataError("dataset CSV rows are not consecutive at k=" + std::to_string(expected));
        traj.times.push_back(static_cast<double>(expected) * dt);
        traj.outputs.push_back({csv::parse_double(f[1]), csv::parse_double(f[2])});
        traj.inputs.push_back({csv::parse_double(f[3]), csv::parse_double(f[4])});
        ++expected;
    }
    return traj;
}

nlohmann::json normalization_to_json(const Normalization& norm)
{
    auto ch = [](const ChannelScale& c) { return nlohmann::json{{"offset", c.offset}, {"scale", c.scale}}; };
    return {{"C_A", ch(norm.cA)}, {"C_R", ch(norm.cR)}, {"q", ch(norm.q)}, {"T", ch(norm.T)}};
}

Normalization normalization_from_json(const nlohmann::json& j)
{
    auto ch = [&](const char* name) {
        if (!j.contains(name)) throw DataError(std::string("normalization record lacks channel ") + name);
        const auto& c = j.at(name);
        ChannelScale s{c.at("offset").get<double>(), c.at("scale").get<double>()};
        if (!(s.scale != 0.0) || !std::isfinite(s.scale))
            throw DataError(std::string("normalization scale for ") + name + " must be finite and nonzero");
        return s;
    };
    return {ch("C_A"), ch("C_R"), ch("q"), ch("T")};
}

} // namespace rnnmpc
