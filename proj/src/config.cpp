#include "rnnmpc/config.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "rnnmpc/csv.hpp"
#include "rnnmpc/errors.hpp"

namespace rnnmpc {

using nlohmann::json;

namespace {

std::string fmt(double v)
{
    return csv::format_double(v);
}

// Walks one JSON object: every accessor marks its key as known, ranges are
// checked in place and violations accumulate in a shared list.
class Reader {
public:
    Reader(const json* node, std::string path, std::vector<std::pair<std::string, std::string>>& errors)
        : node_(node), path_(std::move(path)), errors_(errors)
    {
        if (node_ && !node_->is_object()) {
            fail(path_, "expected an object");
            node_ = nullptr;
        }
    }

    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    ~Reader()
    {
        if (!node_) return;
        for (const auto& [key, _] : node_->items())
            if (!known_.count(key)) fail(at(key), "unknown key");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key)
    {
        known_.insert(key);
        if (!node_) return nullptr;
        auto it = node_->find(key);
        return it == node_->end() ? nullptr : &*it;
    }

    Reader child(const std::string& key) { return Reader(find(key), at(key), errors_); }

    void number(const std::string& key, double& out, double lo, double hi, bool lo_open = false,
                bool hi_open = false)
    {
        if (const json* v = find(key)) read_number(*v, at(key), out, lo, hi, lo_open, hi_open);
    }

    void integer(const std::string& key, int& out, long lo, long hi)
    {
        if (const json* v = find(key)) read_integer(*v, at(key), out, lo, hi);
    }

    void seed(const std::string& key, std::uint64_t& out)
    {
        if (const json* v = find(key)) read_seed(*v, at(key), out);
    }

    void string(const std::string& key, std::string& out)
    {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_string() || v->get<std::string>().empty())
            fail(at(key), "expected a non-empty string");
        else
            out = v->get<std::string>();
    }

    void fail(const std::string& path, const std::string& msg)
    {
        errors_.emplace_back(path.empty() ? "<document>" : path, msg);
    }

    void read_number(const json& v, const std::string& path, double& out, double lo, double hi, bool lo_open,
                     bool hi_open)
    {
        if (!v.is_number()) {
            fail(path, "expected a number");
            return;
        }
        const double x = v.get<double>();
        const bool ok = std::isfinite(x) && (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
        if (!ok) {
            fail(path, "value " + fmt(x) + " outside " + (lo_open ? "(" : "[") + fmt(lo) + ", " + fmt(hi) +
                           (hi_open ? ")" : "]"));
            return;
        }
        out = x;
    }

    void read_integer(const json& v, const std::string& path, int& out, long lo, long hi)
    {
        if (!v.is_number_integer()) {
            fail(path, "expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            return;
        }
        const auto x = v.get<long long>();
        if (x < lo || x > hi) {
            fail(path, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + "]");
            return;
        }
        out = static_cast<int>(x);
    }

    void read_seed(const json& v, const std::string& path, std::uint64_t& out)
    {
        if (v.is_number_unsigned())
            out = v.get<std::uint64_t>();
        else if (v.is_number_integer() && v.get<long long>() >= 0)
            out = static_cast<std::uint64_t>(v.get<long long>());
        else
            fail(path, "expected a non-negative integer seed");
    }

    /// Fixed-length numeric array.
    template <std::size_t N>
    bool array(const std::string& key, std::array<double, N>& out, double lo, double hi, bool lo_open = false)
    {
        const json* v = find(key);
        if (!v) return false;
        if (!v->is_array() || v->size() != N) {
            fail(at(key), "expected an array of " + std::to_string(N) + " numbers");
            return false;
        }
        const auto before = errors_.size();
        for (std::size_t i = 0; i < N; ++i)
            read_number((*v)[i], at(key) + "[" + std::to_string(i) + "]", out[i], lo, hi, lo_open, false);
        return errors_.size() == before;
    }

    void numbers(const std::string& key, std::vector<double>& out, double lo, double hi)
    {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_array() || v->empty()) {
            fail(at(key), "expected a non-empty array of numbers");
            return;
        }
        std::vector<double> vals(v->size());
        for (std::size_t i = 0; i < v->size(); ++i)
            read_number((*v)[i], at(key) + "[" + std::to_string(i) + "]", vals[i], lo, hi, false, false);
        out = std::move(vals);
    }

    const std::string& path() const { return path_; }
    std::vector<std::pair<std::string, std::string>>& errors() { return errors_; }

private:
    const json* node_;
    std::string path_;
    std::vector<std::pair<std::string, std::string>>& errors_;
    std::set<std::string> known_;
};

void read_interval(Reader& r, const std::string& key, double& lo, double& hi, double min, double max)
{
    std::array<double, 2> v{lo, hi};
    if (!r.array(key, v, min, max)) return;
    if (!(v[0] < v[1])) {
        r.fail(r.at(key), "lower bound " + fmt(v[0]) + " must be below upper bound " + fmt(v[1]));
        return;
    }
    lo = v[0];
    hi = v[1];
}

void read_staircase(Reader r, StaircaseSpec& s)
{
    r.numbers("q_levels", s.q_levels, 0.0, 10.0);
    r.number("t_min", s.t_min, 0.0, 10.0, true);
    r.number("t_max", s.t_max, 0.0, 10.0, true);
    r.number("t_step", s.t_step, 0.0, 10.0, true);
    r.integer("dwell", s.dwell, 1, 100000);
    r.integer("ramp", s.ramp, 0, 100000);
    r.number("jitter", s.jitter, 0.0, 0.1);
    r.seed("seed", s.seed);
    if (!(s.t_min < s.t_max)) r.fail(r.at("t_max"), "must exceed t_min = " + fmt(s.t_min));
    if (s.ramp >= s.dwell) r.fail(r.at("ramp"), "must lie in [0, dwell - 1] = [0, " + std::to_string(s.dwell - 1) + "]");
}

void read_arch_list(Reader& r, const std::string& key, std::vector<ArchitectureSpec>& out)
{
    const json* v = r.find(key);
    if (!v) return;
    if (!v->is_array()) {
        r.fail(r.at(key), "expected an array of {layers, nodes}");
        return;
    }
    std::vector<ArchitectureSpec> list;
    for (std::size_t i = 0; i < v->size(); ++i) {
        ArchitectureSpec a;
        Reader ar(&(*v)[i], r.at(key) + "[" + std::to_string(i) + "]", r.errors());
        ar.integer("layers", a.layers, 1, 8);
        ar.integer("nodes", a.nodes, 1, 4096);
        list.push_back(a);
    }
    out = std::move(list);
}

json staircase_to_json(const StaircaseSpec& s)
{
    return {{"q_levels", s.q_levels}, {"t_min", s.t_min}, {"t_max", s.t_max}, {"t_step", s.t_step},
            {"dwell", s.dwell},       {"ramp", s.ramp},   {"jitter", s.jitter}, {"seed", s.seed}};
}

json arch_list_to_json(const std::vector<ArchitectureSpec>& list)
{
    json a = json::array();
    for (const auto& x : list) a.push_back({{"layers", x.layers}, {"nodes", x.nodes}});
    return a;
}

} // namespace

ExperimentConfig validate_config(const json& document)
{
    ExperimentConfig c;
    std::vector<std::pair<std::string, std::string>> errors;
    {
        Reader root(&document, "", errors);
        root.integer("schema_version", c.schema_version, kSchemaVersion, kSchemaVersion);

        {
            Reader r = root.child("plant");
            r.number("cA0", c.plant.kinetics.cA0, 0.0, 1.0, true);
            r.array("k0", c.plant.kinetics.k0, 0.0, 1e12, true);
            r.array("E", c.plant.kinetics.e_over_rt0, 0.0, 1e6, true);
            r.number("dt", c.plant.dt, 0.0, 10.0, true);
            r.integer("substeps", c.plant.substeps, 1, 100000);
        }
        {
            Reader r = root.child("excitation");
            read_staircase(r.child("train"), c.excitation.train);
            read_staircase(r.child("test"), c.excitation.test);
        }
        {
            Reader r = root.child("model");
            r.integer("layers", c.model.arch.layers, 1, 8);
            r.integer("nodes", c.model.arch.nodes, 1, 4096);
            r.integer("epochs", c.model.epochs, 1, 1000000);
            r.integer("batch_size", c.model.batch_size, 1, 1000000);
            r.seed("seed", c.model.seed);
            r.number("lr", c.model.adam.lr, 0.0, 1.0, true);
            r.number("beta1", c.model.adam.beta1, 0.0, 1.0, false, true);
            r.number("beta2", c.model.adam.beta2, 0.0, 1.0, false, true);
            r.number("eps", c.model.adam.eps, 0.0, 1e-2, true);
            r.integer("chunk", c.model.chunk, 1, 65536);
            r.integer("threads", c.model.threads, 0, 1024);
        }
        {
            Reader r = root.child("mpc");
            auto& s = c.mpc;
            r.integer("p", s.p, 1, 100);
            r.integer("m", s.m, 1, 100);
            if (s.m > s.p) r.fail(r.at("m"), "must lie in [1, p] = [1, " + std::to_string(s.p) + "]");
            std::array<double, 2> v{s.Qy(0), s.Qy(1)};
            if (r.array("Qy", v, 0.0, 1e12)) s.Qy = {v[0], v[1]};
            v = {s.Qu(0), s.Qu(1)};
            if (r.array("Qu", v, 0.0, 1e12)) s.Qu = {v[0], v[1]};
            v = {s.y_star.cA, s.y_star.cR};
            if (r.array("y_star", v, 0.0, 1.0)) s.y_star = {v[0], v[1]};
            {
                Reader b = r.child("u_bounds");
                read_interval(b, "q", s.u_min.q, s.u_max.q, 0.0, 10.0);
                read_interval(b, "T", s.u_min.T, s.u_max.T, 1e-6, 10.0);
            }
            {
                Reader b = r.child("du_bounds");
                read_interval(b, "q", s.du_min.q, s.du_max.q, -10.0, 10.0);
                read_interval(b, "T", s.du_min.T, s.du_max.T, -10.0, 10.0);
                if (!(s.du_min.q < 0.0 && s.du_max.q > 0.0)) b.fail(b.at("q"), "must straddle zero");
                if (!(s.du_min.T < 0.0 && s.du_max.T > 0.0)) b.fail(b.at("T"), "must straddle zero");
            }
            if (s.y_star.cA + s.y_star.cR > 1.0) r.fail(r.at("y_star"), "C_A + C_R must not exceed 1");
            Reader o = r.child("solver");
            o.integer("max_iter", s.solver.max_iter, 1, 100000);
            o.number("fd_step", s.solver.fd_step, 0.0, 1e-2, true);
            o.number("step_tol", s.solver.step_tol, 0.0, 1.0);
            o.number("decrease_tol", s.solver.decrease_tol, 0.0, 1.0);
            o.integer("qp_max_iter", s.solver.qp_max_iter, 1, 1000000);
            o.number("qp_tol", s.solver.qp_tol, 0.0, 1.0);
            o.integer("max_backtracks", s.solver.max_backtracks, 0, 200);
        }
        c.mpc.dt = c.plant.dt;

        if (const json* sc = root.find("scenarios")) {
            if (!sc->is_array() || sc->empty()) {
                root.fail("scenarios", "expected a non-empty array");
            } else {
                c.scenarios.clear();
                std::set<std::string> names;
                for (std::size_t i = 0; i < sc->size(); ++i) {
                    ScenarioConfig s;
                    Reader r(&(*sc)[i], "scenarios[" + std::to_string(i) + "]", errors);
                    r.string("name", s.name);
                    if (s.name.empty()) r.fail(r.at("name"), "required");
                    if (s.name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") !=
                        std::string::npos)
                        r.fail(r.at("name"), "may only contain letters, digits, '_' and '-'");
                    if (!names.insert(s.name).second) r.fail(r.at("name"), "duplicate scenario name");
                    std::array<double, 2> u{0.0, 0.0};
                    if (!r.find("u0")) r.fail(r.at("u0"), "required");
                    if (r.array("u0", u, 0.0, 10.0, true)) s.u0 = {u[0], u[1]};
                    std::array<double, 2> x{};
                    if (r.find("x0") && r.array("x0", x, 0.0, 1.0)) s.x0 = PlantState{x[0], x[1]};
                    r.integer("steps", s.steps, 2, 10000000);
                    r.integer("warmup", s.warmup, 1, 10000000);
                    c.scenarios.push_back(std::move(s));
                }
            }
        }
        {
            Reader r = root.child("benchmark");
            read_arch_list(r, "architectures", c.benchmark.architectures);
            read_arch_list(r, "study_architectures", c.benchmark.study_architectures);
            if (const json* v = r.find("seeds")) {
                if (!v->is_array()) {
                    r.fail(r.at("seeds"), "expected an array of seeds");
                } else {
                    c.benchmark.seeds.assign(v->size(), 0);
                    for (std::size_t i = 0; i < v->size(); ++i)
                        r.read_seed((*v)[i], r.at("seeds") + "[" + std::to_string(i) + "]",
                                    c.benchmark.seeds[i]);
                }
            }
            r.integer("offset_window", c.benchmark.offset_window, 1, 10000000);
            r.number("offset_threshold", c.benchmark.offset_threshold, 0.0, 1.0, true);
        }
        {
            Reader r = root.child("paths");
            r.string("data", c.paths.data);
            r.string("models", c.paths.models);
            r.string("results", c.paths.results);
        }
    }

    // Cross-field checks, only meaningful once each field parsed on its own.
    if (errors.empty()) {
        const auto& s = c.mpc;
        auto check_box = [&](const StaircaseSpec& st, const std::string& path) {
            for (std::size_t i = 0; i < st.q_levels.size(); ++i)
                if (st.q_levels[i] < s.u_min.q || st.q_levels[i] > s.u_max.q)
                    errors.emplace_back(path + ".q_levels[" + std::to_string(i) + "]",
                                        "value " + fmt(st.q_levels[i]) + " outside mpc.u_bounds.q [" +
                                            fmt(s.u_min.q) + ", " + fmt(s.u_max.q) + "]");
            if (st.t_min < s.u_min.T || st.t_max > s.u_max.T)
                errors.emplace_back(path, "temperature range [" + fmt(st.t_min) + ", " + fmt(st.t_max) +
                                              "] outside mpc.u_bounds.T [" + fmt(s.u_min.T) + ", " +
                                              fmt(s.u_max.T) + "]");
        };
        check_box(c.excitation.train, "excitation.train");
        check_box(c.excitation.test, "excitation.test");
        for (std::size_t i = 0; i < c.scenarios.size(); ++i) {
            const auto& sc = c.scenarios[i];
            const std::string path = "scenarios[" + std::to_string(i) + "]";
            if (sc.u0.q < s.u_min.q || sc.u0.q > s.u_max.q || sc.u0.T < s.u_min.T || sc.u0.T > s.u_max.T)
                errors.emplace_back(path + ".u0", "outside the mpc.u_bounds box");
            if (sc.warmup < s.p || sc.warmup >= sc.steps)
                errors.emplace_back(path + ".warmup", "must lie in [mpc.p, steps - 1] = [" + std::to_string(s.p) +
                                                          ", " + std::to_string(sc.steps - 1) + "]");
            if (sc.x0) {
                const auto d = state_derivative(*sc.x0, sc.u0, c.plant.kinetics);
                if (std::hypot(d.cA, d.cR) >= 1e-6)
                    errors.emplace_back(path + ".x0", "not a steady state of u0 (residual must be < 1e-6)");
            }
        }
    }

    if (!errors.empty()) {
        std::string msg;
        for (std::size_t i = 0; i < errors.size(); ++i)
            msg += (i ? "\n" : "") + errors[i].first + ": " + errors[i].second;
        throw ConfigError(errors.front().first, msg.substr(errors.front().first.size() + 2));
    }
    return c;
}

ExperimentConfig load_config(const std::string& path)
{
    json doc;
    try {
        doc = json::parse(csv::read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("", "config file '" + path + "' is not valid JSON: " + e.what());
    } catch (const DataError& e) {
        throw ConfigError("", e.what());
    }
    return validate_config(doc);
}

json serialize_config(const ExperimentConfig& c)
{
    const auto& k = c.plant.kinetics;
    const auto& s = c.mpc;
    json scenarios = json::array();
    for (const auto& sc : c.scenarios) {
        json j = {{"name", sc.name}, {"u0", {sc.u0.q, sc.u0.T}}, {"steps", sc.steps}, {"warmup", sc.warmup}};
        if (sc.x0) j["x0"] = {sc.x0->cA, sc.x0->cR};
        scenarios.push_back(std::move(j));
    }
    return {
        {"schema_version", c.schema_version},
        {"plant", {{"cA0", k.cA0}, {"k0", k.k0}, {"E", k.e_over_rt0}, {"dt", c.plant.dt}, {"substeps", c.plant.substeps}}},
        {"excitation", {{"train", staircase_to_json(c.excitation.train)}, {"test", staircase_to_json(c.excitation.test)}}},
        {"model",
         {{"layers", c.model.arch.layers},
          {"nodes", c.model.arch.nodes},
          {"epochs", c.model.epochs},
          {"batch_size", c.model.batch_size},
          {"seed", c.model.seed},
          {"lr", c.model.adam.lr},
          {"beta1", c.model.adam.beta1},
          {"beta2", c.model.adam.beta2},
          {"eps", c.model.adam.eps},
          {"chunk", c.model.chunk},
          {"threads", c.model.threads}}},
        {"mpc",
         {{"p", s.p},
          {"m", s.m},
          {"Qy", {s.Qy(0), s.Qy(1)}},
          {"Qu", {s.Qu(0), s.Qu(1)}},
          {"y_star", {s.y_star.cA, s.y_star.cR}},
          {"u_bounds", {{"q", {s.u_min.q, s.u_max.q}}, {"T", {s.u_min.T, s.u_max.T}}}},
          {"du_bounds", {{"q", {s.du_min.q, s.du_max.q}}, {"T", {s.du_min.T, s.du_max.T}}}},
          {"solver",
           {{"max_iter", s.solver.max_iter},
            {"fd_step", s.solver.fd_step},
            {"step_tol", s.solver.step_tol},
            {"decrease_tol", s.solver.decrease_tol},
            {"qp_max_iter", s.solver.qp_max_iter},
            {"qp_tol", s.solver.qp_tol},
            {"max_backtracks", s.solver.max_backtracks}}}}},
        {"scenarios", scenarios},
        {"benchmark",
         {{"architectures", arch_list_to_json(c.benchmark.architectures)},
          {"study_architectures", arch_list_to_json(c.benchmark.study_architectures)},
          {"seeds", c.benchmark.seeds},
          {"offset_window", c.benchmark.offset_window},
          {"offset_threshold", c.benchmark.offset_threshold}}},
        {"paths", {{"data", c.paths.data}, {"models", c.paths.models}, {"results", c.paths.results}}},
    };
}

std::string config_digest(const ExperimentConfig& config)
{
    json j = serialize_config(config);
    j.erase("paths");
    // Which architecture/seed to train is chosen per artifact and recorded in
    // its metadata; thread count does not change results.
    for (const char* k : {"layers", "nodes", "seed", "threads"}) j["model"].erase(k);
    const std::string text = j.dump();
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

Plant ExperimentConfig::make_plant() const
{
    return Plant(plant.kinetics, plant.dt, Integrator{plant.substeps});
}

std::vector<Scenario> ExperimentConfig::make_scenarios() const
{
    std::vector<Scenario> out;
    for (const auto& sc : scenarios) {
        Scenario s = make_scenario(sc.name, sc.u0, plant.kinetics, sc.steps, sc.warmup);
        if (sc.x0) s.x0 = *sc.x0;
        out.push_back(std::move(s));
    }
    return out;
}

NetworkShape ExperimentConfig::shape(const ArchitectureSpec& a) const
{
    NetworkShape s;
    s.horizon = mpc.p;
    s.hidden.assign(static_cast<std::size_t>(a.layers), a.nodes);
    return s;
}

KernelOptions ExperimentConfig::kernel() const
{
    return {model.chunk, model.threads};
}

TrainOptions ExperimentConfig::train_options(std::uint64_t seed) const
{
    TrainOptions o;
    o.epochs = model.epochs;
    o.batch_size = model.batch_size;
    o.seed = seed;
    o.adam = model.adam;
    o.kernel = kernel();
    return o;
}

} // namespace rnnmpc
