#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

class Sandbox {
public:
    Sandbox()
    {
        dir_ = fs::temp_directory_path() / ("rnnmpc_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    ~Sandbox() { fs::remove_all(dir_); }

    const fs::path& dir() const { return dir_; }

    fs::path write_config(const std::string& name, const json& j) const
    {
        const auto p = dir_ / name;
        std::ofstream(p) << j.dump(1);
        return p;
    }

    Result run(const std::string& args, const std::string& env = {}) const
    {
        const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd = env + " " + RNNMPC_CLI_PATH + " " + args + " >" + out.string() + " 2>" + err.string();
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    }

private:
    fs::path dir_;
};

// Small enough to train in seconds.
json tiny_config()
{
    return {{"excitation", {{"train", {{"q_levels", {0.8}}}}, {"test", {{"q_levels", {0.8}}}}}},
            {"model", {{"layers", 1}, {"nodes", 4}, {"epochs", 2}, {"batch_size", 128}}},
            {"scenarios", {{{"name", "startup"}, {"u0", {0.8, 0.8}}, {"steps", 30}}}},
            {"benchmark", {{"architectures", {{{"layers", 1}, {"nodes", 4}}}}, {"seeds", {0}}}}};
}

} // namespace

TEST_CASE("command line")
{
    const Sandbox box;
    const auto cfg = box.write_config("tiny.json", tiny_config());
    const std::string base = "-q -c " + cfg.string() + " --root " + box.dir().string();

    SUBCASE("show-config prints the digest")
    {
        const auto r = box.run(base + " show-config");
        REQUIRE(r.code == 0);
        const auto j = json::parse(r.out);
        CHECK(j["config_digest"].get<std::string>().size() == 64);
        CHECK(j["model"]["nodes"] == 4);
    }
    SUBCASE("configuration errors exit with 2 and name the field")
    {
        auto bad = tiny_config();
        bad["mpc"] = {{"u_bounds", {{"q", {0.75, 0.7}}}}};
        const auto r = box.run("-c " + box.write_config("bad.json", bad).string() + " show-config");
        CHECK(r.code == 2);
        const auto e = json::parse(r.err)["error"];
        CHECK(e["type"] == "config");
        CHECK(e["path"] == "mpc.u_bounds.q");
        CHECK(box.run("no-such-command").code == 2);
        CHECK(box.run(base + " train --nodes 0").code == 2);
    }
    SUBCASE("training before gen-data names the missing file")
    {
        const auto r = box.run(base + " train");
        CHECK(r.code == 3);
        const auto msg = json::parse(r.err)["error"]["message"].get<std::string>();
        CHECK(msg.find((box.dir() / "data" / "train.csv").string()) != std::string::npos);
        CHECK(msg.find("gen-data") != std::string::npos);
    }
    SUBCASE("gen-data, train, evaluate, closed loop, benchmark")
    {
        REQUIRE(box.run(base + " gen-data").code == 0);
        CHECK(fs::exists(box.dir() / "data" / "train.csv.meta.json"));
        const auto tr = box.run(base + " train");
        REQUIRE(tr.code == 0);
        const auto t = json::parse(tr.out);
        const fs::path model = t["model"].get<std::string>();
        CHECK(model == box.dir() / "models" / "lstm_1x4_seed0.json");
        CHECK(fs::exists(box.dir() / "results" / "loss_1x4_seed0.csv"));

        const auto ev = box.run(base + " evaluate --model " + model.string());
        REQUIRE(ev.code == 0);
        const auto e = json::parse(ev.out);
        CHECK(e["test_rmse"].get<double>() == doctest::Approx(t["test_rmse"].get<double>()).epsilon(1e-12));
        CHECK(e["digest_match"] == true);

        const auto cl = box.run(base + " run-closed-loop");
        REQUIRE(cl.code == 0);
        const auto reference = json::parse(cl.out)[0];
        CHECK(reference["I"].get<double>() == 100.0);
        CHECK(fs::exists(box.dir() / "results" / "closed_loop" / "nmpc_startup.csv"));
        CHECK(box.run(base + " run-closed-loop --scenario nope").code == 3);

        const auto bench = box.run(base + " benchmark");
        REQUIRE(bench.code == 0);
        CHECK(bench.out.rfind("layers,nodes,seed,I_startup,I_avg,offset\n1,4,0,", 0) == 0);

        // Same models, different controller weights: refused.
        auto other = tiny_config();
        other["mpc"] = {{"Qu", {20.0, 20.0}}};
        const auto r = box.run("-q -c " + box.write_config("other.json", other).string() + " --root " +
                               box.dir().string() + " benchmark");
        CHECK(r.code == 3);
        CHECK(json::parse(r.err)["error"]["message"].get<std::string>().find("config digest") != std::string::npos);
    }
    SUBCASE("the environment overrides the workspace root")
    {
        const auto alt = box.dir() / "alt";
        const auto r = box.run(base + " sweep --n 5", "RNNMPC_RESULTS_ROOT=" + alt.string());
        REQUIRE(r.code == 0);
        CHECK(fs::exists(alt / "results" / "sweep.csv"));
        CHECK_FALSE(fs::exists(box.dir() / "results" / "sweep.csv"));
    }
}
