#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;  // stdout and stderr
};

Result run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + std::string(NASTL_CLI_PATH) + " " + args + " 2>&1";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) {
        r.out.append(buf.data(), n);
    }
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

struct Scratch {
    fs::path path;
    Scratch() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("nastl_cli_" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string operator/(const std::string& n) const { return (path / n).string(); }
};

const char* kTinyConfig = R"({"workers": 1, "vector_width": 4, "batch_size": 32, "steps_per_update": 8,
    "target_sync_interval": 100, "publish_interval": 5, "eval_interval": 100, "eval_episodes": 4,
    "replay_capacity": 1000, "net": {"d_model": 16, "n_heads": 2, "ffn_hidden": 32, "head_hidden": 16}})";

}  // namespace

TEST_CASE("bench gen is deterministic") {
    Scratch d;
    REQUIRE(run("bench gen --seed 3 --out " + d / "a.json").code == 0);
    REQUIRE(run("bench gen --seed 3 --out " + d / "b.json").code == 0);
    REQUIRE(run("bench gen --seed 4 --out " + d / "c.json").code == 0);
    CHECK(slurp(d / "a.json") == slurp(d / "b.json"));
    CHECK(slurp(d / "a.json") != slurp(d / "c.json"));
    const auto v = run("bench validate " + d / "a.json");
    CHECK(v.code == 0);
    CHECK(v.out.find("4096 records") != std::string::npos);
    CHECK(v.out.find("segmentsemantic") != std::string::npos);
    const auto c = run("bench correlate " + d / "a.json" + " --tasks class_object,room_layout");
    CHECK(c.code == 0);
    CHECK(c.out.find("task,class_object,room_layout") == 0);
    const auto s = run("sweep-gamma --bench " + d / "a.json" + " --task segmentsemantic --out " + d.path.string());
    CHECK(s.code == 0);
    CHECK(s.out.find("best exponent") != std::string::npos);
    CHECK(fs::exists(d.path / "sweep.csv"));
}

TEST_CASE("exit codes") {
    Scratch d;
    CHECK(run("--help").code == 0);
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("bench gen").code == 2);
    CHECK(run("train --bench x.json --task a --out o --set nope=1").code == 2);
    const auto bad = run("bench validate " + d / "none.json");
    CHECK(bad.code == 1);
    CHECK(bad.out.find("none.json") != std::string::npos);
    REQUIRE(run("bench gen --seed 1 --out " + d / "b.json").code == 0);
    const auto missing = run("train --bench " + d / "b.json" + " --task not_a_task --out " + d / "o");
    CHECK(missing.code == 1);
    CHECK(missing.out.find("not_a_task") != std::string::npos);
    CHECK(missing.out.find("class_object") != std::string::npos);
}

TEST_CASE("print-config reports each value's source") {
    Scratch d;
    std::ofstream(d / "cfg.json") << R"({"batch_size": 64})";
    const auto r = run("train --print-config --config " + d / "cfg.json" + " --seed 12 --task segmentsemantic",
                       "NASTL_DISCOUNT=0.95");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("batch_size = 64  [file:" + d / "cfg.json" + "]") != std::string::npos);
    CHECK(r.out.find("seed = 12  [flag:--seed]") != std::string::npos);
    CHECK(r.out.find("discount = 0.95  [env:NASTL_DISCOUNT]") != std::string::npos);
    CHECK(r.out.find("shaping_exponent = 0.478  [default:task-rule]") != std::string::npos);
    CHECK(r.out.find("n_step = 3  [default]") != std::string::npos);
    const auto flat = run("train --print-config --task class_object");
    CHECK(flat.out.find("shaping_exponent = null") != std::string::npos);
    const auto forced = run("train --print-config --task segmentsemantic --shaping none");
    CHECK(forced.out.find("shaping_exponent = null  [flag:--shaping]") != std::string::npos);
}

TEST_CASE("train, eval and analyze end to end") {
    Scratch d;
    std::ofstream(d / "cfg.json") << kTinyConfig;
    REQUIRE(run("bench gen --seed 2 --out " + d / "b.json").code == 0);
    const auto t = run("train --bench " + d / "b.json" + " --task class_object --steps 200 --seed 1 --config " +
                       d / "cfg.json" + " --out " + d / "run");
    REQUIRE(t.code == 0);
    CHECK(t.out.find("trained 200 steps") != std::string::npos);
    CHECK(fs::exists(d.path / "run" / "final.ckpt"));
    CHECK(fs::exists(d.path / "run" / "runlog.jsonl"));
    const json eff = json::parse(slurp(d.path / "run" / "effective_config.json"));
    CHECK(eff.at("values").at("total_steps") == 200);
    CHECK(eff.at("sources").at("total_steps") == "flag:--steps");

    const auto e = run("eval --bench " + d / "b.json" + " --task room_layout --checkpoint " + d / "run/final.ckpt" +
                       " --episodes 3 --out " + d / "ev");
    CHECK(e.code == 0);
    CHECK(e.out.find("over 3 episodes") != std::string::npos);
    CHECK(json::parse(slurp(d.path / "ev" / "eval.json")).at("values").size() == 3);
    const auto rw = run("eval --bench " + d / "b.json" + " --task room_layout --policy random_walk --episodes 2");
    CHECK(rw.code == 0);

    const auto m = run("transfer matrix --bench " + d / "b.json" +
                       " --tasks class_object,room_layout --seeds 1 --pretrain-steps 200 --config " + d / "cfg.json" +
                       " --out " + d / "exp");
    REQUIRE(m.code == 0);
    CHECK(m.out.find("4 training runs") != std::string::npos);
    CHECK(fs::exists(d.path / "exp" / "effective_config.json"));
    const auto again = run("transfer matrix --bench " + d / "b.json" +
                           " --tasks class_object,room_layout --seeds 1 --pretrain-steps 200 --config " +
                           d / "cfg.json" + " --out " + d / "exp");
    CHECK(again.code == 0);
    CHECK(again.out.find("0 training runs") != std::string::npos);

    const auto cr = run("analyze crossover --dir " + d / "exp" + " --regime retrain --kernel 1");
    CHECK(cr.code == 0);
    CHECK(cr.out.find("source,target,pair_count,crossed_count,mean_steps,ci_low,ci_high,mean_walltime_s,"
                      "walltime_ci_low,walltime_ci_high,note") == 0);
    const auto mat = run("analyze matrix --dir " + d / "exp" + " --regime zero_shot --svg --out " + d / "an");
    CHECK(mat.code == 0);
    CHECK(fs::exists(d.path / "an" / "matrix_zero_shot.csv"));
    CHECK(fs::exists(d.path / "an" / "matrix_zero_shot.svg"));
    CHECK(run("analyze matrix --dir " + d / "exp" + " --regime sideways").code == 1);
}
