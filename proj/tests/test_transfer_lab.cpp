#include <doctest.h>

#include <fstream>
#include <set>

#include "errors.hpp"
#include "helpers.hpp"
#include "transfer_lab.hpp"

using namespace nastl;
namespace fs = std::filesystem;

namespace {

constexpr int64_t kPretrain = 800;

TrainConfig tiny_train() {
    TrainConfig c = TrainConfig::desk();
    c.workers = 1;
    c.vector_width = 4;
    c.batch_size = 32;
    c.steps_per_update = 8;
    c.target_sync_interval = 200;
    c.publish_interval = 5;
    c.eval_interval = 40;
    c.eval_episodes = 4;
    c.replay.capacity = 2000;
    c.net.d_model = 16;
    c.net.n_heads = 2;
    c.net.ffn_hidden = 32;
    c.net.head_hidden = 16;
    return c;
}

ExperimentPlan plan_in(const fs::path& root) {
    ExperimentPlan p;
    p.tasks = {"class_object", "room_layout"};
    p.seeds = {1, 2};
    p.pretrain_steps = kPretrain;
    p.benchmark_path = root / "bench.json";
    p.output_root = root / "exp";
    p.train = tiny_train();
    if (!fs::exists(p.benchmark_path)) {
        save_benchmark(*testing::default_bench(3), p.benchmark_path);
    }
    return p;
}

// One experiment shared by the cases that only read it.
struct Shared {
    testing::TempDir dir{"lab"};
    ExperimentPlan plan = plan_in(dir.path());
    MatrixRunSummary first = run_matrix(plan);
};

Shared& shared() {
    static Shared s;
    return s;
}

size_t count_events(const RunLog& log, const std::string& type) {
    size_t n = 0;
    for (const auto& e : log.events()) {
        n += e.type == type;
    }
    return n;
}

}  // namespace

TEST_CASE("standard regimes") {
    CHECK(TransferRegime::standard(RegimeKind::zero_shot, 1000).target_steps == 0);
    CHECK(TransferRegime::standard(RegimeKind::fine_tune, 1000).target_steps == 100);
    CHECK(TransferRegime::standard(RegimeKind::retrain, 1000).target_steps == 1000);
    CHECK(parse_regime("fine_tune") == RegimeKind::fine_tune);
    CHECK_THROWS_AS(parse_regime("finetune"), Error);
    CHECK_THROWS_AS((TransferRegime{RegimeKind::zero_shot, 5}.validate()), Error);
    CHECK_THROWS_AS((TransferRegime{RegimeKind::retrain, 0}.validate()), Error);
}

TEST_CASE("eval cadence follows the pretrain budget") {
    TrainConfig c = tiny_train();
    c.eval_interval = 0;
    c.log_interval = 0;
    const auto t = target_config(c, 100, 10000);
    CHECK(t.total_steps == 100);
    CHECK(t.eval_interval == 100);
    CHECK(t.log_interval == 100);
}

TEST_CASE("plan JSON and fingerprint") {
    testing::TempDir d("plan");
    auto p = plan_in(d.path());
    const auto back = ExperimentPlan::from_json(p.to_json());
    CHECK(back.to_json() == p.to_json());
    auto q = p;
    q.output_root = d.path() / "elsewhere";
    q.jobs = 4;
    CHECK(q.fingerprint() == p.fingerprint());
    q.pretrain_steps = 900;
    CHECK(q.fingerprint() != p.fingerprint());
    p.tasks = {"class_object", "class_object"};
    CHECK_THROWS_AS(p.validate(), Error);
    CHECK(default_shaping("segmentsemantic").has_value());
    CHECK_FALSE(default_shaping("class_object").has_value());
}

TEST_CASE("run_regime: zero shot and same task") {
    auto bench = testing::default_bench(3);
    testing::TempDir d("regime");
    TrainConfig c = tiny_train();
    c.total_steps = 400;
    c.eval_interval = 200;
    const auto src = train(c, bench, "class_object", nullptr, d / "src");
    REQUIRE(src.checkpoint.lineage.size() == 1);

    const auto z = run_regime(&src.checkpoint, "room_layout", {RegimeKind::zero_shot, 0}, c, bench, d / "z");
    CHECK_FALSE(z.trained);
    CHECK(z.target_steps == 0);
    CHECK(count_events(z.log, "train") == 0);
    CHECK(count_events(z.log, "eval") == 1);
    CHECK(fs::exists(d / "z" / "eval.json"));
    REQUIRE(z.checkpoint.has_value());
    CHECK(z.checkpoint->params.data == src.checkpoint.params.data);

    const auto same = run_regime(&src.checkpoint, "class_object", {RegimeKind::fine_tune, 40}, c, bench, d / "s");
    CHECK_FALSE(same.trained);
    CHECK(same.checkpoint->lineage.size() == 1);

    const auto same_rt = run_regime(&src.checkpoint, "class_object", {RegimeKind::retrain, 400}, c, bench, d / "r");
    CHECK_FALSE(same_rt.trained);
    CHECK(same_rt.checkpoint->lineage.size() == 1);

    const auto ft = run_regime(&src.checkpoint, "room_layout", {RegimeKind::fine_tune, 40}, c, bench, d / "f");
    CHECK(ft.trained);
    CHECK(ft.target_steps == 40);
    REQUIRE(ft.checkpoint->lineage.size() == 2);
    CHECK(ft.checkpoint->lineage[1] == LineageEntry{"room_layout", 40});

    CHECK_THROWS_AS(run_regime(nullptr, "room_layout", {RegimeKind::zero_shot, 0}, c, bench, d / "e"), Error);
}

TEST_CASE("matrix: cells and training runs") {
    auto& s = shared();
    // 2 seeds x 2 tasks pretrain, plus 2 seeds x 2 ordered pairs x 3 regimes
    CHECK(s.first.manifest.cells.size() == 16);
    // pretrain and retrain train; zero-shot and cut fine-tune cells do not
    CHECK(s.first.training_runs == 8);
    CHECK(s.first.skipped_cells == 0);
    for (const auto& c : s.first.manifest.cells) {
        CHECK(c.status == "complete");
        CHECK(fs::exists(s.plan.output_root / c.checkpoint));
        CHECK(fs::exists(s.plan.output_root / c.eval));
    }
    const auto m = Manifest::read(s.plan.output_root);
    CHECK(m.cells.size() == 16);
    CHECK(m.plan_fingerprint == s.plan.fingerprint());
}

TEST_CASE("matrix: zero-shot cell uses the pretrained agent") {
    auto& s = shared();
    const auto* z = s.first.manifest.find(1, "class_object", "room_layout", "zero_shot");
    const auto* pre = s.first.manifest.find(1, "class_object", "class_object", "pretrain");
    REQUIRE(z != nullptr);
    REQUIRE(pre != nullptr);
    CHECK(z->checkpoint == pre->checkpoint);
    const auto log = RunLog::read(s.plan.output_root / z->runlog);
    CHECK(count_events(log, "train") == 0);
}

TEST_CASE("matrix: fine-tune cell is a prefix of the retrain run") {
    auto& s = shared();
    for (uint64_t seed : s.plan.seeds) {
        const auto* ft = s.first.manifest.find(seed, "room_layout", "class_object", "fine_tune");
        const auto* rt = s.first.manifest.find(seed, "room_layout", "class_object", "retrain");
        REQUIRE(ft != nullptr);
        REQUIRE(rt != nullptr);
        const auto fl = RunLog::read(s.plan.output_root / ft->runlog);
        const auto rl = RunLog::read(s.plan.output_root / rt->runlog);
        const int64_t mark = kPretrain / 10;
        CHECK(same_events(events_up_to(fl.events(), mark), events_up_to(rl.events(), mark)));
        CHECK(fl.events().back().step == mark);

        const auto ck = load_checkpoint(s.plan.output_root / ft->checkpoint);
        REQUIRE(ck.lineage.size() == 2);
        CHECK(ck.lineage[0] == LineageEntry{"room_layout", kPretrain});
        CHECK(ck.lineage[1] == LineageEntry{"class_object", mark});
    }
}

TEST_CASE("matrix: resume skips verified cells and reruns missing ones") {
    auto& s = shared();
    const auto again = run_matrix(s.plan);
    CHECK(again.training_runs == 0);
    CHECK(again.skipped_cells == 16);

    const auto* rt = again.manifest.find(2, "class_object", "room_layout", "retrain");
    REQUIRE(rt != nullptr);
    const auto before = load_checkpoint(s.plan.output_root / rt->checkpoint);
    fs::remove_all(s.plan.output_root / rt->dir);

    const auto third = run_matrix(s.plan);
    // the retrain cell trains again; its cut fine-tune cell is redone without training
    CHECK(third.training_runs == 1);
    CHECK(third.skipped_cells == 15);
    const auto after = load_checkpoint(s.plan.output_root / rt->checkpoint);
    CHECK(after.params.data == before.params.data);
    const auto* ft = third.manifest.find(2, "class_object", "room_layout", "fine_tune");
    CHECK(fs::exists(s.plan.output_root / ft->checkpoint));
}

TEST_CASE("matrix: refuses to resume under a different plan") {
    auto& s = shared();
    auto p = s.plan;
    p.pretrain_steps = kPretrain * 2;
    try {
        run_matrix(p);
        FAIL("expected a config mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config_mismatch);
        CHECK(std::string(e.what()).find("refusing to resume") != std::string::npos);
    }
}

TEST_CASE("matrix: four tasks, one seed, retrain only trains 16 agents") {
    testing::TempDir d("sixteen");
    auto p = plan_in(d.path());
    p.tasks = {"class_object", "room_layout", "autoencoder", "segmentsemantic"};
    p.seeds = {3};
    p.pretrain_steps = 40;
    p.regimes = {RegimeKind::retrain};
    p.train.eval_interval = 20;
    const auto r = run_matrix(p);
    CHECK(r.training_runs == 16);
    CHECK(r.manifest.cells.size() == 16);
    std::set<std::string> dirs;
    for (const auto& c : r.manifest.cells) {
        dirs.insert(c.dir);
        CHECK(fs::exists(p.output_root / c.checkpoint));
    }
    CHECK(dirs.size() == 16);
    CHECK(dirs.count("3/autoencoder/segmentsemantic/retrain") == 1);
}

TEST_CASE("matrix: tampered cell fingerprint is refused") {
    testing::TempDir d("tamper");
    auto p = plan_in(d.path());
    p.tasks = {"class_object"};
    p.seeds = {7};
    p.pretrain_steps = 80;
    run_matrix(p);
    const fs::path mpath = p.output_root / "manifest.json";
    nlohmann::json j;
    {
        std::ifstream f(mpath);
        j = nlohmann::json::parse(f);
    }
    j["cells"][0]["config_fingerprint"] = "0000000000000000";
    {
        std::ofstream f(mpath, std::ios::trunc);
        f << j.dump();
    }
    CHECK_THROWS_AS(run_matrix(p), Error);
}
