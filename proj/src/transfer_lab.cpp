#include "transfer_lab.hpp"

#include <atomic>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "errors.hpp"

namespace nastl {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(RegimeKind k) {
    switch (k) {
        case RegimeKind::zero_shot: return "zero_shot";
        case RegimeKind::fine_tune: return "fine_tune";
        case RegimeKind::retrain: return "retrain";
    }
    return "?";
}

RegimeKind parse_regime(const std::string& s) {
    if (s == "zero_shot") return RegimeKind::zero_shot;
    if (s == "fine_tune") return RegimeKind::fine_tune;
    if (s == "retrain") return RegimeKind::retrain;
    fail(ErrorKind::invalid_argument, "unknown regime '" + s + "' (expected zero_shot, fine_tune or retrain)");
}

TransferRegime TransferRegime::standard(RegimeKind kind, int64_t pretrain_steps) {
    switch (kind) {
        case RegimeKind::zero_shot: return {kind, 0};
        case RegimeKind::fine_tune: return {kind, pretrain_steps / 10};
        case RegimeKind::retrain: return {kind, pretrain_steps};
    }
    return {kind, 0};
}

void TransferRegime::validate() const {
    if (kind == RegimeKind::zero_shot) {
        require(target_steps == 0, ErrorKind::invalid_argument, "zero_shot regime must have target_steps 0");
    } else {
        require(target_steps > 0, ErrorKind::invalid_argument, to_string(kind) + " regime needs target_steps > 0");
    }
}

TrainConfig target_config(TrainConfig base, int64_t steps, int64_t pretrain_steps) {
    if (base.eval_interval == 0) {
        base.eval_interval = std::max<int64_t>(1, pretrain_steps / 100);
    }
    if (base.log_interval == 0) {
        base.log_interval = static_cast<int>(base.eval_interval);
    }
    base.total_steps = steps;
    return base;
}

namespace {

void write_json(const fs::path& p, const json& j) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        require(f.good(), ErrorKind::io, "cannot write " + tmp.string());
        f << j.dump(2) << "\n";
        require(f.good(), ErrorKind::io, "write failed for " + tmp.string());
    }
    fs::rename(tmp, p);
}

json read_json(const fs::path& p) {
    std::ifstream f(p);
    require(f.good(), ErrorKind::io, "cannot read " + p.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, p.string() + ": " + e.what());
    }
}

RegimeResult evaluate_only(const Checkpoint& ckpt, const std::string& target, const TrainConfig& cfg,
                           std::shared_ptr<const Benchmark> bench, const fs::path& out_dir, const char* why) {
    RegimeResult r;
    r.report = evaluate(std::make_shared<const Params>(ckpt.params), bench, target, eval_protocol(cfg));
    r.log = RunLog(out_dir / "runlog.jsonl");
    json c = cfg.to_json();
    c["task"] = target;
    c["mode"] = why;
    r.log.append({"config", 0, 0.0, c});
    r.log.append({"eval", 0, 0.0,
                  {{"mean", r.report.mean},
                   {"std", r.report.std},
                   {"ci_low", r.report.ci_low},
                   {"ci_high", r.report.ci_high},
                   {"values", r.report.values}}});
    write_json(out_dir / "eval.json", r.report.to_json());
    r.checkpoint = ckpt;
    r.target_steps = 0;
    r.trained = false;
    return r;
}

}  // namespace

RegimeResult run_regime(const Checkpoint* source, const std::string& target, const TransferRegime& regime,
                        const TrainConfig& cfg, std::shared_ptr<const Benchmark> bench, const fs::path& out_dir) {
    regime.validate();
    require(bench != nullptr, ErrorKind::invalid_argument, "run_regime: benchmark is null");
    bench->task_index(target);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    require(!ec, ErrorKind::io, "cannot create " + out_dir.string());

    if (regime.kind == RegimeKind::zero_shot) {
        require(source != nullptr, ErrorKind::invalid_argument, "zero_shot regime requires a source checkpoint");
        return evaluate_only(*source, target, cfg, bench, out_dir, "zero_shot");
    }
    if (source && !source->lineage.empty() && source->lineage.back().task == target) {
        // Same task: the source run already is this agent.
        return evaluate_only(*source, target, cfg, bench, out_dir, "same_task");
    }
    const TrainConfig c = target_config(cfg, regime.target_steps, cfg.total_steps);
    TrainResult t = train(c, bench, target, source, out_dir);
    RegimeResult r;
    r.report = t.final_eval;
    r.log = std::move(t.log);
    r.checkpoint = std::move(t.checkpoint);
    r.checkpoint_path = t.checkpoint_path;
    r.target_steps = t.env_steps;
    r.trained = true;
    return r;
}

void ExperimentPlan::validate() const {
    require(!tasks.empty(), ErrorKind::invalid_argument, "plan needs at least one task");
    require(!seeds.empty(), ErrorKind::invalid_argument, "plan needs at least one seed");
    require(pretrain_steps >= 10, ErrorKind::invalid_argument, "pretrain_steps must be >= 10");
    require(!output_root.empty(), ErrorKind::invalid_argument, "plan needs an output root");
    require(jobs >= 1, ErrorKind::invalid_argument, "jobs must be >= 1");
    for (size_t i = 0; i < tasks.size(); ++i) {
        for (size_t j = i + 1; j < tasks.size(); ++j) {
            require(tasks[i] != tasks[j], ErrorKind::invalid_argument, "duplicate task '" + tasks[i] + "'");
        }
    }
    train.validate();
}

json ExperimentPlan::to_json() const {
    json r = json::array();
    for (auto k : regimes) {
        r.push_back(to_string(k));
    }
    return {{"tasks", tasks},
            {"seeds", seeds},
            {"pretrain_steps", pretrain_steps},
            {"regimes", r},
            {"benchmark", benchmark_path.string()},
            {"output_root", output_root.string()},
            {"train", train.to_json()},
            {"derive_fine_tune", derive_fine_tune},
            {"task_shaping_rule", task_shaping_rule},
            {"jobs", jobs}};
}

ExperimentPlan ExperimentPlan::from_json(const json& j) {
    ExperimentPlan p;
    try {
        p.tasks = j.at("tasks").get<std::vector<std::string>>();
        p.seeds = j.at("seeds").get<std::vector<uint64_t>>();
        p.pretrain_steps = j.value("pretrain_steps", p.pretrain_steps);
        if (j.contains("regimes")) {
            p.regimes.clear();
            for (const auto& r : j.at("regimes")) {
                p.regimes.push_back(parse_regime(r.get<std::string>()));
            }
        }
        p.benchmark_path = j.value("benchmark", std::string{});
        p.output_root = j.value("output_root", std::string{});
        if (j.contains("train")) {
            p.train = TrainConfig::from_json(j.at("train"));
        }
        p.derive_fine_tune = j.value("derive_fine_tune", true);
        p.task_shaping_rule = j.value("task_shaping_rule", true);
        p.jobs = j.value("jobs", 1);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("experiment plan: ") + e.what());
    }
    return p;
}

std::string ExperimentPlan::fingerprint() const {
    json j = to_json();
    j.erase("output_root");
    j.erase("jobs");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

json ManifestCell::to_json() const {
    return {{"seed", seed},
            {"source", source},
            {"target", target},
            {"regime", regime},
            {"status", status},
            {"config_fingerprint", config_fingerprint},
            {"derived_from", derived_from},
            {"paths", {{"dir", dir}, {"checkpoint", checkpoint}, {"runlog", runlog}, {"eval", eval}}}};
}

ManifestCell ManifestCell::from_json(const json& j) {
    ManifestCell c;
    try {
        c.seed = j.at("seed").get<uint64_t>();
        c.source = j.at("source").get<std::string>();
        c.target = j.at("target").get<std::string>();
        c.regime = j.at("regime").get<std::string>();
        c.status = j.at("status").get<std::string>();
        c.config_fingerprint = j.value("config_fingerprint", std::string{});
        c.derived_from = j.value("derived_from", std::string{});
        const auto& p = j.at("paths");
        c.dir = p.value("dir", std::string{});
        c.checkpoint = p.value("checkpoint", std::string{});
        c.runlog = p.value("runlog", std::string{});
        c.eval = p.value("eval", std::string{});
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("manifest cell: ") + e.what());
    }
    return c;
}

json Manifest::to_json() const {
    json cs = json::array();
    for (const auto& c : cells) {
        cs.push_back(c.to_json());
    }
    return {{"plan_fingerprint", plan_fingerprint}, {"plan", plan}, {"cells", cs}};
}

Manifest Manifest::from_json(const json& j) {
    Manifest m;
    try {
        m.plan_fingerprint = j.at("plan_fingerprint").get<std::string>();
        m.plan = j.value("plan", json::object());
        for (const auto& c : j.at("cells")) {
            m.cells.push_back(ManifestCell::from_json(c));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("manifest: ") + e.what());
    }
    return m;
}

Manifest Manifest::read(const fs::path& root) {
    const fs::path p = root / "manifest.json";
    require(fs::exists(p), ErrorKind::not_found, "no manifest.json in " + root.string());
    return from_json(read_json(p));
}

const ManifestCell* Manifest::find(uint64_t seed, const std::string& source, const std::string& target,
                                   const std::string& regime) const {
    for (const auto& c : cells) {
        if (c.seed == seed && c.source == source && c.target == target && c.regime == regime) {
            return &c;
        }
    }
    return nullptr;
}

std::optional<ShapingConfig> default_shaping(const std::string& task) {
    if (task == "segmentsemantic") {
        return ShapingConfig{kSegmentationShapingExponent};
    }
    return std::nullopt;
}

fs::path cell_dir(uint64_t seed, const std::string& source, const std::string& target, const std::string& regime) {
    return fs::path(std::to_string(seed)) / source / target / regime;
}

namespace {

void run_pool(int jobs, std::vector<std::function<void()>>& tasks) {
    if (jobs <= 1 || tasks.size() <= 1) {
        for (auto& t : tasks) {
            t();
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> threads;
    const size_t n = std::min(tasks.size(), static_cast<size_t>(jobs));
    for (size_t k = 0; k < n; ++k) {
        threads.emplace_back([&] {
            for (size_t i = next++; i < tasks.size(); i = next++) {
                {
                    std::lock_guard lk(err_mu);
                    if (err) {
                        return;
                    }
                }
                try {
                    tasks[i]();
                } catch (...) {
                    std::lock_guard lk(err_mu);
                    if (!err) {
                        err = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    if (err) {
        std::rethrow_exception(err);
    }
}

class MatrixRunner {
public:
    explicit MatrixRunner(const ExperimentPlan& plan) : plan_(plan), root_(plan.output_root) {
        plan_.validate();
        bench_ = std::make_shared<const Benchmark>(load_benchmark(plan_.benchmark_path));
        for (const auto& t : plan_.tasks) {
            bench_->task_index(t);
        }
        std::error_code ec;
        fs::create_directories(root_, ec);
        require(!ec, ErrorKind::io, "cannot create " + root_.string());
        has_retrain_ = has(RegimeKind::retrain);
        derive_ = plan_.derive_fine_tune && has_retrain_ && has(RegimeKind::fine_tune);
    }

    MatrixRunSummary run() {
        const fs::path mpath = root_ / "manifest.json";
        Manifest previous;
        bool resume = false;
        if (fs::exists(mpath)) {
            previous = Manifest::from_json(read_json(mpath));
            require(previous.plan_fingerprint == plan_.fingerprint(), ErrorKind::config_mismatch,
                    "refusing to resume: manifest plan fingerprint " + previous.plan_fingerprint +
                        " does not match this plan (" + plan_.fingerprint() + ")");
            resume = true;
        }

        manifest_.plan_fingerprint = plan_.fingerprint();
        manifest_.plan = plan_.to_json();
        std::vector<size_t> pretrain, target, derived;
        for (uint64_t seed : plan_.seeds) {
            for (const auto& t : plan_.tasks) {
                pretrain.push_back(add(seed, t, t, "pretrain"));
            }
        }
        for (uint64_t seed : plan_.seeds) {
            for (const auto& s : plan_.tasks) {
                for (const auto& t : plan_.tasks) {
                    if (s == t) {
                        continue;
                    }
                    for (auto k : plan_.regimes) {
                        const size_t i = add(seed, s, t, to_string(k));
                        (k == RegimeKind::fine_tune && derive_ ? derived : target).push_back(i);
                    }
                }
            }
        }

        // Carry over verified cells; anything else is recomputed.
        std::vector<bool> done(manifest_.cells.size(), false);
        for (size_t i = 0; i < manifest_.cells.size(); ++i) {
            auto& c = manifest_.cells[i];
            const ManifestCell* old = resume ? previous.find(c.seed, c.source, c.target, c.regime) : nullptr;
            if (old && old->status == "complete" && verify(*old, c.config_fingerprint)) {
                c = *old;
                done[i] = true;
                ++summary_.skipped_cells;
            }
        }
        // A derived fine-tune cell is only as good as its retrain cell.
        for (size_t i : derived) {
            const auto& c = manifest_.cells[i];
            if (!done[retrain_index(c)]) {
                done[i] = false;
                manifest_.cells[i].status = "pending";
            }
        }
        flush();

        auto phase = [&](const std::vector<size_t>& idx) {
            std::vector<std::function<void()>> jobs;
            for (size_t i : idx) {
                if (!done[i]) {
                    jobs.push_back([this, i] { run_cell(i); });
                }
            }
            run_pool(plan_.jobs, jobs);
        };
        phase(pretrain);
        phase(target);
        phase(derived);

        summary_.manifest = manifest_;
        return summary_;
    }

private:
    bool has(RegimeKind k) const {
        return std::find(plan_.regimes.begin(), plan_.regimes.end(), k) != plan_.regimes.end();
    }

    TrainConfig seeded(uint64_t seed, const std::string& task) const {
        TrainConfig c = plan_.train;
        c.seed = seed;
        if (plan_.task_shaping_rule) {
            c.shaping = default_shaping(task);
        }
        c.total_steps = plan_.pretrain_steps;
        return c;
    }

    TrainConfig pretrain_config(uint64_t seed, const std::string& task) const {
        return target_config(seeded(seed, task), plan_.pretrain_steps, plan_.pretrain_steps);
    }

    TrainConfig retrain_config(uint64_t seed, const std::string& task) const {
        TrainConfig c = target_config(seeded(seed, task), plan_.pretrain_steps, plan_.pretrain_steps);
        if (derive_) {
            c.checkpoint_at = {plan_.pretrain_steps / 10};
        }
        return c;
    }

    TrainConfig fine_tune_config(uint64_t seed, const std::string& task) const {
        return target_config(seeded(seed, task), plan_.pretrain_steps / 10, plan_.pretrain_steps);
    }

    size_t add(uint64_t seed, const std::string& s, const std::string& t, const std::string& regime) {
        ManifestCell c;
        c.seed = seed;
        c.source = s;
        c.target = t;
        c.regime = regime;
        c.status = "pending";
        c.dir = cell_dir(seed, s, t, regime).generic_string();
        c.runlog = c.dir + "/runlog.jsonl";
        c.eval = c.dir + "/eval.json";
        const std::string pre = cell_dir(seed, s, s, "pretrain").generic_string() + "/final.ckpt";
        if (regime == "pretrain") {
            c.config_fingerprint = pretrain_config(seed, t).fingerprint();
            c.checkpoint = c.dir + "/final.ckpt";
        } else if (regime == "zero_shot") {
            c.config_fingerprint = pretrain_config(seed, s).fingerprint();
            c.checkpoint = pre;
        } else if (regime == "retrain") {
            c.config_fingerprint = retrain_config(seed, t).fingerprint();
            c.checkpoint = c.dir + "/final.ckpt";
        } else if (derive_) {
            c.config_fingerprint = retrain_config(seed, t).fingerprint();
            c.checkpoint = c.dir + "/final.ckpt";
            c.derived_from = cell_dir(seed, s, t, "retrain").generic_string();
        } else {
            c.config_fingerprint = fine_tune_config(seed, t).fingerprint();
            c.checkpoint = c.dir + "/final.ckpt";
        }
        manifest_.cells.push_back(std::move(c));
        return manifest_.cells.size() - 1;
    }

    size_t retrain_index(const ManifestCell& c) const {
        for (size_t i = 0; i < manifest_.cells.size(); ++i) {
            const auto& o = manifest_.cells[i];
            if (o.seed == c.seed && o.source == c.source && o.target == c.target && o.regime == "retrain") {
                return i;
            }
        }
        fail(ErrorKind::contract, "derived fine-tune cell without retrain cell");
    }

    size_t pretrain_index(uint64_t seed, const std::string& task) const {
        for (size_t i = 0; i < manifest_.cells.size(); ++i) {
            const auto& o = manifest_.cells[i];
            if (o.seed == seed && o.source == task && o.regime == "pretrain") {
                return i;
            }
        }
        fail(ErrorKind::contract, "no pretrain cell for " + task);
    }

    bool verify(const ManifestCell& c, const std::string& expected) const {
        for (const auto& p : {c.dir, c.checkpoint, c.runlog, c.eval}) {
            if (p.empty() || !fs::exists(root_ / p)) {
                return false;
            }
        }
        require(c.config_fingerprint == expected, ErrorKind::config_mismatch,
                "refusing to resume: cell " + c.dir + " was produced with config " + c.config_fingerprint +
                    ", expected " + expected);
        Checkpoint ck;
        try {
            ck = load_checkpoint(root_ / c.checkpoint);
        } catch (const Error&) {
            return false;
        }
        require(ck.fingerprint == expected, ErrorKind::config_mismatch,
                "refusing to resume: checkpoint " + c.checkpoint + " fingerprint " + ck.fingerprint +
                    " does not match " + expected);
        return true;
    }

    void flush() {
        std::lock_guard lk(mu_);
        write_json(root_ / "manifest.json", manifest_.to_json());
    }

    void mark_complete(size_t i, bool trained) {
        std::lock_guard lk(mu_);
        manifest_.cells[i].status = "complete";
        if (trained) {
            ++summary_.training_runs;
        }
        write_json(root_ / "manifest.json", manifest_.to_json());
    }

    ManifestCell cell(size_t i) {
        std::lock_guard lk(mu_);
        return manifest_.cells[i];
    }

    void run_cell(size_t i) {
        const ManifestCell c = cell(i);
        const fs::path dir = root_ / c.dir;
        fs::remove_all(dir);
        fs::create_directories(dir);
        if (c.regime == "pretrain") {
            train(pretrain_config(c.seed, c.target), bench_, c.target, nullptr, dir);
            mark_complete(i, true);
            return;
        }
        const ManifestCell src = cell(pretrain_index(c.seed, c.source));
        const Checkpoint source = load_checkpoint(root_ / src.checkpoint);
        if (c.regime == "zero_shot") {
            run_regime(&source, c.target, {RegimeKind::zero_shot, 0}, pretrain_config(c.seed, c.target), bench_, dir);
            mark_complete(i, false);
        } else if (c.regime == "retrain") {
            train(retrain_config(c.seed, c.target), bench_, c.target, &source, dir);
            mark_complete(i, true);
        } else if (c.derived_from.empty()) {
            train(fine_tune_config(c.seed, c.target), bench_, c.target, &source, dir);
            mark_complete(i, true);
        } else {
            cut_fine_tune(c, dir);
            mark_complete(i, false);
        }
    }

    // The fine-tune agent is the retrain run stopped at its 10% mark: the
    // snapshot written there plus the log up to that step.
    void cut_fine_tune(const ManifestCell& c, const fs::path& dir) {
        const fs::path rdir = root_ / c.derived_from;
        const RunLog full = RunLog::read(rdir / "runlog.jsonl");
        const RunEvent* snap = nullptr;
        for (const auto& ev : full.events()) {
            if (ev.type == "checkpoint" && ev.fields.contains("mark")) {
                snap = &ev;
                break;
            }
        }
        require(snap != nullptr, ErrorKind::completeness, "retrain run " + c.derived_from + " has no 10% snapshot");
        fs::copy_file(rdir / snap->fields.at("path").get<std::string>(), dir / "final.ckpt",
                      fs::copy_options::overwrite_existing);
        RunLog cut(dir / "runlog.jsonl");
        for (const auto& ev : full.events()) {
            if (ev.step > snap->step) {
                break;
            }
            if (ev.type == "checkpoint" && &ev != snap) {
                continue;
            }
            RunEvent e = ev;
            if (&ev == snap) {
                e.fields["path"] = "final.ckpt";
            }
            if (e.type == "config") {
                e.fields["cut_from"] = c.derived_from;
            }
            cut.append(std::move(e));
        }
        const Checkpoint ck = load_checkpoint(dir / "final.ckpt");
        const EvalReport rep = evaluate(std::make_shared<const Params>(ck.params), bench_, c.target,
                                        eval_protocol(retrain_config(c.seed, c.target)));
        write_json(dir / "eval.json", rep.to_json());
    }

    ExperimentPlan plan_;
    fs::path root_;
    std::shared_ptr<const Benchmark> bench_;
    bool has_retrain_ = false;
    bool derive_ = false;
    Manifest manifest_;
    MatrixRunSummary summary_;
    std::mutex mu_;
};

}  // namespace

MatrixRunSummary run_matrix(const ExperimentPlan& plan) {
    MatrixRunner runner(plan);
    return runner.run();
}

}  // namespace nastl
