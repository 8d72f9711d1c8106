// nastl: command-line front end over the libnastl C API.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nastl/nastl.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Takes ownership of a library-allocated string.
std::string take(char* s) {
    std::string out = s ? s : "";
    nastl_string_free(s);
    return out;
}

void check(nastl_status st) {
    if (st != NASTL_OK) {
        throw DomainError(std::string(nastl_status_name(st)) + ": " + nastl_last_error());
    }
}

struct Bench {
    nastl_benchmark* h = nullptr;
    explicit Bench(const std::string& path) {
        if (path.empty()) {
            throw UsageError("a benchmark file is required (--bench or NASTL_BENCHMARK)");
        }
        check(nastl_benchmark_load(path.c_str(), &h));
    }
    ~Bench() { nastl_benchmark_free(h); }
    Bench(const Bench&) = delete;
    Bench& operator=(const Bench&) = delete;
};

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw DomainError("io: cannot write " + p.string());
    }
    f << text;
}

std::string read_text(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) {
        throw DomainError("io: cannot read " + p.string());
    }
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

json parse_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return json(text);
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) {
        if (!cur.empty()) {
            out.push_back(cur);
        }
    }
    return out;
}

// defaults <- config file <- NASTL_* environment <- flags, with the source
// of every value kept for --print-config.
class Layered {
public:
    void defaults(const json& obj, const std::string& source = "default") {
        for (const auto& [k, v] : obj.items()) {
            values_[k] = v;
            sources_[k] = source;
        }
    }

    void file(const std::string& path) {
        if (path.empty()) {
            return;
        }
        json j;
        try {
            j = json::parse(read_text(path));
        } catch (const json::exception& e) {
            throw DomainError("format: config file " + path + ": " + e.what());
        }
        if (!j.is_object()) {
            throw DomainError("format: config file " + path + " must hold a JSON object");
        }
        for (const auto& [k, v] : j.items()) {
            set(k, v, "file:" + path);
        }
    }

    void environment() {
        for (const auto& [k, v] : values_) {
            std::string name = "NASTL_";
            for (char c : k) {
                name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
            }
            if (const char* e = std::getenv(name.c_str())) {
                pending_.emplace_back(k, parse_value(e), "env:" + name);
            }
        }
        for (auto& [k, v, s] : pending_) {
            values_[k] = v;
            sources_[k] = s;
        }
        pending_.clear();
    }

    void set(const std::string& key, const json& v, const std::string& source) {
        if (!values_.contains(key)) {
            throw UsageError("unknown configuration key '" + key + "'");
        }
        values_[key] = v;
        sources_[key] = source;
    }

    void flag_pairs(const std::vector<std::string>& pairs) {
        for (const auto& p : pairs) {
            const auto eq = p.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw UsageError("--set expects key=value, got '" + p + "'");
            }
            set(p.substr(0, eq), parse_value(p.substr(eq + 1)), "flag:--set");
        }
    }

    const json& at(const std::string& k) const { return values_.at(k); }
    std::string str(const std::string& k) const {
        const auto& v = values_.at(k);
        return v.is_null() ? std::string() : (v.is_string() ? v.get<std::string>() : v.dump());
    }
    const std::string& source(const std::string& k) const { return sources_.at(k); }
    bool from_default(const std::string& k) const { return sources_.at(k) == "default"; }

    json subset(const std::vector<std::string>& exclude) const {
        json j = json::object();
        for (const auto& [k, v] : values_) {
            if (std::find(exclude.begin(), exclude.end(), k) == exclude.end()) {
                j[k] = v;
            }
        }
        return j;
    }

    std::string print() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) {
            os << k << " = " << v.dump() << "  [" << sources_.at(k) << "]\n";
        }
        return os.str();
    }

    json effective() const {
        json vals = json::object();
        json srcs = json::object();
        for (const auto& [k, v] : values_) {
            vals[k] = v;
            srcs[k] = sources_.at(k);
        }
        return {{"values", vals}, {"sources", srcs}};
    }

private:
    std::map<std::string, json> values_;
    std::map<std::string, std::string> sources_;
    std::vector<std::tuple<std::string, json, std::string>> pending_;
};

// Options shared by every layered subcommand.
struct LayerOpts {
    std::string config;
    std::vector<std::string> sets;
    bool print = false;
    std::string preset = "desk";
    std::map<std::string, std::string> flags;  // key -> raw flag text
    std::map<std::string, std::string> flag_names;
};

void add_layer_opts(CLI::App* app, LayerOpts& o) {
    app->add_option("--config", o.config, "JSON configuration file");
    app->add_option("--set", o.sets, "Override a configuration key (key=value, repeatable)");
    app->add_flag("--print-config", o.print, "Print the effective configuration with sources and exit");
}

void add_keyed(CLI::App* app, LayerOpts& o, const std::string& flag, const std::string& key, const std::string& help) {
    o.flag_names[key] = flag;
    app->add_option(flag, o.flags[key], help);
}

void apply_flags(Layered& cfg, const LayerOpts& o) {
    cfg.flag_pairs(o.sets);
    for (const auto& [key, raw] : o.flags) {
        if (!raw.empty()) {
            json v = parse_value(raw);
            if (key == "shaping_exponent" && raw == "none") {
                v = nullptr;
            }
            cfg.set(key, v, "flag:" + o.flag_names.at(key));
        }
    }
}

json train_defaults(const std::string& preset) {
    char* out = nullptr;
    check(nastl_train_config_defaults(preset.c_str(), &out));
    return json::parse(take(out));
}

// Shaping follows the task unless some layer set it explicitly.
void apply_shaping_rule(Layered& cfg, const std::string& task_key) {
    if (cfg.from_default("shaping_exponent")) {
        const bool seg = cfg.str(task_key) == "segmentsemantic";
        cfg.defaults({{"shaping_exponent", seg ? json(0.478) : json(nullptr)}}, "default:task-rule");
    }
}

Layered build_layers(const LayerOpts& o, const json& extra, const std::string& task_key) {
    Layered cfg;
    std::string preset = o.preset;
    if (const char* p = std::getenv("NASTL_PRESET"); p && o.preset == "desk") {
        preset = p;
    }
    cfg.defaults(train_defaults(preset));
    cfg.defaults(extra);
    cfg.file(o.config);
    cfg.environment();
    apply_flags(cfg, o);
    if (!task_key.empty()) {
        apply_shaping_rule(cfg, task_key);
    }
    return cfg;
}

void write_effective(const fs::path& dir, const Layered& cfg) {
    fs::create_directories(dir);
    write_text(dir / "effective_config.json", cfg.effective().dump(2) + "\n");
}

json resolve_train(const Layered& cfg, const std::vector<std::string>& cli_keys) {
    char* out = nullptr;
    check(nastl_train_config_resolve(cfg.subset(cli_keys).dump().c_str(), &out));
    return json::parse(take(out));
}

void print_eval(const json& rep) {
    std::cout << "eval mean " << rep.at("mean").get<double>() << " std " << rep.at("std").get<double>() << " ci95 ["
              << rep.at("ci_low").get<double>() << ", " << rep.at("ci_high").get<double>() << "] over "
              << rep.at("values").size() << " episodes\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transfer learning laboratory for architecture-search agents"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(nastl_version()));

    // bench
    auto* bench = app.add_subcommand("bench", "Benchmark files");
    bench->require_subcommand(1);
    std::string gen_out, gen_spec;
    uint64_t gen_seed = 0;
    auto* gen = bench->add_subcommand("gen", "Generate a synthetic benchmark");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--spec", gen_spec, "Synthetic landscape spec (JSON); default four-task landscape");
    gen->add_option("--out", gen_out, "Output benchmark file")->required();

    std::string val_file;
    auto* validate = bench->add_subcommand("validate", "Validate a benchmark file");
    validate->add_option("file", val_file, "Benchmark file")->required();

    std::string cor_file, cor_split = "valid", cor_tasks, cor_out;
    auto* correlate = bench->add_subcommand("correlate", "Kendall tau between task rankings");
    correlate->add_option("file", cor_file, "Benchmark file")->required();
    correlate->add_option("--split", cor_split, "train|valid|test");
    correlate->add_option("--tasks", cor_tasks, "Comma-separated task subset");
    correlate->add_option("--out", cor_out, "Write the matrix as CSV into this directory");

    // sweep-gamma
    std::string sw_bench, sw_task, sw_split = "valid", sw_out;
    auto* sweep = app.add_subcommand("sweep-gamma", "Spread-maximizing reward exponent for a task");
    sweep->add_option("--bench", sw_bench, "Benchmark file")->required();
    sweep->add_option("--task", sw_task, "Task name")->required();
    sweep->add_option("--split", sw_split, "train|valid|test");
    sweep->add_option("--out", sw_out, "Write the sweep table as CSV into this directory");

    // train
    LayerOpts tr;
    auto* train = app.add_subcommand("train", "Train an agent on one task");
    add_layer_opts(train, tr);
    train->add_option("--preset", tr.preset, "desk|paper");
    add_keyed(train, tr, "--bench", "benchmark", "Benchmark file");
    add_keyed(train, tr, "--task", "task", "Task to train on");
    add_keyed(train, tr, "--out", "out", "Output directory");
    add_keyed(train, tr, "--init", "init", "Initialize parameters from this checkpoint");
    add_keyed(train, tr, "--steps", "total_steps", "Environment step budget");
    add_keyed(train, tr, "--seed", "seed", "Master seed");
    add_keyed(train, tr, "--shaping", "shaping_exponent", "Reward exponent, or 'none'");

    // transfer
    auto* transfer = app.add_subcommand("transfer", "Transfer experiments");
    transfer->require_subcommand(1);
    LayerOpts trr;
    auto* trun = transfer->add_subcommand("run", "One transfer regime from a source checkpoint");
    add_layer_opts(trun, trr);
    trun->add_option("--preset", trr.preset, "desk|paper");
    add_keyed(trun, trr, "--bench", "benchmark", "Benchmark file");
    add_keyed(trun, trr, "--source", "source", "Source checkpoint (omit to train from scratch)");
    add_keyed(trun, trr, "--target", "target", "Target task");
    add_keyed(trun, trr, "--regime", "regime", "zero_shot|fine_tune|retrain");
    add_keyed(trun, trr, "--out", "out", "Output directory");
    add_keyed(trun, trr, "--steps", "total_steps", "Full (pretrain) step budget");
    add_keyed(trun, trr, "--seed", "seed", "Master seed");
    add_keyed(trun, trr, "--shaping", "shaping_exponent", "Reward exponent, or 'none'");

    LayerOpts trm;
    auto* tmat = transfer->add_subcommand("matrix", "Full pretrain + transfer matrix");
    add_layer_opts(tmat, trm);
    tmat->add_option("--preset", trm.preset, "desk|paper");
    add_keyed(tmat, trm, "--bench", "benchmark", "Benchmark file");
    add_keyed(tmat, trm, "--tasks", "tasks", "Comma-separated tasks");
    add_keyed(tmat, trm, "--seeds", "seeds", "Comma-separated seeds");
    add_keyed(tmat, trm, "--pretrain-steps", "pretrain_steps", "Pretraining step budget");
    add_keyed(tmat, trm, "--regimes", "regimes", "Comma-separated regimes");
    add_keyed(tmat, trm, "--jobs", "jobs", "Cells run in parallel");
    add_keyed(tmat, trm, "--out", "out", "Experiment root directory");

    // eval
    LayerOpts ev;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline policy");
    add_layer_opts(eval, ev);
    add_keyed(eval, ev, "--bench", "benchmark", "Benchmark file");
    add_keyed(eval, ev, "--task", "task", "Task to evaluate on");
    add_keyed(eval, ev, "--checkpoint", "checkpoint", "Checkpoint to evaluate greedily");
    add_keyed(eval, ev, "--policy", "policy", "Baseline when no checkpoint: random_walk|uniform");
    add_keyed(eval, ev, "--episodes", "episodes", "Evaluation episodes");
    add_keyed(eval, ev, "--seed", "seed", "Evaluation seed");
    add_keyed(eval, ev, "--out", "out", "Output directory");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Post-process an experiment directory");
    analyze->require_subcommand(1);
    std::string an_dir, an_regime = "fine_tune", an_out, an_ref = "final";
    int an_kernel = 16;
    uint64_t an_seed = 0;
    bool an_svg = false;
    auto* amat = analyze->add_subcommand("matrix", "Performance matrix CSV (and optional SVG)");
    auto* acur = analyze->add_subcommand("curves", "Raw and smoothed evaluation curves CSV");
    auto* acro = analyze->add_subcommand("crossover", "Time-to-equivalence CSV");
    for (auto* a : {amat, acur, acro}) {
        a->add_option("--dir", an_dir, "Experiment directory")->required();
        a->add_option("--regime", an_regime, "zero_shot|fine_tune|retrain");
        a->add_option("--out", an_out, "Output directory (default: print CSV)");
    }
    amat->add_option("--seed", an_seed, "Bootstrap seed");
    amat->add_flag("--svg", an_svg, "Also render matrix.svg (needs --out)");
    acur->add_option("--kernel", an_kernel, "Moving-average kernel");
    acro->add_option("--kernel", an_kernel, "Moving-average kernel");
    acro->add_option("--seed", an_seed, "Bootstrap seed");
    acro->add_option("--reference", an_ref, "final|best reference level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            nastl_benchmark* h = nullptr;
            const std::string spec = gen_spec.empty() ? "" : read_text(gen_spec);
            check(nastl_benchmark_generate(spec.empty() ? nullptr : spec.c_str(), gen_seed, &h));
            const nastl_status st = nastl_benchmark_save(h, gen_out.c_str());
            nastl_benchmark_free(h);
            check(st);
            std::cout << "wrote " << gen_out << "\n";
        } else if (validate->parsed()) {
            Bench b(val_file);
            char* out = nullptr;
            check(nastl_benchmark_summary(b.h, &out));
            const json s = json::parse(take(out));
            std::cout << "ok: " << s.at("records") << " records, " << s.at("tasks").size() << " tasks\n";
            for (const auto& t : s.at("tasks")) {
                std::cout << "  " << t.at("name").get<std::string>() << " (" << t.at("metric_name").get<std::string>()
                          << (t.at("higher_is_better").get<bool>() ? ", higher is better" : ", lower is better")
                          << ")\n";
            }
        } else if (correlate->parsed()) {
            Bench b(cor_file);
            std::string tasks;
            if (!cor_tasks.empty()) {
                tasks = json(split_list(cor_tasks)).dump();
            }
            char* out = nullptr;
            check(nastl_benchmark_correlation(b.h, tasks.empty() ? nullptr : tasks.c_str(), cor_split.c_str(), &out));
            const json m = json::parse(take(out));
            std::ostringstream csv;
            csv << "task";
            for (const auto& t : m.at("tasks")) {
                csv << ',' << t.get<std::string>();
            }
            csv << '\n';
            for (size_t i = 0; i < m.at("tasks").size(); ++i) {
                csv << m.at("tasks")[i].get<std::string>();
                for (const auto& v : m.at("tau")[i]) {
                    csv << ',' << v.get<double>();
                }
                csv << '\n';
            }
            if (cor_out.empty()) {
                std::cout << csv.str();
            } else {
                write_text(fs::path(cor_out) / "correlation.csv", csv.str());
                std::cout << "wrote " << (fs::path(cor_out) / "correlation.csv").string() << "\n";
            }
        } else if (sweep->parsed()) {
            Bench b(sw_bench);
            char* out = nullptr;
            check(nastl_sweep_gamma(b.h, sw_task.c_str(), sw_split.c_str(), nullptr, &out));
            const json r = json::parse(take(out));
            std::cout << "best exponent " << r.at("best_exponent").get<double>() << " for " << sw_task << "\n";
            if (!sw_out.empty()) {
                std::ostringstream csv;
                csv << "exponent,spread\n";
                for (const auto& row : r.at("table")) {
                    csv << row[0].get<double>() << ',' << row[1].get<double>() << '\n';
                }
                write_text(fs::path(sw_out) / "sweep.csv", csv.str());
            }
        } else if (train->parsed()) {
            const std::vector<std::string> cli_keys{"benchmark", "task", "out", "init"};
            Layered cfg = build_layers(tr, {{"benchmark", ""}, {"task", ""}, {"out", ""}, {"init", nullptr}}, "task");
            if (tr.print) {
                std::cout << cfg.print();
                return kExitOk;
            }
            if (cfg.str("task").empty() || cfg.str("out").empty()) {
                throw UsageError("train needs --task and --out");
            }
            const json tc = resolve_train(cfg, cli_keys);
            Bench b(cfg.str("benchmark"));
            write_effective(cfg.str("out"), cfg);
            char* out = nullptr;
            const std::string init = cfg.str("init");
            check(nastl_train(b.h, cfg.str("task").c_str(), tc.dump().c_str(), init.empty() ? nullptr : init.c_str(),
                              cfg.str("out").c_str(), &out));
            const json r = json::parse(take(out));
            std::cout << "trained " << r.at("env_steps") << " steps, " << r.at("updates") << " updates; checkpoint "
                      << r.at("checkpoint").get<std::string>() << "\n";
            print_eval(r.at("eval"));
        } else if (trun->parsed()) {
            const std::vector<std::string> cli_keys{"benchmark", "source", "target", "regime", "out"};
            Layered cfg = build_layers(
                trr, {{"benchmark", ""}, {"source", nullptr}, {"target", ""}, {"regime", "fine_tune"}, {"out", ""}},
                "target");
            if (trr.print) {
                std::cout << cfg.print();
                return kExitOk;
            }
            if (cfg.str("target").empty() || cfg.str("out").empty()) {
                throw UsageError("transfer run needs --target and --out");
            }
            const json tc = resolve_train(cfg, cli_keys);
            Bench b(cfg.str("benchmark"));
            write_effective(cfg.str("out"), cfg);
            char* out = nullptr;
            const std::string src = cfg.str("source");
            check(nastl_transfer_run(b.h, src.empty() ? nullptr : src.c_str(), cfg.str("target").c_str(),
                                     cfg.str("regime").c_str(), tc.dump().c_str(), cfg.str("out").c_str(), &out));
            const json r = json::parse(take(out));
            std::cout << r.at("regime").get<std::string>() << ": " << r.at("target_steps") << " target steps\n";
            print_eval(r.at("eval"));
        } else if (tmat->parsed()) {
            const std::vector<std::string> cli_keys{"benchmark", "tasks",  "seeds",           "pretrain_steps",
                                                    "regimes",   "jobs",   "derive_fine_tune", "out"};
            Layered cfg = build_layers(trm,
                                       {{"benchmark", ""},
                                        {"tasks", ""},
                                        {"seeds", "0"},
                                        {"pretrain_steps", 200000},
                                        {"regimes", "zero_shot,fine_tune,retrain"},
                                        {"jobs", 1},
                                        {"derive_fine_tune", true},
                                        {"out", ""}},
                                       "");
            if (trm.print) {
                std::cout << cfg.print();
                return kExitOk;
            }
            if (cfg.str("tasks").empty() || cfg.str("out").empty()) {
                throw UsageError("transfer matrix needs --tasks and --out");
            }
            auto list = [&](const std::string& k) {
                const json& v = cfg.at(k);
                if (v.is_array()) {
                    std::vector<std::string> out;
                    for (const auto& x : v) {
                        out.push_back(x.is_string() ? x.get<std::string>() : x.dump());
                    }
                    return out;
                }
                return split_list(cfg.str(k));
            };
            std::vector<uint64_t> seeds;
            for (const auto& s : list("seeds")) {
                seeds.push_back(std::stoull(s));
            }
            const json train_cfg = resolve_train(cfg, cli_keys);
            const json plan = {{"tasks", list("tasks")},
                               {"seeds", seeds},
                               {"pretrain_steps", cfg.at("pretrain_steps")},
                               {"regimes", list("regimes")},
                               {"benchmark", fs::absolute(cfg.str("benchmark")).string()},
                               {"output_root", cfg.str("out")},
                               {"train", train_cfg},
                               {"derive_fine_tune", cfg.at("derive_fine_tune")},
                               // Without an explicit exponent each run is shaped by its own task.
                               {"task_shaping_rule", cfg.from_default("shaping_exponent")},
                               {"jobs", cfg.at("jobs")}};
            write_effective(cfg.str("out"), cfg);
            char* out = nullptr;
            check(nastl_transfer_matrix(plan.dump().c_str(), &out));
            const json r = json::parse(take(out));
            std::cout << "matrix complete: " << r.at("training_runs") << " training runs, " << r.at("skipped_cells")
                      << " cells reused; manifest " << (fs::path(cfg.str("out")) / "manifest.json").string() << "\n";
        } else if (eval->parsed()) {
            Layered cfg;
            cfg.defaults({{"benchmark", ""},
                          {"task", ""},
                          {"checkpoint", nullptr},
                          {"policy", "random_walk"},
                          {"episodes", 64},
                          {"episode_cap", 50},
                          {"pad_nodes", 8},
                          {"max_candidates", 50},
                          {"seed", 0},
                          {"out", ""}});
            cfg.file(ev.config);
            cfg.environment();
            apply_flags(cfg, ev);
            if (ev.print) {
                std::cout << cfg.print();
                return kExitOk;
            }
            if (cfg.str("task").empty()) {
                throw UsageError("eval needs --task");
            }
            Bench b(cfg.str("benchmark"));
            const json proto = cfg.subset({"benchmark", "task", "checkpoint", "out"});
            const std::string ck = cfg.str("checkpoint");
            char* out = nullptr;
            check(nastl_evaluate(b.h, cfg.str("task").c_str(), ck.empty() ? nullptr : ck.c_str(),
                                 proto.dump().c_str(), &out));
            const json rep = json::parse(take(out));
            print_eval(rep);
            if (!cfg.str("out").empty()) {
                write_effective(cfg.str("out"), cfg);
                write_text(fs::path(cfg.str("out")) / "eval.json", rep.dump(2) + "\n");
            }
        } else if (amat->parsed() || acur->parsed() || acro->parsed()) {
            std::string csv;
            std::string name;
            char* out = nullptr;
            if (amat->parsed()) {
                char* missing = nullptr;
                check(nastl_analyze_matrix(an_dir.c_str(), an_regime.c_str(), an_seed, &out, &missing));
                csv = take(out);
                const json miss = json::parse(take(missing));
                for (const auto& m : miss) {
                    std::cerr << "missing cell: " << m.get<std::string>() << "\n";
                }
                name = "matrix_" + an_regime + ".csv";
                if (an_svg) {
                    if (an_out.empty()) {
                        throw UsageError("--svg needs --out");
                    }
                    char* svg = nullptr;
                    check(nastl_analyze_matrix_svg(an_dir.c_str(), an_regime.c_str(), an_seed, &svg));
                    write_text(fs::path(an_out) / ("matrix_" + an_regime + ".svg"), take(svg));
                }
            } else if (acur->parsed()) {
                check(nastl_analyze_curves(an_dir.c_str(), an_regime.c_str(), an_kernel, &out));
                csv = take(out);
                name = "curves_" + an_regime + ".csv";
            } else {
                check(nastl_analyze_crossover(an_dir.c_str(), an_regime.c_str(), an_ref.c_str(), an_kernel, an_seed,
                                              &out));
                csv = take(out);
                name = "crossover_" + an_regime + ".csv";
            }
            if (an_out.empty()) {
                std::cout << csv;
            } else {
                write_text(fs::path(an_out) / name, csv);
                std::cout << "wrote " << (fs::path(an_out) / name).string() << "\n";
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return kExitOk;
}
