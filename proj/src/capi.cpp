#include "nastl/nastl.h"

#include <cstring>
#include <memory>
#include <string>

#include <json.hpp>

#include "analysis.hpp"
#include "errors.hpp"
#include "synthetic.hpp"
#include "transfer_lab.hpp"

struct nastl_benchmark {
    std::shared_ptr<const nastl::Benchmark> bench;
};

struct nastl_checkpoint {
    nastl::Checkpoint ckpt;
};

namespace {

using json = nlohmann::json;
using nastl::ErrorKind;

thread_local std::string g_last_error;

nastl_status status_of(ErrorKind k) {
    switch (k) {
        case ErrorKind::invalid_argument: return NASTL_ERR_INVALID_ARGUMENT;
        case ErrorKind::format: return NASTL_ERR_FORMAT;
        case ErrorKind::validation: return NASTL_ERR_VALIDATION;
        case ErrorKind::completeness: return NASTL_ERR_COMPLETENESS;
        case ErrorKind::not_found: return NASTL_ERR_NOT_FOUND;
        case ErrorKind::io: return NASTL_ERR_IO;
        case ErrorKind::numeric: return NASTL_ERR_NUMERIC;
        case ErrorKind::config_mismatch: return NASTL_ERR_CONFIG_MISMATCH;
        case ErrorKind::checksum: return NASTL_ERR_CHECKSUM;
        case ErrorKind::contract: return NASTL_ERR_CONTRACT;
        case ErrorKind::domain: return NASTL_ERR_DOMAIN;
    }
    return NASTL_ERR_INTERNAL;
}

template <typename F>
nastl_status guarded(F&& f) {
    g_last_error.clear();
    try {
        f();
        return NASTL_OK;
    } catch (const nastl::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const json::exception& e) {
        g_last_error = std::string("json: ") + e.what();
        return NASTL_ERR_FORMAT;
    } catch (const std::filesystem::filesystem_error& e) {
        g_last_error = e.what();
        return NASTL_ERR_IO;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return NASTL_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return NASTL_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown exception";
        return NASTL_ERR_INTERNAL;
    }
}

char* dup(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) {
        throw std::bad_alloc();
    }
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

void need(const void* p, const char* what) {
    nastl::require(p != nullptr, ErrorKind::invalid_argument, std::string(what) + " must not be NULL");
}

json parse_arg(const char* text, const char* what) {
    if (!text || !*text) {
        return json::object();
    }
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        nastl::fail(ErrorKind::format, std::string(what) + ": " + e.what());
    }
}

json lineage_json(const std::vector<nastl::LineageEntry>& l) {
    json a = json::array();
    for (const auto& e : l) {
        a.push_back({{"task", e.task}, {"steps", e.steps}});
    }
    return a;
}

nastl::EvalProtocol protocol_from(const json& j) {
    nastl::EvalProtocol p;
    p.episodes = j.value("episodes", p.episodes);
    p.episode_cap = j.value("episode_cap", p.episode_cap);
    p.pad_nodes = j.value("pad_nodes", p.pad_nodes);
    p.max_candidates = j.value("max_candidates", p.max_candidates);
    p.seed = j.value("seed", p.seed);
    nastl::require(p.episodes >= 2, ErrorKind::invalid_argument, "eval episodes must be >= 2");
    return p;
}

}  // namespace

extern "C" {

NASTL_API const char* nastl_last_error(void) { return g_last_error.c_str(); }

NASTL_API const char* nastl_status_name(nastl_status status) {
    switch (status) {
        case NASTL_OK: return "ok";
        case NASTL_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case NASTL_ERR_FORMAT: return "format";
        case NASTL_ERR_VALIDATION: return "validation";
        case NASTL_ERR_COMPLETENESS: return "completeness";
        case NASTL_ERR_NOT_FOUND: return "not_found";
        case NASTL_ERR_IO: return "io";
        case NASTL_ERR_NUMERIC: return "numeric";
        case NASTL_ERR_CONFIG_MISMATCH: return "config_mismatch";
        case NASTL_ERR_CHECKSUM: return "checksum";
        case NASTL_ERR_CONTRACT: return "contract";
        case NASTL_ERR_DOMAIN: return "domain";
        case NASTL_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

NASTL_API const char* nastl_version(void) { return "0.1.0"; }

NASTL_API void nastl_string_free(char* s) { std::free(s); }

NASTL_API nastl_status nastl_benchmark_generate(const char* spec_json, uint64_t seed, nastl_benchmark** out) {
    return guarded([&] {
        need(out, "out");
        *out = nullptr;
        const auto spec = (spec_json && *spec_json) ? nastl::parse_synthetic_spec(spec_json)
                                                   : nastl::SyntheticSpec::four_task_default();
        auto b = std::make_unique<nastl_benchmark>();
        b->bench = std::make_shared<const nastl::Benchmark>(nastl::generate_synthetic(seed, spec));
        *out = b.release();
    });
}

NASTL_API nastl_status nastl_benchmark_load(const char* path, nastl_benchmark** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = nullptr;
        auto b = std::make_unique<nastl_benchmark>();
        b->bench = std::make_shared<const nastl::Benchmark>(nastl::load_benchmark(path));
        *out = b.release();
    });
}

NASTL_API nastl_status nastl_benchmark_save(const nastl_benchmark* bench, const char* path) {
    return guarded([&] {
        need(bench, "bench");
        need(path, "path");
        nastl::save_benchmark(*bench->bench, path);
    });
}

NASTL_API void nastl_benchmark_free(nastl_benchmark* bench) { delete bench; }

NASTL_API nastl_status nastl_benchmark_summary(const nastl_benchmark* bench, char** json_out) {
    return guarded([&] {
        need(bench, "bench");
        need(json_out, "json_out");
        const auto& b = *bench->bench;
        json tasks = json::array();
        for (size_t t = 0; t < b.tasks().size(); ++t) {
            const auto& spec = b.tasks()[t];
            json stats = json::object();
            for (auto s : {nastl::Split::train, nastl::Split::valid, nastl::Split::test}) {
                const auto& mm = b.norm_stats(static_cast<nastl::TaskIndex>(t), s);
                stats[nastl::to_string(s)] = {{"min", mm.min}, {"max", mm.max}};
            }
            tasks.push_back({{"name", spec.name},
                             {"metric_name", spec.metric_name},
                             {"higher_is_better", spec.higher_is_better},
                             {"norm_stats", stats}});
        }
        const json j = {{"records", b.records().size()},
                        {"space_size", b.descriptor().space_size()},
                        {"node_count", b.descriptor().node_count},
                        {"ops", b.descriptor().ops},
                        {"tasks", tasks}};
        *json_out = dup(j.dump());
    });
}

NASTL_API nastl_status nastl_benchmark_metric(const nastl_benchmark* bench, const char* arch, const char* task,
                                              const char* split, int normalized, double* out) {
    return guarded([&] {
        need(bench, "bench");
        need(arch, "arch");
        need(task, "task");
        need(split, "split");
        need(out, "out");
        const auto& b = *bench->bench;
        const auto a = nastl::decode(arch, b.descriptor());
        const auto t = b.task_index(task);
        const auto s = nastl::parse_split(split);
        *out = normalized ? b.normalized_metric(a, t, s) : b.raw_metric(a, t, s);
    });
}

NASTL_API nastl_status nastl_benchmark_correlation(const nastl_benchmark* bench, const char* tasks_json,
                                                   const char* split, char** json_out) {
    return guarded([&] {
        need(bench, "bench");
        need(json_out, "json_out");
        const auto& b = *bench->bench;
        std::vector<std::string> tasks;
        if (tasks_json && *tasks_json) {
            tasks = parse_arg(tasks_json, "tasks").get<std::vector<std::string>>();
        } else {
            for (const auto& t : b.tasks()) {
                tasks.push_back(t.name);
            }
        }
        const auto sp = nastl::parse_split(split ? split : "valid");
        const auto tau = nastl::task_correlation_matrix(b, tasks, sp);
        *json_out = dup(json{{"tasks", tasks}, {"split", nastl::to_string(sp)}, {"tau", tau}}.dump());
    });
}

NASTL_API nastl_status nastl_sweep_gamma(const nastl_benchmark* bench, const char* task, const char* split,
                                         const char* grid_json, char** json_out) {
    return guarded([&] {
        need(bench, "bench");
        need(task, "task");
        need(json_out, "json_out");
        const auto& b = *bench->bench;
        const auto t = b.task_index(task);
        const auto sp = nastl::parse_split(split ? split : "valid");
        std::vector<double> values;
        values.reserve(b.records().size());
        for (const auto& r : b.records()) {
            values.push_back(b.normalized_metric(r.arch, t, sp));
        }
        const auto grid = (grid_json && *grid_json) ? parse_arg(grid_json, "grid").get<std::vector<double>>()
                                                   : nastl::default_sweep_grid();
        const auto res = nastl::sweep_gamma(values, grid);
        json table = json::array();
        for (const auto& row : res.table) {
            table.push_back({row.exponent, row.spread});
        }
        *json_out = dup(json{{"task", task},
                             {"split", nastl::to_string(sp)},
                             {"best_exponent", res.best_exponent},
                             {"table", table}}
                            .dump());
    });
}

NASTL_API nastl_status nastl_train_config_defaults(const char* preset, char** json_out) {
    return guarded([&] {
        need(json_out, "json_out");
        const std::string p = preset ? preset : "desk";
        nastl::TrainConfig c;
        if (p == "desk") {
            c = nastl::TrainConfig::desk();
        } else if (p == "paper") {
            c = nastl::TrainConfig::paper();
        } else {
            nastl::fail(ErrorKind::invalid_argument, "unknown preset '" + p + "' (expected desk or paper)");
        }
        *json_out = dup(c.to_json().dump());
    });
}

NASTL_API nastl_status nastl_train_config_resolve(const char* config_json, char** json_out) {
    return guarded([&] {
        need(json_out, "json_out");
        const auto c = nastl::TrainConfig::from_json(parse_arg(config_json, "config"));
        c.validate();
        *json_out = dup(c.to_json().dump());
    });
}

NASTL_API nastl_status nastl_train(const nastl_benchmark* bench, const char* task, const char* config_json,
                                   const char* init_checkpoint, const char* out_dir, char** result_json) {
    return guarded([&] {
        need(bench, "bench");
        need(task, "task");
        need(out_dir, "out_dir");
        const auto cfg = nastl::TrainConfig::from_json(parse_arg(config_json, "config"));
        std::optional<nastl::Checkpoint> init;
        if (init_checkpoint && *init_checkpoint) {
            init = nastl::load_checkpoint(init_checkpoint);
        }
        const auto r = nastl::train(cfg, bench->bench, task, init ? &*init : nullptr, out_dir);
        if (result_json) {
            *result_json = dup(json{{"checkpoint", r.checkpoint_path.string()},
                                    {"env_steps", r.env_steps},
                                    {"updates", r.updates},
                                    {"trained_samples", r.trained_samples},
                                    {"target_syncs", r.target_syncs},
                                    {"lineage", lineage_json(r.checkpoint.lineage)},
                                    {"eval", r.final_eval.to_json()}}
                                   .dump());
        }
    });
}

NASTL_API nastl_status nastl_evaluate(const nastl_benchmark* bench, const char* task, const char* checkpoint,
                                      const char* protocol_json, char** report_json) {
    return guarded([&] {
        need(bench, "bench");
        need(task, "task");
        need(report_json, "report_json");
        const json pj = parse_arg(protocol_json, "protocol");
        const auto proto = protocol_from(pj);
        nastl::EvalReport rep;
        if (checkpoint && *checkpoint) {
            const auto ck = nastl::load_checkpoint(checkpoint);
            rep = nastl::evaluate(std::make_shared<const nastl::Params>(ck.params), bench->bench, task, proto);
        } else {
            const std::string policy = pj.value("policy", std::string("random_walk"));
            nastl::Policy pol;
            if (policy == "random_walk") {
                pol = nastl::random_walk_policy(proto.seed);
            } else if (policy == "uniform") {
                pol = nastl::uniform_random_policy(proto.seed);
            } else {
                nastl::fail(ErrorKind::invalid_argument,
                            "unknown policy '" + policy + "' (expected random_walk or uniform)");
            }
            rep = nastl::evaluate(pol, bench->bench, task, proto);
        }
        *report_json = dup(rep.to_json().dump());
    });
}

NASTL_API nastl_status nastl_transfer_run(const nastl_benchmark* bench, const char* source_checkpoint,
                                          const char* target, const char* regime, const char* config_json,
                                          const char* out_dir, char** result_json) {
    return guarded([&] {
        need(bench, "bench");
        need(target, "target");
        need(regime, "regime");
        need(out_dir, "out_dir");
        const auto cfg = nastl::TrainConfig::from_json(parse_arg(config_json, "config"));
        std::optional<nastl::Checkpoint> src;
        if (source_checkpoint && *source_checkpoint) {
            src = nastl::load_checkpoint(source_checkpoint);
        }
        const auto kind = nastl::parse_regime(regime);
        const auto reg = nastl::TransferRegime::standard(kind, cfg.total_steps);
        const auto r = nastl::run_regime(src ? &*src : nullptr, target, reg, cfg, bench->bench, out_dir);
        if (result_json) {
            json j = {{"regime", nastl::to_string(kind)},
                      {"target_steps", r.target_steps},
                      {"trained", r.trained},
                      {"checkpoint", r.checkpoint_path.string()},
                      {"eval", r.report.to_json()}};
            if (r.checkpoint) {
                j["lineage"] = lineage_json(r.checkpoint->lineage);
            }
            *result_json = dup(j.dump());
        }
    });
}

NASTL_API nastl_status nastl_transfer_matrix(const char* plan_json, char** result_json) {
    return guarded([&] {
        need(plan_json, "plan_json");
        const auto plan = nastl::ExperimentPlan::from_json(parse_arg(plan_json, "plan"));
        const auto s = nastl::run_matrix(plan);
        if (result_json) {
            *result_json = dup(json{{"training_runs", s.training_runs},
                                    {"skipped_cells", s.skipped_cells},
                                    {"manifest", s.manifest.to_json()}}
                                   .dump());
        }
    });
}

NASTL_API nastl_status nastl_analyze_matrix(const char* experiment_dir, const char* regime, uint64_t seed,
                                            char** csv_out, char** missing_json) {
    return guarded([&] {
        need(experiment_dir, "experiment_dir");
        need(regime, "regime");
        need(csv_out, "csv_out");
        const auto rep = nastl::performance_matrix(experiment_dir, regime, seed);
        *csv_out = dup(nastl::matrix_to_csv(rep));
        if (missing_json) {
            *missing_json = dup(json(rep.missing).dump());
        }
    });
}

NASTL_API nastl_status nastl_analyze_matrix_svg(const char* experiment_dir, const char* regime, uint64_t seed,
                                                char** svg_out) {
    return guarded([&] {
        need(experiment_dir, "experiment_dir");
        need(regime, "regime");
        need(svg_out, "svg_out");
        const auto rep = nastl::performance_matrix(experiment_dir, regime, seed);
        *svg_out = dup(nastl::matrix_to_svg(rep, std::string("Transfer performance: ") + regime));
    });
}

NASTL_API nastl_status nastl_analyze_curves(const char* experiment_dir, const char* regime, int kernel,
                                            char** csv_out) {
    return guarded([&] {
        need(experiment_dir, "experiment_dir");
        need(regime, "regime");
        need(csv_out, "csv_out");
        nastl::require(kernel >= 1, ErrorKind::invalid_argument, "kernel must be >= 1");
        *csv_out = dup(nastl::curves_csv(experiment_dir, regime, kernel));
    });
}

NASTL_API nastl_status nastl_analyze_crossover(const char* experiment_dir, const char* regime,
                                               const char* reference_mode, int kernel, uint64_t seed,
                                               char** csv_out) {
    return guarded([&] {
        need(experiment_dir, "experiment_dir");
        need(regime, "regime");
        need(csv_out, "csv_out");
        nastl::require(kernel >= 1, ErrorKind::invalid_argument, "kernel must be >= 1");
        const std::string m = reference_mode ? reference_mode : "final";
        nastl::ReferenceMode mode;
        if (m == "final") {
            mode = nastl::ReferenceMode::final_value;
        } else if (m == "best") {
            mode = nastl::ReferenceMode::best_value;
        } else {
            nastl::fail(ErrorKind::invalid_argument, "unknown reference mode '" + m + "' (expected final or best)");
        }
        *csv_out = dup(nastl::crossover_csv(experiment_dir, regime, mode, kernel, seed));
    });
}

NASTL_API nastl_status nastl_checkpoint_load(const char* path, nastl_checkpoint** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = nullptr;
        auto c = std::make_unique<nastl_checkpoint>();
        c->ckpt = nastl::load_checkpoint(path);
        *out = c.release();
    });
}

NASTL_API nastl_status nastl_checkpoint_save(const nastl_checkpoint* ckpt, const char* path) {
    return guarded([&] {
        need(ckpt, "ckpt");
        need(path, "path");
        nastl::save_checkpoint(ckpt->ckpt, path);
    });
}

NASTL_API nastl_status nastl_checkpoint_info(const nastl_checkpoint* ckpt, char** json_out) {
    return guarded([&] {
        need(ckpt, "ckpt");
        need(json_out, "json_out");
        const auto& c = ckpt->ckpt;
        *json_out = dup(json{{"net", json::parse(c.net().to_json())},
                             {"trained_steps", c.trained_steps},
                             {"lineage", lineage_json(c.lineage)},
                             {"fingerprint", c.fingerprint},
                             {"param_count", c.params.data.size()},
                             {"has_optimizer_state", c.adam.has_value()}}
                            .dump());
    });
}

NASTL_API void nastl_checkpoint_free(nastl_checkpoint* ckpt) { delete ckpt; }

}  // extern "C"
