#include "trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "errors.hpp"
#include "nstep.hpp"

namespace nastl {

namespace fs = std::filesystem;
using json = nlohmann::json;

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.net.d_model = 32;
    c.net.n_heads = 4;
    c.net.ffn_hidden = 64;
    c.net.head_hidden = 32;
    c.adam.lr = 1e-3;
    c.steps_per_update = 128;
    return c;
}

TrainConfig TrainConfig::paper() {
    TrainConfig c;
    c.total_steps = 10'000'000;
    c.workers = 8;
    c.vector_width = 32;
    c.net = NetConfig{};
    c.adam = AdamHyper{};
    c.steps_per_update = 4;
    return c;
}

int64_t TrainConfig::effective_eval_interval() const {
    return eval_interval > 0 ? eval_interval : std::max<int64_t>(1, total_steps / 100);
}

int64_t TrainConfig::effective_log_interval() const {
    return log_interval > 0 ? log_interval : effective_eval_interval();
}

double TrainConfig::epsilon(int worker) const {
    if (workers <= 1) {
        return epsilon_base;
    }
    return std::pow(epsilon_base, 1.0 + epsilon_spread * worker / (workers - 1));
}

void TrainConfig::validate() const {
    auto need = [](bool ok, const std::string& what) { require(ok, ErrorKind::invalid_argument, "train config: " + what); };
    need(total_steps >= 0, "total_steps must be >= 0");
    need(batch_size >= 1, "batch_size must be >= 1");
    need(n_step >= 1, "n_step must be >= 1");
    need(discount > 0.0 && discount <= 1.0, "discount must lie in (0, 1]");
    need(target_sync_interval > 0, "target_sync_interval must be > 0");
    need(workers >= 1, "workers must be >= 1");
    need(vector_width >= 1, "vector_width must be >= 1");
    need(publish_interval > 0, "publish_interval must be > 0");
    need(eval_interval >= 0 && log_interval >= 0, "intervals must be > 0 (0 selects the default)");
    need(eval_episodes >= 2, "eval_episodes must be >= 2");
    need(steps_per_update >= 1, "steps_per_update must be >= 1");
    need(adam.lr > 0.0, "learning rate must be > 0");
    need(grad_clip > 0.0, "grad_clip must be > 0");
    need(epsilon_base >= 0.0 && epsilon_base <= 1.0, "epsilon_base must lie in [0, 1]");
    need(static_cast<size_t>(batch_size) <= replay.capacity, "batch_size exceeds replay capacity");
    replay.validate();
    NetConfig n = net;
    n.input_dim = 1;
    n.validate();
    if (shaping) {
        shaping->validate();
    }
    for (int64_t m : checkpoint_at) {
        need(m >= 0, "checkpoint marks must be >= 0");
    }
}

json TrainConfig::to_json() const {
    json j = {{"total_steps", total_steps},
              {"batch_size", batch_size},
              {"n_step", n_step},
              {"discount", discount},
              {"target_sync_interval", target_sync_interval},
              {"workers", workers},
              {"vector_width", vector_width},
              {"publish_interval", publish_interval},
              {"eval_interval", eval_interval},
              {"eval_episodes", eval_episodes},
              {"steps_per_update", steps_per_update},
              {"learning_rate", adam.lr},
              {"adam_beta1", adam.beta1},
              {"adam_beta2", adam.beta2},
              {"adam_eps", adam.eps},
              {"grad_clip", grad_clip},
              {"replay_capacity", replay.capacity},
              {"replay_shards", replay.shards},
              {"priority_alpha", replay.alpha},
              {"priority_beta", replay.beta},
              {"priority_epsilon", replay.priority_epsilon},
              {"episode_cap", episode_cap},
              {"pad_nodes", pad_nodes},
              {"max_candidates", max_candidates},
              {"shaping_exponent", shaping ? json(shaping->exponent) : json(nullptr)},
              {"epsilon_base", epsilon_base},
              {"epsilon_spread", epsilon_spread},
              {"net", json::parse(net.to_json())},
              {"seed", seed},
              {"deterministic", deterministic},
              {"log_interval", log_interval},
              {"checkpoint_at", checkpoint_at}};
    return j;
}

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
    require(j.is_object(), ErrorKind::format, "train config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "total_steps") c.total_steps = v.get<int64_t>();
            else if (key == "batch_size") c.batch_size = v.get<int>();
            else if (key == "n_step") c.n_step = v.get<int>();
            else if (key == "discount") c.discount = v.get<double>();
            else if (key == "target_sync_interval") c.target_sync_interval = v.get<int64_t>();
            else if (key == "workers") c.workers = v.get<int>();
            else if (key == "vector_width") c.vector_width = v.get<int>();
            else if (key == "publish_interval") c.publish_interval = v.get<int>();
            else if (key == "eval_interval") c.eval_interval = v.get<int64_t>();
            else if (key == "eval_episodes") c.eval_episodes = v.get<int>();
            else if (key == "steps_per_update") c.steps_per_update = v.get<int>();
            else if (key == "learning_rate") c.adam.lr = v.get<double>();
            else if (key == "adam_beta1") c.adam.beta1 = v.get<double>();
            else if (key == "adam_beta2") c.adam.beta2 = v.get<double>();
            else if (key == "adam_eps") c.adam.eps = v.get<double>();
            else if (key == "grad_clip") c.grad_clip = v.get<double>();
            else if (key == "replay_capacity") c.replay.capacity = v.get<size_t>();
            else if (key == "replay_shards") c.replay.shards = v.get<int>();
            else if (key == "priority_alpha") c.replay.alpha = v.get<double>();
            else if (key == "priority_beta") c.replay.beta = v.get<double>();
            else if (key == "priority_epsilon") c.replay.priority_epsilon = v.get<double>();
            else if (key == "episode_cap") c.episode_cap = v.get<int>();
            else if (key == "pad_nodes") c.pad_nodes = v.get<int>();
            else if (key == "max_candidates") c.max_candidates = v.get<int>();
            else if (key == "shaping_exponent") {
                if (v.is_null()) c.shaping.reset();
                else c.shaping = ShapingConfig{v.get<double>()};
            } else if (key == "epsilon_base") c.epsilon_base = v.get<double>();
            else if (key == "epsilon_spread") c.epsilon_spread = v.get<double>();
            else if (key == "net") {
                // Partial objects override the preset; input_dim is derived.
                for (const auto& [nk, nv] : v.items()) {
                    if (nk == "input_dim") continue;
                    else if (nk == "d_model") c.net.d_model = nv.get<int>();
                    else if (nk == "embed_layers") c.net.embed_layers = nv.get<int>();
                    else if (nk == "n_transformer_layers") c.net.n_transformer_layers = nv.get<int>();
                    else if (nk == "n_heads") c.net.n_heads = nv.get<int>();
                    else if (nk == "ffn_hidden") c.net.ffn_hidden = nv.get<int>();
                    else if (nk == "head_layers") c.net.head_layers = nv.get<int>();
                    else if (nk == "head_hidden") c.net.head_hidden = nv.get<int>();
                    else fail(ErrorKind::invalid_argument, "train config: unknown net key '" + nk + "'");
                }
            }
            else if (key == "seed") c.seed = v.get<uint64_t>();
            else if (key == "deterministic") c.deterministic = v.get<bool>();
            else if (key == "log_interval") c.log_interval = v.get<int>();
            else if (key == "checkpoint_at") c.checkpoint_at = v.get<std::vector<int64_t>>();
            else fail(ErrorKind::invalid_argument, "train config: unknown key '" + key + "'");
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("train config: ") + e.what());
    }
    return c;
}

std::string TrainConfig::fingerprint() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

EvalProtocol eval_protocol(const TrainConfig& cfg) {
    EvalProtocol p;
    p.episodes = cfg.eval_episodes;
    p.episode_cap = cfg.episode_cap;
    p.pad_nodes = cfg.pad_nodes;
    p.max_candidates = cfg.max_candidates;
    p.seed = derive_seed(cfg.seed, "eval");
    return p;
}

NetConfig resolve_net(const TrainConfig& cfg, const Benchmark& bench) {
    NetConfig n = cfg.net;
    n.input_dim = ObservationEncoder(bench.descriptor(), cfg.pad_nodes, cfg.max_candidates).input_dim();
    n.validate();
    return n;
}

namespace {

using Clock = std::chrono::steady_clock;

bool all_finite(std::span<const float> xs) {
    for (float x : xs) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

double masked_max(const Mat<float>& q, Eigen::Index row) {
    return static_cast<double>(q.row(row).maxCoeff());
}

// One actor: a vector of environments acting epsilon-greedily on a
// parameter snapshot and emitting n-step samples with initial priorities.
class Worker {
public:
    Worker(const TrainConfig& cfg, int index, std::shared_ptr<const Benchmark> bench, const std::string& task,
           std::shared_ptr<const Params> snapshot)
        : cfg_(cfg),
          index_(index),
          venv_(bench, env_config(cfg, task, index), env_seeds(cfg, index)),
          encoder_(venv_.at(0).encoder()),
          epsilon_(cfg.epsilon(index)),
          rng_(derive_seed(cfg.seed, "worker.explore", static_cast<uint64_t>(index))),
          snapshot_(std::move(snapshot)) {
        for (size_t i = 0; i < venv_.size(); ++i) {
            acc_.emplace_back(cfg.n_step, cfg.discount);
        }
        t_.assign(venv_.size(), 0);
        obs_ = venv_.reset();
        q_ = q_values(obs_);
    }

    void publish(std::shared_ptr<const Params> p) { snapshot_ = std::move(p); }
    int width() const { return static_cast<int>(venv_.size()); }
    int index() const { return index_; }

    struct Emitted {
        NStepSample sample;
        double priority = 0.0;
    };

    std::vector<Emitted> step() {
        const size_t n = venv_.size();
        std::vector<int> actions(n);
        std::vector<double> q_taken(n);
        for (size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            if (uniform01(rng_) < epsilon_) {
                actions[i] = static_cast<int>(uniform_index(rng_, static_cast<uint64_t>(obs_[i].valid_count())));
            } else {
                actions[i] = greedy_action(q_, row);
            }
            q_taken[i] = q_(row, actions[i]);
        }
        VectorStep vs = venv_.step(actions);

        // Q under the snapshot for next observations and, where an episode
        // timed out, for the final observation it bootstraps from.
        std::vector<const Observation*> ptrs;
        std::vector<int> final_row(n, -1);
        for (size_t i = 0; i < n; ++i) {
            ptrs.push_back(&vs.obs[i]);
        }
        for (size_t i = 0; i < n; ++i) {
            if (vs.timeout[i]) {
                final_row[i] = static_cast<int>(ptrs.size());
                ptrs.push_back(&vs.final_obs[i]);
            }
        }
        const Mat<float> qn = forward(*snapshot_, encoder_.batch(ptrs)).q;

        std::vector<Emitted> out;
        for (size_t i = 0; i < n; ++i) {
            const bool ended = vs.terminal[i] || vs.timeout[i];
            Transition tr;
            tr.obs = std::move(obs_[i]);
            tr.action = actions[i];
            tr.reward = vs.rewards[i];
            tr.next_obs = vs.final_obs[i];
            tr.terminal = vs.terminal[i] != 0;
            tr.timeout = vs.timeout[i] != 0;
            tr.t = t_[i];
            tr.q_taken = q_taken[i];
            if (final_row[i] >= 0) {
                tr.next_max_q = masked_max(qn, final_row[i]);
            } else if (!ended) {
                tr.next_max_q = masked_max(qn, static_cast<Eigen::Index>(i));
            }
            for (auto& s : acc_[i].push(std::move(tr))) {
                const double td = worker_td_error(s, cfg_.discount);
                const double prio = std::abs(td) + cfg_.replay.priority_epsilon;
                out.push_back({std::move(s), std::isfinite(prio) ? prio : 1.0});
            }
            t_[i] = ended ? 0 : t_[i] + 1;
        }
        obs_ = std::move(vs.obs);
        q_ = qn.topRows(static_cast<Eigen::Index>(n));
        return out;
    }

private:
    static EnvConfig env_config(const TrainConfig& cfg, const std::string& task, int) {
        EnvConfig e;
        e.task = task;
        e.split = Split::valid;
        e.max_candidates = cfg.max_candidates;
        e.episode_cap = cfg.episode_cap;
        e.pad_nodes = cfg.pad_nodes;
        e.shaping = cfg.shaping;
        return e;
    }

    static std::vector<uint64_t> env_seeds(const TrainConfig& cfg, int index) {
        std::vector<uint64_t> seeds;
        for (int j = 0; j < cfg.vector_width; ++j) {
            seeds.push_back(derive_seed(derive_seed(cfg.seed, "worker.env", static_cast<uint64_t>(index)), "sub",
                                        static_cast<uint64_t>(j)));
        }
        return seeds;
    }

    Mat<float> q_values(const std::vector<Observation>& obs) const {
        std::vector<const Observation*> ptrs;
        for (const auto& o : obs) {
            ptrs.push_back(&o);
        }
        return forward(*snapshot_, encoder_.batch(ptrs)).q;
    }

    const TrainConfig& cfg_;
    int index_;
    VectorEnv venv_;
    ObservationEncoder encoder_;
    double epsilon_;
    Rng rng_;
    std::shared_ptr<const Params> snapshot_;
    std::vector<NStepAccumulator> acc_;
    std::vector<int> t_;
    std::vector<Observation> obs_;
    Mat<float> q_;
};

QFunction as_qfunction(std::shared_ptr<const Params> p, const ObservationEncoder& enc) {
    return [p = std::move(p), &enc](std::span<const Observation* const> obs) {
        return Mat<double>(forward(*p, enc.batch(obs)).q.cast<double>());
    };
}

class Runtime {
public:
    Runtime(const TrainConfig& cfg, std::shared_ptr<const Benchmark> bench, std::string task, const Checkpoint* init,
            fs::path out_dir)
        : cfg_(cfg),
          bench_(std::move(bench)),
          task_(std::move(task)),
          out_(std::move(out_dir)),
          encoder_(bench_->descriptor(), cfg.pad_nodes, cfg.max_candidates),
          replay_(cfg.replay),
          learner_rng_(derive_seed(cfg.seed, "learner.replay")),
          start_(Clock::now()) {
        cfg_.validate();
        bench_->task_index(task_);  // not_found lists the available tasks
        std::error_code ec;
        fs::create_directories(out_, ec);
        require(!ec && fs::is_directory(out_), ErrorKind::io, "cannot create output directory " + out_.string());

        const NetConfig net = resolve_net(cfg_, *bench_);
        if (init) {
            // The checkpoint's architecture is adopted wholesale; only the
            // observation width has to agree with this benchmark.
            require(init->net().input_dim == net.input_dim, ErrorKind::config_mismatch,
                    "checkpoint input_dim " + std::to_string(init->net().input_dim) + " does not match " +
                        std::to_string(net.input_dim));
            online_ = std::make_shared<const Params>(init->params);
            lineage_ = init->lineage;
        } else {
            Rng init_rng(derive_seed(cfg_.seed, "init"));
            online_ = std::make_shared<const Params>(init_params(net, init_rng));
        }
        target_ = online_;
        adam_ = AdamState::zeros(online_->data.size(), cfg_.adam);

        {
            std::ofstream f(out_ / "config.json");
            require(f.good(), ErrorKind::io, "cannot write " + (out_ / "config.json").string());
            f << cfg_.to_json().dump(2) << "\n";
        }
        log_ = RunLog(out_ / "runlog.jsonl");
        for (int64_t m : cfg_.checkpoint_at) {
            if (m <= cfg_.total_steps) {
                marks_.push_back(m);
            }
        }
        std::sort(marks_.begin(), marks_.end());
        marks_.erase(std::unique(marks_.begin(), marks_.end()), marks_.end());
    }

    void observe(const LearnerObserver* o) { observer_ = o; }

    TrainResult run() {
        json cfg_ev = cfg_.to_json();
        cfg_ev["task"] = task_;
        cfg_ev["fingerprint"] = cfg_.fingerprint();
        cfg_ev["init_lineage"] = lineage_json(lineage_);
        log_event("config", 0, std::move(cfg_ev));
        schedule(0);
        if (cfg_.total_steps > 0) {
            if (cfg_.deterministic) {
                run_deterministic();
            } else {
                run_threaded();
            }
        }
        if (last_eval_step_ != steps_) {
            emit_train(steps_);
            last_report_ = run_eval(steps_);
        }

        TrainResult res;
        res.checkpoint = make_checkpoint(true);
        res.checkpoint_path = out_ / "final.ckpt";
        save_checkpoint(res.checkpoint, res.checkpoint_path);
        log_event("checkpoint", steps_, {{"path", "final.ckpt"}, {"trained_steps", res.checkpoint.trained_steps}});
        {
            std::ofstream f(out_ / "eval.json");
            f << last_report_.to_json().dump(2) << "\n";
        }
        res.final_eval = last_report_;
        res.log = log_;
        res.env_steps = steps_;
        res.updates = updates_;
        res.trained_samples = updates_ * cfg_.batch_size;
        res.target_syncs = syncs_;
        return res;
    }

private:
    static json lineage_json(const std::vector<LineageEntry>& l) {
        json a = json::array();
        for (const auto& e : l) {
            a.push_back({{"task", e.task}, {"steps", e.steps}});
        }
        return a;
    }

    double walltime() {
        const double w = std::chrono::duration<double>(Clock::now() - start_).count();
        last_wall_ = std::max(last_wall_, w);
        return last_wall_;
    }

    void log_event(std::string type, int64_t step, json fields) {
        RunEvent ev;
        ev.type = std::move(type);
        ev.step = step;
        ev.walltime_s = walltime();
        ev.fields = std::move(fields);
        log_.append(std::move(ev));
    }

    Checkpoint make_checkpoint(bool final) const {
        Checkpoint c;
        c.params = *online_;
        c.adam = adam_;
        c.trained_steps = steps_;
        c.lineage = lineage_;
        if (final || steps_ > 0) {
            c.lineage.push_back({task_, steps_});
        }
        c.rng_state = rng_state(learner_rng_);
        c.fingerprint = cfg_.fingerprint();
        return c;
    }

    // First log/eval/checkpoint boundary after step.
    int64_t next_boundary(int64_t step) const {
        const int64_t li = cfg_.effective_log_interval();
        const int64_t ei = cfg_.effective_eval_interval();
        int64_t b = std::min((step / li + 1) * li, (step / ei + 1) * ei);
        for (size_t i = mark_next_; i < marks_.size(); ++i) {
            if (marks_[i] > step) {
                b = std::min(b, marks_[i]);
                break;
            }
        }
        return std::min(b, cfg_.total_steps);
    }

    // Train/eval/checkpoint events due at this step, in that order.
    void schedule(int64_t step) {
        const int64_t li = cfg_.effective_log_interval();
        const int64_t ei = cfg_.effective_eval_interval();
        if (step == 0 || step / li > (step - round_steps_) / li) {
            if (step > 0) {
                emit_train(step);
            }
        }
        if (step == 0 || step / ei > (step - round_steps_) / ei) {
            last_report_ = run_eval(step);
        }
        while (mark_next_ < marks_.size() && marks_[mark_next_] <= step) {
            const int64_t m = marks_[mark_next_++];
            if (m == 0 && step > 0) {
                continue;
            }
            const std::string name = "step_" + std::to_string(step) + ".ckpt";
            fs::create_directories(out_ / "checkpoints");
            save_checkpoint(make_checkpoint(false), out_ / "checkpoints" / name);
            log_event("checkpoint", step, {{"path", "checkpoints/" + name}, {"mark", m}});
        }
    }

    void emit_train(int64_t step) {
        const double n = static_cast<double>(window_updates_);
        json f = {{"loss", n > 0 ? json(window_loss_ / n) : json(nullptr)},
                  {"grad_norm", n > 0 ? json(window_norm_ / n) : json(nullptr)},
                  {"replay_size", replay_.size()},
                  {"updates", updates_},
                  {"trained_samples", updates_ * cfg_.batch_size},
                  {"collected_steps", step},
                  {"target_syncs", syncs_}};
        log_event("train", step, std::move(f));
        window_loss_ = window_norm_ = 0.0;
        window_updates_ = 0;
    }

    EvalReport run_eval(int64_t step) {
        EvalReport rep = evaluate(online_, bench_, task_, eval_protocol(cfg_));
        log_event("eval", step,
                  {{"mean", rep.mean},
                   {"std", rep.std},
                   {"ci_low", rep.ci_low},
                   {"ci_high", rep.ci_high},
                   {"values", rep.values}});
        last_eval_step_ = step;
        return rep;
    }

    void numeric_fault(const std::string& what) {
        const fs::path p = out_ / "diagnostic.ckpt";
        try {
            save_checkpoint(make_checkpoint(false), p);
        } catch (const std::exception&) {
        }
        fail(ErrorKind::numeric, what + " at update " + std::to_string(updates_) + "; diagnostic checkpoint " +
                                     p.string());
    }

    // One learner step on an already sampled batch.
    void learn(const SampledBatch& batch) {
        std::vector<const NStepSample*> sp;
        std::vector<const Observation*> obs;
        std::vector<int> actions;
        for (const auto& s : batch.samples) {
            sp.push_back(&s);
            obs.push_back(&s.obs);
            actions.push_back(s.action);
        }
        if (observer_ && *observer_) {
            (*observer_)({LearnerProbe::update, steps_, updates_ + 1, replay_.size(), online_->checksum(),
                          target_->checksum()});
        }
        const auto y = compute_targets(as_qfunction(online_, encoder_), as_qfunction(target_, encoder_), sp,
                                       cfg_.discount);
        LossResult<float> res;
        try {
            res = loss_and_grads(*online_, encoder_.batch(obs), actions, y, batch.weights);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::numeric) {
                numeric_fault(e.what());
            }
            throw;
        }
        if (!std::isfinite(res.loss) || !all_finite(res.grads)) {
            numeric_fault("non-finite loss or gradient");
        }
        const double norm = clip_global_norm(std::span<float>(res.grads), cfg_.grad_clip);
        auto next = std::make_shared<Params>(*online_);
        adam_step(next->data, res.grads, adam_);
        if (!all_finite(next->data)) {
            numeric_fault("non-finite parameters after optimizer step");
        }
        online_ = std::move(next);
        replay_.update_priorities(batch.ids, res.td_errors);
        ++updates_;
        window_loss_ += res.loss;
        window_norm_ += norm;
        ++window_updates_;
    }

    void maybe_sync(int64_t step) {
        const int64_t due = step / cfg_.target_sync_interval;
        if (due > syncs_) {
            target_ = online_;
            syncs_ = due;
            if (observer_ && *observer_) {
                (*observer_)({LearnerProbe::sync, step, updates_, replay_.size(), online_->checksum(),
                              target_->checksum()});
            }
        }
    }

    void run_deterministic() {
        std::vector<std::unique_ptr<Worker>> workers;
        for (int w = 0; w < cfg_.workers; ++w) {
            workers.push_back(std::make_unique<Worker>(cfg_, w, bench_, task_, online_));
        }
        std::vector<int> next_shard(workers.size(), 0);
        int64_t credit = 0;
        int64_t since_publish = 0;
        while (steps_ < cfg_.total_steps) {
            round_steps_ = 0;
            std::vector<std::vector<Worker::Emitted>> pending(workers.size());
            for (size_t w = 0; w < workers.size() && steps_ + round_steps_ < cfg_.total_steps; ++w) {
                pending[w] = workers[w]->step();
                round_steps_ += workers[w]->width();
            }
            // Shards take pushes in worker order.
            for (size_t w = 0; w < workers.size(); ++w) {
                for (auto& e : pending[w]) {
                    replay_.insert(next_shard[w], std::move(e.sample), e.priority);
                    next_shard[w] = (next_shard[w] + 1) % replay_.shard_count();
                }
            }
            steps_ += round_steps_;
            if (replay_.size() >= static_cast<size_t>(cfg_.batch_size)) {
                credit += round_steps_;
            }
            while (credit >= cfg_.steps_per_update) {
                credit -= cfg_.steps_per_update;
                auto batch = replay_.sample(static_cast<size_t>(cfg_.batch_size), cfg_.replay.beta, learner_rng_);
                learn(*batch);
                if (++since_publish >= cfg_.publish_interval) {
                    since_publish = 0;
                    for (auto& w : workers) {
                        w->publish(online_);
                    }
                }
            }
            maybe_sync(steps_);
            schedule(steps_);
        }
    }

    // Workers run on their own threads and talk to the learner only through
    // the replay shards (sample pushes) and a published-parameter slot.
    void run_threaded() {
        std::mutex pub_mu;
        std::shared_ptr<const Params> published = online_;
        std::atomic<int64_t> claimed{0};
        std::atomic<int64_t> gate{next_boundary(0)};
        std::atomic<int64_t> collected{0};
        std::atomic<int> finished{0};
        std::exception_ptr worker_error;
        std::mutex err_mu;

        std::vector<std::thread> threads;
        for (int w = 0; w < cfg_.workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    Worker worker(cfg_, w, bench_, task_, online_);
                    int shard = w % replay_.shard_count();
                    while (true) {
                        int64_t c = claimed.load();
                        if (c >= cfg_.total_steps) {
                            break;
                        }
                        // hold at the next scheduled boundary until the learner has logged it
                        if (c >= gate.load()) {
                            std::this_thread::sleep_for(std::chrono::microseconds(100));
                            continue;
                        }
                        if (!claimed.compare_exchange_weak(c, c + worker.width())) {
                            continue;
                        }
                        {
                            std::lock_guard lk(pub_mu);
                            worker.publish(published);
                        }
                        for (auto& e : worker.step()) {
                            replay_.insert(shard, std::move(e.sample), e.priority);
                            shard = (shard + 1) % replay_.shard_count();
                        }
                        collected.fetch_add(worker.width());
                    }
                } catch (...) {
                    std::lock_guard lk(err_mu);
                    if (!worker_error) {
                        worker_error = std::current_exception();
                    }
                }
                finished.fetch_add(1);
            });
        }

        int64_t since_publish = 0;
        int64_t seen = 0;
        int64_t ready_from = -1;
        auto drain = [&] {
            const int64_t now = collected.load();
            if (ready_from < 0 && replay_.size() >= static_cast<size_t>(cfg_.batch_size)) {
                ready_from = now;
            }
            bool worked = false;
            if (ready_from >= 0 && (now - ready_from) / cfg_.steps_per_update > updates_) {
                auto batch = replay_.sample(static_cast<size_t>(cfg_.batch_size), cfg_.replay.beta, learner_rng_);
                if (batch) {
                    learn(*batch);
                    worked = true;
                    if (++since_publish >= cfg_.publish_interval) {
                        since_publish = 0;
                        std::lock_guard lk(pub_mu);
                        published = online_;
                    }
                }
            }
            if (now > seen) {
                round_steps_ = now - seen;
                seen = now;
                steps_ = now;
                maybe_sync(steps_);
                schedule(steps_);
                gate.store(next_boundary(steps_));
            }
            return worked;
        };
        try {
            while (finished.load() < cfg_.workers) {
                if (!drain()) {
                    std::this_thread::sleep_for(std::chrono::microseconds(200));
                }
            }
            while (drain()) {
            }
        } catch (...) {
            claimed.store(cfg_.total_steps + 1);
            for (auto& t : threads) {
                t.join();
            }
            throw;
        }
        for (auto& t : threads) {
            t.join();
        }
        if (worker_error) {
            std::rethrow_exception(worker_error);
        }
    }

    TrainConfig cfg_;
    std::shared_ptr<const Benchmark> bench_;
    std::string task_;
    fs::path out_;
    ObservationEncoder encoder_;
    PrioritizedReplay replay_;
    Rng learner_rng_;
    Clock::time_point start_;
    double last_wall_ = 0.0;

    std::shared_ptr<const Params> online_;
    std::shared_ptr<const Params> target_;
    AdamState adam_;
    std::vector<LineageEntry> lineage_;
    RunLog log_;
    EvalReport last_report_;

    int64_t steps_ = 0;
    int64_t round_steps_ = 0;
    int64_t updates_ = 0;
    int64_t syncs_ = 0;
    const LearnerObserver* observer_ = nullptr;
    int64_t last_eval_step_ = -1;
    std::vector<int64_t> marks_;
    size_t mark_next_ = 0;
    double window_loss_ = 0.0;
    double window_norm_ = 0.0;
    int64_t window_updates_ = 0;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, std::shared_ptr<const Benchmark> bench, const std::string& task,
                  const Checkpoint* init, const fs::path& out_dir, const LearnerObserver* observer) {
    require(bench != nullptr, ErrorKind::invalid_argument, "train: benchmark is null");
    Runtime rt(cfg, std::move(bench), task, init, out_dir);
    rt.observe(observer);
    return rt.run();
}

}  // namespace nastl
