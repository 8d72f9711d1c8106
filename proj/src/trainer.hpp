#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adam.hpp"
#include "checkpoint.hpp"
#include "evaluate.hpp"
#include "replay.hpp"
#include "runlog.hpp"

namespace nastl {

struct TrainConfig {
    int64_t total_steps = 200000;
    int batch_size = 256;
    int n_step = 3;
    double discount = 0.99;
    int64_t target_sync_interval = 8192;
    int workers = 4;
    int vector_width = 8;
    int publish_interval = 100;
    int64_t eval_interval = 0;  // 0 means total_steps / 100
    int eval_episodes = 64;
    // Collected environment steps per learner update.
    int steps_per_update = 32;
    AdamHyper adam;
    double grad_clip = kGradClipNorm;
    ReplayConfig replay;
    int episode_cap = 50;
    int pad_nodes = 8;
    int max_candidates = 50;
    std::optional<ShapingConfig> shaping;
    // Per-worker epsilon_i = base^(1 + spread * i / (W - 1)).
    double epsilon_base = 0.4;
    double epsilon_spread = 7.0;
    NetConfig net;  // input_dim is derived from the encoder
    uint64_t seed = 0;
    bool deterministic = true;
    int log_interval = 0;  // env steps between train events; 0 means eval_interval
    // Extra step marks at which a checkpoint is written (fine-tune snapshots).
    std::vector<int64_t> checkpoint_at;

    // Desk preset: 2e5 steps, 4 workers x width 8 (the default).
    static TrainConfig desk();
    // Full-scale preset ("paper"): 1e7 steps, 8 workers x width 32, 256-wide network.
    static TrainConfig paper();

    int64_t effective_eval_interval() const;
    int64_t effective_log_interval() const;
    double epsilon(int worker) const;
    void validate() const;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j, TrainConfig base = desk());
    std::string fingerprint() const;
};

struct TrainResult {
    Checkpoint checkpoint;
    RunLog log;
    EvalReport final_eval;
    std::filesystem::path checkpoint_path;
    int64_t env_steps = 0;   // collected, summed over workers
    int64_t updates = 0;
    int64_t trained_samples = 0;
    int64_t target_syncs = 0;
};

// Learner-side trace for tests and diagnostics, delivered on the learner thread.
struct LearnerProbe {
    enum Kind { update, sync } kind = update;
    int64_t step = 0;            // collected env steps when the event happened
    int64_t updates = 0;         // learner updates so far, this one included
    size_t replay_size = 0;
    uint64_t online = 0;         // checksum of the online parameters the update read
    uint64_t target = 0;         // checksum of the target parameters
};
using LearnerObserver = std::function<void(const LearnerProbe&)>;

EvalProtocol eval_protocol(const TrainConfig& cfg);
NetConfig resolve_net(const TrainConfig& cfg, const Benchmark& bench);

// Actor/learner loop. Writes config.json, runlog.jsonl, final.ckpt and
// eval.json to out_dir. When init is given its parameters (not its optimizer
// state) seed the online network and its lineage is extended.
TrainResult train(const TrainConfig& cfg, std::shared_ptr<const Benchmark> bench, const std::string& task,
                  const Checkpoint* init, const std::filesystem::path& out_dir,
                  const LearnerObserver* observer = nullptr);

}  // namespace nastl
