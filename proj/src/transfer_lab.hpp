#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trainer.hpp"

namespace nastl {

enum class RegimeKind { zero_shot, fine_tune, retrain };

std::string to_string(RegimeKind k);
RegimeKind parse_regime(const std::string& s);

struct TransferRegime {
    RegimeKind kind = RegimeKind::retrain;
    int64_t target_steps = 0;

    // 0 for zero_shot, pretrain/10 for fine_tune, pretrain for retrain.
    static TransferRegime standard(RegimeKind kind, int64_t pretrain_steps);
    void validate() const;
};

struct RegimeResult {
    EvalReport report;
    RunLog log;
    std::optional<Checkpoint> checkpoint;
    std::filesystem::path checkpoint_path;
    int64_t target_steps = 0;  // environment steps consumed on the target task
    bool trained = false;
};

// Training config for a run of `steps` on the target that keeps the eval
// cadence of the full pretrain budget, so shorter runs log a prefix.
TrainConfig target_config(TrainConfig base, int64_t steps, int64_t pretrain_steps);

// A from-scratch run passes no source. When the source's last lineage task
// is the target, no second training phase runs.
RegimeResult run_regime(const Checkpoint* source, const std::string& target, const TransferRegime& regime,
                        const TrainConfig& cfg, std::shared_ptr<const Benchmark> bench,
                        const std::filesystem::path& out_dir);

struct ExperimentPlan {
    std::vector<std::string> tasks;
    std::vector<uint64_t> seeds;
    int64_t pretrain_steps = 200000;
    std::vector<RegimeKind> regimes{RegimeKind::zero_shot, RegimeKind::fine_tune, RegimeKind::retrain};
    std::filesystem::path benchmark_path;
    std::filesystem::path output_root;
    TrainConfig train = TrainConfig::desk();
    // Fine-tune cells are cut from the retrain run at the 10% mark when both
    // regimes are planned; otherwise they are trained on their own.
    bool derive_fine_tune = true;
    // When set, each run's shaping follows its training task (segmentation
    // shaped, everything else unshaped) instead of train.shaping.
    bool task_shaping_rule = true;
    int jobs = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentPlan from_json(const nlohmann::json& j);
    std::string fingerprint() const;
};

struct ManifestCell {
    uint64_t seed = 0;
    std::string source;
    std::string target;
    std::string regime;  // pretrain | zero_shot | fine_tune | retrain
    std::string status;  // complete | pending
    std::string dir;     // relative to the output root
    std::string checkpoint;
    std::string runlog;
    std::string eval;
    std::string config_fingerprint;
    std::string derived_from;  // non-empty for cut fine-tune cells

    nlohmann::json to_json() const;
    static ManifestCell from_json(const nlohmann::json& j);
};

struct Manifest {
    std::string plan_fingerprint;
    nlohmann::json plan;
    std::vector<ManifestCell> cells;

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
    static Manifest read(const std::filesystem::path& root);
    const ManifestCell* find(uint64_t seed, const std::string& source, const std::string& target,
                             const std::string& regime) const;
};

struct MatrixRunSummary {
    Manifest manifest;
    int training_runs = 0;   // training phases executed by this call
    int skipped_cells = 0;   // verified complete from a previous call
};

std::filesystem::path cell_dir(uint64_t seed, const std::string& source, const std::string& target,
                               const std::string& regime);

// Shaping the CLI and the matrix apply by default for a training task.
std::optional<ShapingConfig> default_shaping(const std::string& task);

MatrixRunSummary run_matrix(const ExperimentPlan& plan);

}  // namespace nastl
