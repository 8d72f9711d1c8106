#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "benchmark.hpp"
#include "rng.hpp"
#include "shaping.hpp"

namespace nastl {

struct EnvConfig {
    std::string task;
    Split split = Split::valid;
    int max_candidates = 50;
    int episode_cap = 50;
    int pad_nodes = 8;
    std::optional<ShapingConfig> shaping;
    uint64_t seed = 0;

    void validate(const SearchSpaceDescriptor& desc) const;
};

// Compact form of what the agent sees: slot 0 is the current architecture,
// slots 1..K its neighbors. Dense features are materialized on demand by
// ObservationEncoder so replay does not store 50 padded tensors per sample.
struct Observation {
    std::vector<CellArch> candidates;
    std::vector<int> offsets;     // diagonal padding offset per candidate
    std::vector<uint8_t> mask;    // max_candidates + 1 entries

    int valid_count() const { return static_cast<int>(candidates.size()); }
    bool operator==(const Observation&) const = default;
};

// Dense, mask-consistent batch in the layout the Q-network consumes.
struct ObsBatch {
    int batch = 0;
    int slots = 0;
    int input_dim = 0;
    std::vector<float> features;  // batch x slots x input_dim, masked slots zero
    std::vector<uint8_t> mask;    // batch x slots

    std::span<const float> token(int b, int s) const {
        return {features.data() + (static_cast<size_t>(b) * slots + s) * input_dim, static_cast<size_t>(input_dim)};
    }
};

class ObservationEncoder {
public:
    ObservationEncoder(SearchSpaceDescriptor desc, int pad_nodes, int max_candidates);

    // pad_nodes^2 adjacency ++ padded-pair one-hot ops (extra pad class) ++ is_current
    int input_dim() const { return input_dim_; }
    int slots() const { return max_candidates_ + 1; }
    int pad_nodes() const { return pad_nodes_; }
    int max_offset() const { return pad_nodes_ - desc_.node_count; }
    const SearchSpaceDescriptor& descriptor() const { return desc_; }

    void encode_token(const CellArch& arch, int offset, bool is_current, std::span<float> out) const;

    struct Decoded {
        CellArch arch;
        int offset = 0;
        bool is_current = false;
    };
    Decoded decode_token(std::span<const float> token) const;

    // Fresh random offsets per candidate; caller supplies the candidate list.
    Observation make_observation(const CellArch& current, std::vector<CellArch> neighbors, Rng& pad_rng) const;

    ObsBatch batch(std::span<const Observation* const> obs) const;
    ObsBatch batch(const Observation& obs) const;

private:
    SearchSpaceDescriptor desc_;
    int pad_nodes_;
    int max_candidates_;
    int pair_count_;
    int input_dim_;
    std::vector<int> pair_index_;   // pad_nodes x pad_nodes -> padded pair index or -1
};

struct StepResult {
    Observation obs;  // observation of the post-action state
    double reward = 0.0;
    bool terminal = false;
    bool timeout = false;
};

// Incremental-improvement MDP over one benchmark task. Reward at every step
// is the (optionally shaped) normalized metric of the post-action current
// architecture; action 0 keeps the current architecture and ends the episode.
class Environment {
public:
    Environment(std::shared_ptr<const Benchmark> bench, EnvConfig cfg);

    Observation reset();
    StepResult step(int action);

    const CellArch& current() const { return current_; }
    int step_count() const { return steps_; }
    bool done() const { return done_; }
    const Observation& observation() const { return obs_; }
    const ObservationEncoder& encoder() const { return encoder_; }
    const EnvConfig& config() const { return cfg_; }
    const Benchmark& benchmark() const { return *bench_; }
    TaskIndex task() const { return task_; }

    double reward_of(const CellArch& arch) const;

private:
    Observation observe();

    std::shared_ptr<const Benchmark> bench_;
    EnvConfig cfg_;
    TaskIndex task_;
    ObservationEncoder encoder_;
    Rng start_rng_;
    Rng pad_rng_;
    Rng subsample_rng_;
    CellArch current_;
    Observation obs_;
    int steps_ = 0;
    bool done_ = true;
};

struct VectorStep {
    std::vector<Observation> obs;        // next observation to act on (reset if finished)
    std::vector<Observation> final_obs;  // post-action observation; differs from obs only when finished
    std::vector<double> rewards;
    std::vector<uint8_t> terminal;
    std::vector<uint8_t> timeout;
};

class VectorEnv {
public:
    // One sub-environment per seed; each owns its randomness.
    VectorEnv(std::shared_ptr<const Benchmark> bench, const EnvConfig& base, const std::vector<uint64_t>& seeds);

    std::vector<Observation> reset();
    VectorStep step(std::span<const int> actions);

    size_t size() const { return envs_.size(); }
    Environment& at(size_t i) { return envs_[i]; }
    const Environment& at(size_t i) const { return envs_[i]; }

private:
    std::vector<Environment> envs_;
};

}  // namespace nastl
