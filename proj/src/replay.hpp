#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "nstep.hpp"
#include "rng.hpp"

namespace nastl {

struct ReplayConfig {
    size_t capacity = 25000;
    int shards = 4;
    double alpha = 0.6;
    double beta = 0.4;
    double priority_epsilon = 1e-6;

    void validate() const;
};

// Binary sum tree over per-slot masses. Internal nodes are rebuilt exactly
// from the leaves every `rebuild_interval` point updates to shed drift.
class SumTree {
public:
    explicit SumTree(size_t capacity, size_t rebuild_interval = 0);

    void set(size_t slot, double mass);
    double get(size_t slot) const { return nodes_[leaf0_ + slot]; }
    double total() const { return nodes_[1]; }
    // Slot whose cumulative range contains u, for u in [0, total()).
    size_t find(double u) const;
    void rebuild();
    // Largest relative deviation of an internal node from the sum of its children.
    double max_relative_error() const;
    size_t capacity() const { return capacity_; }

private:
    size_t capacity_;
    size_t leaf0_;
    size_t rebuild_interval_;
    size_t updates_ = 0;
    std::vector<double> nodes_;
};

struct SlotId {
    int shard = 0;
    uint32_t slot = 0;
    uint64_t generation = 0;
};

class ReplayShard {
public:
    ReplayShard(size_t capacity, double alpha, double priority_epsilon);

    // Ring insert; priority must be > 0. Returns the slot written.
    SlotId insert(NStepSample sample, double priority, int shard_index);
    void update(const SlotId& id, double td_error);

    size_t size() const;
    double total_mass() const;

private:
    friend class PrioritizedReplay;

    mutable std::mutex mu_;
    size_t capacity_;
    double alpha_;
    double eps_;
    size_t next_ = 0;
    size_t size_ = 0;
    std::vector<NStepSample> data_;
    std::vector<uint64_t> generation_;
    SumTree tree_;
};

struct SampledBatch {
    std::vector<NStepSample> samples;
    std::vector<SlotId> ids;
    std::vector<double> weights;        // normalized so max is 1
    std::vector<double> probabilities;  // P(i) under the whole buffer
};

class PrioritizedReplay {
public:
    explicit PrioritizedReplay(ReplayConfig cfg);

    SlotId insert(int shard, NStepSample sample, double priority);
    // std::nullopt while fewer than n samples are stored.
    std::optional<SampledBatch> sample(size_t n, double beta, Rng& rng) const;
    void update_priorities(std::span<const SlotId> ids, std::span<const double> td_errors);

    size_t size() const;
    int shard_count() const { return static_cast<int>(shards_.size()); }
    const ReplayConfig& config() const { return cfg_; }
    const ReplayShard& shard(int i) const { return *shards_[i]; }
    double total_mass() const;

private:
    ReplayConfig cfg_;
    std::vector<std::unique_ptr<ReplayShard>> shards_;
};

}  // namespace nastl
