#include "replay.hpp"

#include <cmath>

#include "errors.hpp"

namespace nastl {

void ReplayConfig::validate() const {
    require(shards >= 1, ErrorKind::invalid_argument, "replay needs at least one shard");
    require(capacity >= static_cast<size_t>(shards) && capacity % static_cast<size_t>(shards) == 0,
            ErrorKind::invalid_argument, "replay capacity must be a positive multiple of the shard count");
    require(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0, ErrorKind::invalid_argument,
            "replay alpha and beta must be in [0, 1]");
    require(priority_epsilon > 0.0, ErrorKind::invalid_argument, "priority_epsilon must be positive");
}

SumTree::SumTree(size_t capacity, size_t rebuild_interval)
    : capacity_(capacity), rebuild_interval_(rebuild_interval == 0 ? capacity : rebuild_interval) {
    require(capacity >= 1, ErrorKind::invalid_argument, "sum tree capacity must be positive");
    leaf0_ = 1;
    while (leaf0_ < capacity) {
        leaf0_ <<= 1;
    }
    nodes_.assign(2 * leaf0_, 0.0);
}

void SumTree::set(size_t slot, double mass) {
    size_t i = leaf0_ + slot;
    nodes_[i] = mass;
    for (i >>= 1; i >= 1; i >>= 1) {
        nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
    }
    if (++updates_ % rebuild_interval_ == 0) {
        rebuild();
    }
}

void SumTree::rebuild() {
    for (size_t i = leaf0_ - 1; i >= 1; --i) {
        nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
    }
}

size_t SumTree::find(double u) const {
    size_t i = 1;
    while (i < leaf0_) {
        const double left = nodes_[2 * i];
        // descend right only when the right subtree can absorb u
        if (u < left || nodes_[2 * i + 1] <= 0.0) {
            i = 2 * i;
        } else {
            u -= left;
            i = 2 * i + 1;
        }
    }
    size_t slot = i - leaf0_;
    // rounding can leave us on an empty leaf at the right edge
    while (slot > 0 && (slot >= capacity_ || nodes_[leaf0_ + slot] <= 0.0)) {
        --slot;
    }
    return slot;
}

double SumTree::max_relative_error() const {
    double worst = 0.0;
    for (size_t i = 1; i < leaf0_; ++i) {
        const double s = nodes_[2 * i] + nodes_[2 * i + 1];
        const double scale = std::max(std::abs(s), 1e-300);
        worst = std::max(worst, std::abs(nodes_[i] - s) / scale);
    }
    return worst;
}

ReplayShard::ReplayShard(size_t capacity, double alpha, double priority_epsilon)
    : capacity_(capacity), alpha_(alpha), eps_(priority_epsilon), data_(capacity), generation_(capacity, 0),
      tree_(capacity) {}

SlotId ReplayShard::insert(NStepSample sample, double priority, int shard_index) {
    require(priority > 0.0 && std::isfinite(priority), ErrorKind::contract,
            "replay insert: priority must be positive and finite");
    std::lock_guard lock(mu_);
    const size_t slot = next_;
    data_[slot] = std::move(sample);
    ++generation_[slot];
    tree_.set(slot, std::pow(priority, alpha_));
    next_ = (next_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    return {shard_index, static_cast<uint32_t>(slot), generation_[slot]};
}

void ReplayShard::update(const SlotId& id, double td_error) {
    std::lock_guard lock(mu_);
    if (id.slot >= capacity_ || generation_[id.slot] != id.generation) {
        return;  // overwritten since it was sampled
    }
    tree_.set(id.slot, std::pow(std::abs(td_error) + eps_, alpha_));
}

size_t ReplayShard::size() const {
    std::lock_guard lock(mu_);
    return size_;
}

double ReplayShard::total_mass() const {
    std::lock_guard lock(mu_);
    return tree_.total();
}

PrioritizedReplay::PrioritizedReplay(ReplayConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const size_t per = cfg_.capacity / static_cast<size_t>(cfg_.shards);
    for (int i = 0; i < cfg_.shards; ++i) {
        shards_.push_back(std::make_unique<ReplayShard>(per, cfg_.alpha, cfg_.priority_epsilon));
    }
}

SlotId PrioritizedReplay::insert(int shard, NStepSample sample, double priority) {
    require(shard >= 0 && shard < shard_count(), ErrorKind::contract, "replay insert: shard index out of range");
    return shards_[shard]->insert(std::move(sample), priority, shard);
}

size_t PrioritizedReplay::size() const {
    size_t n = 0;
    for (const auto& s : shards_) {
        n += s->size();
    }
    return n;
}

double PrioritizedReplay::total_mass() const {
    double m = 0.0;
    for (const auto& s : shards_) {
        m += s->total_mass();
    }
    return m;
}

std::optional<SampledBatch> PrioritizedReplay::sample(size_t n, double beta, Rng& rng) const {
    std::vector<std::unique_lock<std::mutex>> locks;
    locks.reserve(shards_.size());
    for (const auto& s : shards_) {
        locks.emplace_back(s->mu_);
    }
    size_t stored = 0;
    std::vector<double> cum(shards_.size() + 1, 0.0);
    for (size_t i = 0; i < shards_.size(); ++i) {
        stored += shards_[i]->size_;
        cum[i + 1] = cum[i] + shards_[i]->tree_.total();
    }
    if (n == 0 || stored < n) {
        return std::nullopt;
    }
    const double total = cum.back();
    SampledBatch out;
    out.samples.reserve(n);
    out.ids.reserve(n);
    out.weights.reserve(n);
    out.probabilities.reserve(n);
    const double seg = total / static_cast<double>(n);
    double max_w = 0.0;
    for (size_t k = 0; k < n; ++k) {
        // one stratum per draw over the concatenated shard masses
        double u = (static_cast<double>(k) + uniform01(rng)) * seg;
        u = std::min(u, std::nextafter(total, 0.0));
        size_t sh = 0;
        while (sh + 1 < shards_.size() && (u >= cum[sh + 1] || shards_[sh]->tree_.total() <= 0.0)) {
            ++sh;
        }
        const ReplayShard& s = *shards_[sh];
        const size_t slot = s.tree_.find(std::max(0.0, u - cum[sh]));
        const double p = s.tree_.get(slot) / total;
        const double w = beta == 0.0 ? 1.0 : std::pow(static_cast<double>(stored) * p, -beta);
        max_w = std::max(max_w, w);
        out.samples.push_back(s.data_[slot]);
        out.ids.push_back({static_cast<int>(sh), static_cast<uint32_t>(slot), s.generation_[slot]});
        out.weights.push_back(w);
        out.probabilities.push_back(p);
    }
    for (double& w : out.weights) {
        w /= max_w;
    }
    return out;
}

void PrioritizedReplay::update_priorities(std::span<const SlotId> ids, std::span<const double> td_errors) {
    require(ids.size() == td_errors.size(), ErrorKind::contract, "update_priorities: size mismatch");
    for (size_t i = 0; i < ids.size(); ++i) {
        require(ids[i].shard >= 0 && ids[i].shard < shard_count(), ErrorKind::contract, "update_priorities: bad shard");
        shards_[ids[i].shard]->update(ids[i], td_errors[i]);
    }
}

}  // namespace nastl
