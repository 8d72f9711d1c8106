#include "environment.hpp"

#include <algorithm>
#include <numeric>

#include "errors.hpp"

namespace nastl {

void EnvConfig::validate(const SearchSpaceDescriptor& desc) const {
    require(max_candidates >= 1, ErrorKind::invalid_argument, "max_candidates must be >= 1");
    require(episode_cap >= 1, ErrorKind::invalid_argument, "episode_cap must be >= 1");
    require(pad_nodes >= desc.node_count, ErrorKind::invalid_argument,
            "pad_nodes (" + std::to_string(pad_nodes) + ") must be >= node_count (" + std::to_string(desc.node_count) + ")");
    if (shaping) {
        shaping->validate();
    }
}

ObservationEncoder::ObservationEncoder(SearchSpaceDescriptor desc, int pad_nodes, int max_candidates)
    : desc_(std::move(desc)), pad_nodes_(pad_nodes), max_candidates_(max_candidates) {
    require(pad_nodes_ >= desc_.node_count, ErrorKind::invalid_argument, "pad_nodes smaller than node_count");
    pair_index_.assign(static_cast<size_t>(pad_nodes_) * pad_nodes_, -1);
    int k = 0;
    for (int i = 0; i < pad_nodes_; ++i) {
        for (int j = i + 1; j < pad_nodes_; ++j) {
            pair_index_[i * pad_nodes_ + j] = k++;
        }
    }
    pair_count_ = k;
    input_dim_ = pad_nodes_ * pad_nodes_ + pair_count_ * (desc_.op_count() + 1) + 1;
}

void ObservationEncoder::encode_token(const CellArch& arch, int offset, bool is_current, std::span<float> out) const {
    std::fill(out.begin(), out.end(), 0.0f);
    const int classes = desc_.op_count() + 1;
    float* adj = out.data();
    float* ops = out.data() + pad_nodes_ * pad_nodes_;
    for (int p = 0; p < pair_count_; ++p) {
        ops[p * classes + desc_.op_count()] = 1.0f;
    }
    for (int e = 0; e < desc_.edge_count(); ++e) {
        const int s = desc_.edges[e].first + offset;
        const int d = desc_.edges[e].second + offset;
        adj[s * pad_nodes_ + d] = 1.0f;
        const int p = pair_index_[s * pad_nodes_ + d];
        ops[p * classes + desc_.op_count()] = 0.0f;
        ops[p * classes + arch.ops[e]] = 1.0f;
    }
    out[input_dim_ - 1] = is_current ? 1.0f : 0.0f;
}

ObservationEncoder::Decoded ObservationEncoder::decode_token(std::span<const float> token) const {
    require(static_cast<int>(token.size()) == input_dim_, ErrorKind::contract, "token has the wrong width");
    Decoded d;
    d.offset = -1;
    // the first nonzero row belongs to the smallest source node
    int min_src = desc_.node_count;
    for (const auto& e : desc_.edges) {
        min_src = std::min(min_src, e.first);
    }
    for (int r = 0; r < pad_nodes_; ++r) {
        bool any = false;
        for (int c = 0; c < pad_nodes_; ++c) {
            any = any || token[r * pad_nodes_ + c] != 0.0f;
        }
        if (any) {
            d.offset = r - min_src;
            break;
        }
    }
    require(d.offset >= 0, ErrorKind::contract, "token has an empty adjacency block");
    const int classes = desc_.op_count() + 1;
    const float* ops = token.data() + pad_nodes_ * pad_nodes_;
    d.arch.ops.resize(desc_.edge_count());
    for (int e = 0; e < desc_.edge_count(); ++e) {
        const int p = pair_index_[(desc_.edges[e].first + d.offset) * pad_nodes_ + desc_.edges[e].second + d.offset];
        int op = -1;
        for (int c = 0; c < desc_.op_count(); ++c) {
            if (ops[p * classes + c] != 0.0f) op = c;
        }
        require(op >= 0, ErrorKind::contract, "token edge has no operation");
        d.arch.ops[e] = op;
    }
    d.is_current = token[input_dim_ - 1] != 0.0f;
    return d;
}

Observation ObservationEncoder::make_observation(const CellArch& current, std::vector<CellArch> nbrs, Rng& pad_rng) const {
    require(static_cast<int>(nbrs.size()) <= max_candidates_, ErrorKind::contract, "more neighbors than max_candidates");
    Observation o;
    o.candidates.reserve(nbrs.size() + 1);
    o.candidates.push_back(current);
    for (auto& n : nbrs) {
        o.candidates.push_back(std::move(n));
    }
    o.offsets.resize(o.candidates.size());
    for (auto& off : o.offsets) {
        off = static_cast<int>(uniform_index(pad_rng, static_cast<uint64_t>(max_offset() + 1)));
    }
    o.mask.assign(slots(), 0);
    std::fill(o.mask.begin(), o.mask.begin() + static_cast<long>(o.candidates.size()), 1);
    return o;
}

ObsBatch ObservationEncoder::batch(std::span<const Observation* const> obs) const {
    ObsBatch b;
    b.batch = static_cast<int>(obs.size());
    b.slots = slots();
    b.input_dim = input_dim_;
    b.features.assign(static_cast<size_t>(b.batch) * b.slots * b.input_dim, 0.0f);
    b.mask.assign(static_cast<size_t>(b.batch) * b.slots, 0);
    for (int i = 0; i < b.batch; ++i) {
        const Observation& o = *obs[i];
        for (int s = 0; s < o.valid_count(); ++s) {
            float* dst = b.features.data() + (static_cast<size_t>(i) * b.slots + s) * b.input_dim;
            encode_token(o.candidates[s], o.offsets[s], s == 0, {dst, static_cast<size_t>(b.input_dim)});
        }
        std::copy(o.mask.begin(), o.mask.end(), b.mask.begin() + static_cast<long>(i) * b.slots);
    }
    return b;
}

ObsBatch ObservationEncoder::batch(const Observation& obs) const {
    const Observation* p = &obs;
    return batch(std::span<const Observation* const>(&p, 1));
}

Environment::Environment(std::shared_ptr<const Benchmark> bench, EnvConfig cfg)
    : bench_(std::move(bench)),
      cfg_(std::move(cfg)),
      task_(bench_->task_index(cfg_.task)),
      encoder_(bench_->descriptor(), cfg_.pad_nodes, cfg_.max_candidates),
      start_rng_(derive_seed(cfg_.seed, "env.start")),
      pad_rng_(derive_seed(cfg_.seed, "env.pad")),
      subsample_rng_(derive_seed(cfg_.seed, "env.subsample")) {
    cfg_.validate(bench_->descriptor());
}

double Environment::reward_of(const CellArch& arch) const {
    const double r = bench_->normalized_metric(arch, task_, cfg_.split);
    return cfg_.shaping ? gamma_transform(r, cfg_.shaping->exponent) : r;
}

Observation Environment::observe() {
    auto nbrs = neighbors(current_, bench_->descriptor());
    if (static_cast<int>(nbrs.size()) > cfg_.max_candidates) {
        // seeded uniform subsample, original order kept
        std::vector<size_t> idx(nbrs.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (size_t i = 0; i < static_cast<size_t>(cfg_.max_candidates); ++i) {
            const size_t j = i + uniform_index(subsample_rng_, idx.size() - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(cfg_.max_candidates);
        std::sort(idx.begin(), idx.end());
        std::vector<CellArch> kept;
        kept.reserve(idx.size());
        for (size_t i : idx) {
            kept.push_back(std::move(nbrs[i]));
        }
        nbrs = std::move(kept);
    }
    return encoder_.make_observation(current_, std::move(nbrs), pad_rng_);
}

Observation Environment::reset() {
    current_ = random_arch(start_rng_, bench_->descriptor());
    steps_ = 0;
    done_ = false;
    obs_ = observe();
    return obs_;
}

StepResult Environment::step(int action) {
    require(!done_, ErrorKind::contract, "step() on a finished episode; call reset() first");
    require(action >= 0 && action < encoder_.slots() && obs_.mask[action], ErrorKind::contract,
            "action " + std::to_string(action) + " is masked out");
    ++steps_;
    StepResult res;
    if (action == 0) {
        res.terminal = true;
    } else {
        current_ = obs_.candidates[action];
        if (steps_ >= cfg_.episode_cap) {
            res.terminal = true;
            res.timeout = true;
        }
    }
    res.reward = reward_of(current_);
    obs_ = observe();
    res.obs = obs_;
    done_ = res.terminal;
    return res;
}

VectorEnv::VectorEnv(std::shared_ptr<const Benchmark> bench, const EnvConfig& base, const std::vector<uint64_t>& seeds) {
    envs_.reserve(seeds.size());
    for (uint64_t s : seeds) {
        EnvConfig c = base;
        c.seed = s;
        envs_.emplace_back(bench, std::move(c));
    }
}

std::vector<Observation> VectorEnv::reset() {
    std::vector<Observation> out;
    out.reserve(envs_.size());
    for (auto& e : envs_) {
        out.push_back(e.reset());
    }
    return out;
}

VectorStep VectorEnv::step(std::span<const int> actions) {
    require(actions.size() == envs_.size(), ErrorKind::contract,
            "vector_step: " + std::to_string(actions.size()) + " actions for " + std::to_string(envs_.size()) + " envs");
    VectorStep out;
    const size_t n = envs_.size();
    out.obs.resize(n);
    out.final_obs.resize(n);
    out.rewards.resize(n);
    out.terminal.resize(n);
    out.timeout.resize(n);
    for (size_t i = 0; i < n; ++i) {
        StepResult r;
        try {
            r = envs_[i].step(actions[i]);
        } catch (const Error& e) {
            throw Error(e.kind(), "sub-environment " + std::to_string(i) + ": " + e.what());
        }
        out.rewards[i] = r.reward;
        out.terminal[i] = r.terminal;
        out.timeout[i] = r.timeout;
        out.final_obs[i] = std::move(r.obs);
        out.obs[i] = r.terminal ? envs_[i].reset() : out.final_obs[i];
    }
    return out;
}

}  // namespace nastl
