#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "environment.hpp"
#include "rng.hpp"

namespace nastl {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Parameter and gradient storage. Eigen's vectorized kernels pick their
// reduction order from the base address alignment, so a fixed alignment keeps
// results bit-identical from one allocation to the next.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

struct NetConfig {
    int input_dim = 0;
    int d_model = 256;
    int embed_layers = 3;
    int n_transformer_layers = 2;
    int n_heads = 4;
    int ffn_hidden = 1024;
    int head_layers = 3;
    int head_hidden = 256;

    void validate() const;
    std::string to_json() const;
    static NetConfig from_json(const std::string& text);

    bool operator==(const NetConfig&) const = default;
};

struct TensorSpec {
    std::string name;
    int rows = 0;
    int cols = 0;
    size_t offset = 0;

    size_t size() const { return static_cast<size_t>(rows) * cols; }
};

struct LinearIdx {
    int w = -1;
    int b = -1;
};

struct BlockIdx {
    int ln1_g = -1, ln1_b = -1;
    LinearIdx q, k, v, o;
    int ln2_g = -1, ln2_b = -1;
    LinearIdx ff1, ff2;
};

// Parameter arrays in declaration order: embedding stack, transformer
// blocks, advantage head, value head. Linear weights are [in x out].
struct ParamLayout {
    std::vector<TensorSpec> tensors;
    size_t total = 0;
    std::vector<LinearIdx> embed;
    std::vector<BlockIdx> blocks;
    std::vector<LinearIdx> adv;
    std::vector<LinearIdx> val;

    static std::shared_ptr<const ParamLayout> build(const NetConfig& cfg);
};

template <typename T>
struct NetworkParams {
    NetConfig cfg;
    std::shared_ptr<const ParamLayout> layout;
    AlignedVector<T> data;  // all tensors, flat, in layout order

    std::span<T> tensor(int i) { return {data.data() + layout->tensors[i].offset, layout->tensors[i].size()}; }
    std::span<const T> tensor(int i) const {
        return {data.data() + layout->tensors[i].offset, layout->tensors[i].size()};
    }

    template <typename U>
    NetworkParams<U> cast() const {
        NetworkParams<U> out{cfg, layout, AlignedVector<U>(data.size())};
        for (size_t i = 0; i < data.size(); ++i) {
            out.data[i] = static_cast<U>(data[i]);
        }
        return out;
    }

    uint64_t checksum() const;
};

using Params = NetworkParams<float>;

// Fan-in scaled uniform weights, zero biases, unit layer-norm gains.
Params init_params(const NetConfig& cfg, Rng& rng);

template <typename T>
struct ForwardCache;

template <typename T>
struct ForwardOutput {
    Mat<T> q;      // batch x slots; masked slots hold -inf
    Vec<T> value;  // batch
    Mat<T> advantage;  // batch x slots, raw per-token advantages (masked slots 0)
    std::shared_ptr<ForwardCache<T>> cache;
};

template <typename T>
ForwardOutput<T> forward(const NetworkParams<T>& params, const ObsBatch& batch);

// Gradient of sum(dq .* q) with respect to every parameter; masked entries
// of dq must be zero.
template <typename T>
AlignedVector<T> backward(const NetworkParams<T>& params, const ForwardOutput<T>& out, const Mat<T>& dq);

template <typename T>
struct LossResult {
    double loss = 0.0;
    AlignedVector<T> grads;
    std::vector<double> td_errors;  // target - Q(s, a)
    double grad_norm = 0.0;
};

// Mean importance-weighted Huber (delta 1) loss on the chosen actions.
template <typename T>
LossResult<T> loss_and_grads(const NetworkParams<T>& params, const ObsBatch& batch, std::span<const int> actions,
                             std::span<const double> targets, std::span<const double> weights);

template <typename T>
double global_norm(std::span<const T> grads);

// Scales all gradients by max_norm / ||g|| when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::span<T> grads, double max_norm = 40.0);

inline constexpr double kGradClipNorm = 40.0;

}  // namespace nastl
