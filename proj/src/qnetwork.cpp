#include "qnetwork.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "errors.hpp"

namespace nastl {

void NetConfig::validate() const {
    require(input_dim >= 1, ErrorKind::invalid_argument, "net config: input_dim must be positive");
    require(d_model >= 1 && n_heads >= 1 && d_model % n_heads == 0, ErrorKind::invalid_argument,
            "net config: d_model must be divisible by n_heads");
    require(embed_layers >= 1 && head_layers >= 1 && n_transformer_layers >= 0, ErrorKind::invalid_argument,
            "net config: layer counts out of range");
    require(ffn_hidden >= 1 && head_hidden >= 1, ErrorKind::invalid_argument, "net config: hidden widths must be positive");
}

std::string NetConfig::to_json() const {
    nlohmann::json j{{"input_dim", input_dim},       {"d_model", d_model},
                     {"embed_layers", embed_layers}, {"n_transformer_layers", n_transformer_layers},
                     {"n_heads", n_heads},           {"ffn_hidden", ffn_hidden},
                     {"head_layers", head_layers},   {"head_hidden", head_hidden}};
    return j.dump();
}

NetConfig NetConfig::from_json(const std::string& text) {
    NetConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        c.input_dim = j.at("input_dim").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.embed_layers = j.at("embed_layers").get<int>();
        c.n_transformer_layers = j.at("n_transformer_layers").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.ffn_hidden = j.at("ffn_hidden").get<int>();
        c.head_layers = j.at("head_layers").get<int>();
        c.head_hidden = j.at("head_hidden").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("net config: ") + e.what());
    }
    c.validate();
    return c;
}

std::shared_ptr<const ParamLayout> ParamLayout::build(const NetConfig& cfg) {
    cfg.validate();
    auto L = std::make_shared<ParamLayout>();
    auto add = [&](std::string name, int rows, int cols) {
        L->tensors.push_back({std::move(name), rows, cols, L->total});
        L->total += static_cast<size_t>(rows) * cols;
        return static_cast<int>(L->tensors.size()) - 1;
    };
    auto linear = [&](const std::string& name, int in, int out) {
        LinearIdx li;
        li.w = add(name + ".w", in, out);
        li.b = add(name + ".b", 1, out);
        return li;
    };
    const int d = cfg.d_model;
    for (int i = 0; i < cfg.embed_layers; ++i) {
        L->embed.push_back(linear("embed." + std::to_string(i), i == 0 ? cfg.input_dim : d, d));
    }
    for (int l = 0; l < cfg.n_transformer_layers; ++l) {
        const std::string p = "block." + std::to_string(l) + ".";
        BlockIdx b;
        b.ln1_g = add(p + "ln1.g", 1, d);
        b.ln1_b = add(p + "ln1.b", 1, d);
        b.q = linear(p + "attn.q", d, d);
        b.k = linear(p + "attn.k", d, d);
        b.v = linear(p + "attn.v", d, d);
        b.o = linear(p + "attn.o", d, d);
        b.ln2_g = add(p + "ln2.g", 1, d);
        b.ln2_b = add(p + "ln2.b", 1, d);
        b.ff1 = linear(p + "ffn.0", d, cfg.ffn_hidden);
        b.ff2 = linear(p + "ffn.1", cfg.ffn_hidden, d);
        L->blocks.push_back(b);
    }
    for (int i = 0; i < cfg.head_layers; ++i) {
        const int in = i == 0 ? d : cfg.head_hidden;
        const int out = i + 1 == cfg.head_layers ? 1 : cfg.head_hidden;
        L->adv.push_back(linear("adv." + std::to_string(i), in, out));
    }
    for (int i = 0; i < cfg.head_layers; ++i) {
        const int in = i == 0 ? d : cfg.head_hidden;
        const int out = i + 1 == cfg.head_layers ? 1 : cfg.head_hidden;
        L->val.push_back(linear("val." + std::to_string(i), in, out));
    }
    return L;
}

template <typename T>
uint64_t NetworkParams<T>::checksum() const {
    return fnv1a64({reinterpret_cast<const char*>(data.data()), data.size() * sizeof(T)});
}

template struct NetworkParams<float>;
template struct NetworkParams<double>;

Params init_params(const NetConfig& cfg, Rng& rng) {
    Params p;
    p.cfg = cfg;
    p.layout = ParamLayout::build(cfg);
    p.data.assign(p.layout->total, 0.0f);
    for (const auto& t : p.layout->tensors) {
        const bool is_gain = t.name.ends_with(".g");
        const bool is_weight = t.name.ends_with(".w");
        float* dst = p.data.data() + t.offset;
        if (is_gain) {
            std::fill(dst, dst + t.size(), 1.0f);
        } else if (is_weight) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(t.rows));
            for (size_t i = 0; i < t.size(); ++i) {
                dst[i] = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
            }
        }
    }
    return p;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using ConstMap = Eigen::Map<const Mat<T>>;
template <typename T>
using MutMap = Eigen::Map<Mat<T>>;

template <typename T>
ConstMap<T> tmat(const NetworkParams<T>& p, int idx) {
    const auto& s = p.layout->tensors[idx];
    return ConstMap<T>(p.data.data() + s.offset, s.rows, s.cols);
}

template <typename T>
Eigen::Map<const RowVec<T>> trow(const NetworkParams<T>& p, int idx) {
    const auto& s = p.layout->tensors[idx];
    return Eigen::Map<const RowVec<T>>(p.data.data() + s.offset, s.cols);
}

template <typename T>
MutMap<T> gmat(AlignedVector<T>& g, const ParamLayout& L, int idx) {
    const auto& s = L.tensors[idx];
    return MutMap<T>(g.data() + s.offset, s.rows, s.cols);
}

template <typename T>
Eigen::Map<RowVec<T>> grow(AlignedVector<T>& g, const ParamLayout& L, int idx) {
    const auto& s = L.tensors[idx];
    return Eigen::Map<RowVec<T>>(g.data() + s.offset, s.cols);
}

template <typename T>
Mat<T> linear(const NetworkParams<T>& p, const LinearIdx& li, const Mat<T>& x) {
    Mat<T> y = x * tmat(p, li.w);
    y.rowwise() += trow(p, li.b);
    return y;
}

template <typename T>
void relu_inplace(Mat<T>& x) {
    x = x.cwiseMax(T(0));
}

template <typename T>
void check_finite(const Mat<T>& m, const std::string& where) {
    if (!m.allFinite()) {
        fail(ErrorKind::numeric, "non-finite activation in " + where);
    }
}

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const NetworkParams<T>& p, int g, int b, Mat<T>& xhat, Vec<T>& rstd) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    xhat.resize(n, d);
    rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const T mu = x.row(i).mean();
        const T var = (x.row(i).array() - mu).square().mean();
        rstd(i) = T(1) / std::sqrt(var + T(kLayerNormEps));
        xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
    }
    Mat<T> y = xhat.array().rowwise() * trow(p, g).array();
    y.rowwise() += trow(p, b);
    return y;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const Vec<T>& rstd, const NetworkParams<T>& p, int g,
                           int b, AlignedVector<T>& grads) {
    const auto& L = *p.layout;
    grow(grads, L, g) += (dy.array() * xhat.array()).colwise().sum().matrix();
    grow(grads, L, b) += dy.colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * trow(p, g).array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const T m1 = dxhat.row(i).mean();
        const T m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
        dx.row(i) = rstd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
    return dx;
}

// Accumulates linear-layer gradients and returns d(input).
template <typename T>
Mat<T> linear_backward(const NetworkParams<T>& p, const LinearIdx& li, const Mat<T>& input, const Mat<T>& dy,
                       AlignedVector<T>& grads, bool need_dx = true) {
    const auto& L = *p.layout;
    gmat(grads, L, li.w).noalias() += input.transpose() * dy;
    grow(grads, L, li.b) += dy.colwise().sum();
    if (!need_dx) {
        return {};
    }
    return dy * tmat(p, li.w).transpose();
}

template <typename T>
void relu_backward(Mat<T>& d, const Mat<T>& out) {
    d = (out.array() > T(0)).select(d, T(0));
}

}  // namespace

template <typename T>
struct ForwardCache {
    struct Block {
        Mat<T> in, xhat1, a, q, k, v, attn, mid, xhat2, bn, f;
        Vec<T> rstd1, rstd2;
        std::vector<Mat<T>> probs;  // sample-major, head-minor
    };

    int batch = 0;
    int slots = 0;
    std::vector<int> begin;  // token offset per sample, batch + 1 entries
    std::vector<int> slot;   // slot of each token
    Mat<T> x;
    std::vector<Mat<T>> embed;
    std::vector<Block> blocks;
    Mat<T> z;
    std::vector<Mat<T>> adv_h;
    Mat<T> pooled;
    std::vector<Mat<T>> val_h;
};

template <typename T>
ForwardOutput<T> forward(const NetworkParams<T>& p, const ObsBatch& batch) {
    const NetConfig& cfg = p.cfg;
    const ParamLayout& L = *p.layout;
    require(batch.input_dim == cfg.input_dim, ErrorKind::contract,
            "observation width " + std::to_string(batch.input_dim) + " does not match network input_dim " +
                std::to_string(cfg.input_dim));
    auto cache = std::make_shared<ForwardCache<T>>();
    auto& c = *cache;
    c.batch = batch.batch;
    c.slots = batch.slots;
    c.begin.assign(batch.batch + 1, 0);
    for (int b = 0; b < batch.batch; ++b) {
        int n = 0;
        for (int s = 0; s < batch.slots; ++s) {
            if (batch.mask[static_cast<size_t>(b) * batch.slots + s]) {
                c.slot.push_back(s);
                ++n;
            }
        }
        require(n >= 1 && batch.mask[static_cast<size_t>(b) * batch.slots] != 0, ErrorKind::contract,
                "observation " + std::to_string(b) + " has slot 0 masked");
        c.begin[b + 1] = c.begin[b] + n;
    }
    const int ntok = c.begin.back();
    c.x.resize(ntok, cfg.input_dim);
    for (int b = 0, t = 0; b < batch.batch; ++b) {
        for (int i = c.begin[b]; i < c.begin[b + 1]; ++i, ++t) {
            const auto tok = batch.token(b, c.slot[t]);
            for (int j = 0; j < cfg.input_dim; ++j) {
                c.x(t, j) = static_cast<T>(tok[j]);
            }
        }
    }

    Mat<T> h = c.x;
    for (const auto& li : L.embed) {
        h = linear(p, li, h);
        relu_inplace(h);
        c.embed.push_back(h);
    }
    check_finite(h, "embedding");

    const int d = cfg.d_model;
    const int dh = d / cfg.n_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Mat<T> z = h;
    for (size_t l = 0; l < L.blocks.size(); ++l) {
        const BlockIdx& bi = L.blocks[l];
        typename ForwardCache<T>::Block blk;
        blk.in = z;
        blk.a = layer_norm(z, p, bi.ln1_g, bi.ln1_b, blk.xhat1, blk.rstd1);
        blk.q = linear(p, bi.q, blk.a);
        blk.k = linear(p, bi.k, blk.a);
        blk.v = linear(p, bi.v, blk.a);
        blk.attn.resize(ntok, d);
        blk.probs.reserve(static_cast<size_t>(batch.batch) * cfg.n_heads);
        for (int b = 0; b < batch.batch; ++b) {
            const int r0 = c.begin[b];
            const int n = c.begin[b + 1] - r0;
            for (int hd = 0; hd < cfg.n_heads; ++hd) {
                Mat<T> s = blk.q.block(r0, hd * dh, n, dh) * blk.k.block(r0, hd * dh, n, dh).transpose();
                s *= scale;
                for (int i = 0; i < n; ++i) {
                    const T mx = s.row(i).maxCoeff();
                    s.row(i) = (s.row(i).array() - mx).exp();
                    s.row(i) /= s.row(i).sum();
                }
                blk.attn.block(r0, hd * dh, n, dh).noalias() = s * blk.v.block(r0, hd * dh, n, dh);
                blk.probs.push_back(std::move(s));
            }
        }
        blk.mid = z + linear(p, bi.o, blk.attn);
        blk.bn = layer_norm(blk.mid, p, bi.ln2_g, bi.ln2_b, blk.xhat2, blk.rstd2);
        blk.f = linear(p, bi.ff1, blk.bn);
        relu_inplace(blk.f);
        z = blk.mid + linear(p, bi.ff2, blk.f);
        check_finite(z, "transformer block " + std::to_string(l));
        c.blocks.push_back(std::move(blk));
    }
    c.z = z;

    Mat<T> a = z;
    for (size_t i = 0; i < L.adv.size(); ++i) {
        a = linear(p, L.adv[i], a);
        if (i + 1 < L.adv.size()) {
            relu_inplace(a);
            c.adv_h.push_back(a);
        }
    }
    check_finite(a, "advantage head");

    c.pooled.resize(batch.batch, d);
    for (int b = 0; b < batch.batch; ++b) {
        const int n = c.begin[b + 1] - c.begin[b];
        c.pooled.row(b) = z.middleRows(c.begin[b], n).colwise().sum() / static_cast<T>(n);
    }
    Mat<T> v = c.pooled;
    for (size_t i = 0; i < L.val.size(); ++i) {
        v = linear(p, L.val[i], v);
        if (i + 1 < L.val.size()) {
            relu_inplace(v);
            c.val_h.push_back(v);
        }
    }
    check_finite(v, "value head");

    ForwardOutput<T> out;
    out.q = Mat<T>::Constant(batch.batch, batch.slots, -std::numeric_limits<T>::infinity());
    out.advantage = Mat<T>::Zero(batch.batch, batch.slots);
    out.value.resize(batch.batch);
    for (int b = 0; b < batch.batch; ++b) {
        const int n = c.begin[b + 1] - c.begin[b];
        const T mean_a = a.col(0).segment(c.begin[b], n).sum() / static_cast<T>(n);
        out.value(b) = v(b, 0);
        for (int t = c.begin[b]; t < c.begin[b + 1]; ++t) {
            out.q(b, c.slot[t]) = v(b, 0) + a(t, 0) - mean_a;
            out.advantage(b, c.slot[t]) = a(t, 0);
        }
    }
    out.cache = std::move(cache);
    return out;
}

template <typename T>
AlignedVector<T> backward(const NetworkParams<T>& p, const ForwardOutput<T>& out, const Mat<T>& dq) {
    const NetConfig& cfg = p.cfg;
    const ParamLayout& L = *p.layout;
    const auto& c = *out.cache;
    AlignedVector<T> grads(L.total, T(0));
    const int ntok = c.begin.back();
    const int d = cfg.d_model;
    const int dh = d / cfg.n_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Mat<T> dadv(ntok, 1);
    Mat<T> dval(c.batch, 1);
    for (int b = 0; b < c.batch; ++b) {
        const int n = c.begin[b + 1] - c.begin[b];
        T sum = 0;
        for (int t = c.begin[b]; t < c.begin[b + 1]; ++t) {
            sum += dq(b, c.slot[t]);
        }
        dval(b, 0) = sum;
        for (int t = c.begin[b]; t < c.begin[b + 1]; ++t) {
            dadv(t, 0) = dq(b, c.slot[t]) - sum / static_cast<T>(n);
        }
    }

    // advantage head
    Mat<T> g = dadv;
    for (int i = static_cast<int>(L.adv.size()) - 1; i >= 0; --i) {
        const Mat<T>& in = i == 0 ? c.z : c.adv_h[i - 1];
        g = linear_backward(p, L.adv[i], in, g, grads);
        if (i > 0) {
            relu_backward(g, c.adv_h[i - 1]);
        }
    }
    Mat<T> dz = g;

    // value head over the mean-pooled tokens
    g = dval;
    for (int i = static_cast<int>(L.val.size()) - 1; i >= 0; --i) {
        const Mat<T>& in = i == 0 ? c.pooled : c.val_h[i - 1];
        g = linear_backward(p, L.val[i], in, g, grads);
        if (i > 0) {
            relu_backward(g, c.val_h[i - 1]);
        }
    }
    for (int b = 0; b < c.batch; ++b) {
        const int n = c.begin[b + 1] - c.begin[b];
        dz.middleRows(c.begin[b], n).rowwise() += g.row(b) / static_cast<T>(n);
    }

    for (int l = static_cast<int>(L.blocks.size()) - 1; l >= 0; --l) {
        const BlockIdx& bi = L.blocks[l];
        const auto& blk = c.blocks[l];
        // z_out = mid + ffn(ln2(mid))
        Mat<T> df = linear_backward(p, bi.ff2, blk.f, dz, grads);
        relu_backward(df, blk.f);
        Mat<T> dbn = linear_backward(p, bi.ff1, blk.bn, df, grads);
        Mat<T> dmid = dz + layer_norm_backward(dbn, blk.xhat2, blk.rstd2, p, bi.ln2_g, bi.ln2_b, grads);
        // mid = in + attn * Wo + bo
        Mat<T> dattn = linear_backward(p, bi.o, blk.attn, dmid, grads);
        Mat<T> dqm = Mat<T>::Zero(ntok, d);
        Mat<T> dkm = Mat<T>::Zero(ntok, d);
        Mat<T> dvm = Mat<T>::Zero(ntok, d);
        size_t pi = 0;
        for (int b = 0; b < c.batch; ++b) {
            const int r0 = c.begin[b];
            const int n = c.begin[b + 1] - r0;
            for (int hd = 0; hd < cfg.n_heads; ++hd, ++pi) {
                const Mat<T>& P = blk.probs[pi];
                const auto dO = dattn.block(r0, hd * dh, n, dh);
                dvm.block(r0, hd * dh, n, dh).noalias() = P.transpose() * dO;
                Mat<T> dP = dO * blk.v.block(r0, hd * dh, n, dh).transpose();
                Mat<T> dS(n, n);
                for (int i = 0; i < n; ++i) {
                    const T dot = (dP.row(i).array() * P.row(i).array()).sum();
                    dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
                }
                dS *= scale;
                dqm.block(r0, hd * dh, n, dh).noalias() = dS * blk.k.block(r0, hd * dh, n, dh);
                dkm.block(r0, hd * dh, n, dh).noalias() = dS.transpose() * blk.q.block(r0, hd * dh, n, dh);
            }
        }
        Mat<T> da = linear_backward(p, bi.q, blk.a, dqm, grads);
        da += linear_backward(p, bi.k, blk.a, dkm, grads);
        da += linear_backward(p, bi.v, blk.a, dvm, grads);
        dz = dmid + layer_norm_backward(da, blk.xhat1, blk.rstd1, p, bi.ln1_g, bi.ln1_b, grads);
    }

    g = dz;
    for (int i = static_cast<int>(L.embed.size()) - 1; i >= 0; --i) {
        relu_backward(g, c.embed[i]);
        const Mat<T>& in = i == 0 ? c.x : c.embed[i - 1];
        g = linear_backward(p, L.embed[i], in, g, grads, i > 0);
    }
    return grads;
}

template <typename T>
LossResult<T> loss_and_grads(const NetworkParams<T>& p, const ObsBatch& batch, std::span<const int> actions,
                             std::span<const double> targets, std::span<const double> weights) {
    const size_t n = static_cast<size_t>(batch.batch);
    require(actions.size() == n && targets.size() == n && weights.size() == n, ErrorKind::contract,
            "loss_and_grads: batch, actions, targets and weights must have equal length");
    require(n > 0, ErrorKind::contract, "loss_and_grads: empty batch");
    auto out = forward(p, batch);
    LossResult<T> res;
    res.td_errors.resize(n);
    Mat<T> dq = Mat<T>::Zero(batch.batch, batch.slots);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const int a = actions[i];
        require(a >= 0 && a < batch.slots && batch.mask[i * batch.slots + a], ErrorKind::contract,
                "loss_and_grads: action " + std::to_string(a) + " of sample " + std::to_string(i) + " is masked");
        const double q = static_cast<double>(out.q(static_cast<Eigen::Index>(i), a));
        const double td = targets[i] - q;
        res.td_errors[i] = td;
        const double abs_td = std::abs(td);
        loss += weights[i] * (abs_td <= 1.0 ? 0.5 * td * td : abs_td - 0.5);
        const double dhuber = std::clamp(td, -1.0, 1.0);
        dq(static_cast<Eigen::Index>(i), a) = static_cast<T>(-weights[i] * dhuber / static_cast<double>(n));
    }
    res.loss = loss / static_cast<double>(n);
    res.grads = backward(p, out, dq);
    res.grad_norm = global_norm<T>(res.grads);
    return res;
}

template <typename T>
double global_norm(std::span<const T> grads) {
    double ss = 0.0;
    for (T g : grads) {
        ss += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(ss);
}

template <typename T>
double clip_global_norm(std::span<T> grads, double max_norm) {
    const double norm = global_norm<T>(grads);
    require(std::isfinite(norm), ErrorKind::numeric, "non-finite gradient norm");
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (T& g : grads) {
            g = static_cast<T>(static_cast<double>(g) * s);
        }
    }
    return norm;
}

template ForwardOutput<float> forward(const NetworkParams<float>&, const ObsBatch&);
template ForwardOutput<double> forward(const NetworkParams<double>&, const ObsBatch&);
template AlignedVector<float> backward(const NetworkParams<float>&, const ForwardOutput<float>&, const Mat<float>&);
template AlignedVector<double> backward(const NetworkParams<double>&, const ForwardOutput<double>&, const Mat<double>&);
template LossResult<float> loss_and_grads(const NetworkParams<float>&, const ObsBatch&, std::span<const int>,
                                          std::span<const double>, std::span<const double>);
template LossResult<double> loss_and_grads(const NetworkParams<double>&, const ObsBatch&, std::span<const int>,
                                           std::span<const double>, std::span<const double>);
template double global_norm<float>(std::span<const float>);
template double global_norm<double>(std::span<const double>);
template double clip_global_norm<float>(std::span<float>, double);
template double clip_global_norm<double>(std::span<double>, double);

}  // namespace nastl
