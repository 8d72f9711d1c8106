#include "checkpoint.hpp"

#include <span>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"

namespace nastl {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename U>
void put(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

template <typename U>
U get(const std::string& in, size_t& pos) {
    require(pos + sizeof(U) <= in.size(), ErrorKind::format, "checkpoint truncated");
    U v;
    std::memcpy(&v, in.data() + pos, sizeof(U));
    pos += sizeof(U);
    return v;
}

void put_floats(std::string& out, std::span<const float> v) {
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

std::vector<float> get_floats(const std::string& in, size_t& pos, size_t n) {
    require(pos + n * sizeof(float) <= in.size(), ErrorKind::format, "checkpoint truncated");
    std::vector<float> v(n);
    std::memcpy(v.data(), in.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
    return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    using nlohmann::json;
    json lineage = json::array();
    for (const auto& e : ckpt.lineage) {
        lineage.push_back({{"task", e.task}, {"steps", e.steps}});
    }
    json header{
        {"net_config", json::parse(ckpt.net().to_json())},
        {"lineage", lineage},
        {"trained_steps", ckpt.trained_steps},
        {"fingerprint", ckpt.fingerprint},
        {"rng_state", ckpt.rng_state},
        {"param_count", ckpt.params.data.size()},
    };
    if (ckpt.adam) {
        const auto& a = *ckpt.adam;
        header["adam"] = {{"step", a.step}, {"lr", a.hyper.lr}, {"beta1", a.hyper.beta1},
                          {"beta2", a.hyper.beta2}, {"eps", a.hyper.eps}};
    } else {
        header["adam"] = nullptr;
    }
    const std::string hdr = header.dump();

    std::string out;
    out.append(kCheckpointMagic, 4);
    put<uint16_t>(out, kCheckpointVersion);
    put<uint32_t>(out, static_cast<uint32_t>(hdr.size()));
    out += hdr;
    put_floats(out, ckpt.params.data);
    if (ckpt.adam) {
        put_floats(out, ckpt.adam->m);
        put_floats(out, ckpt.adam->v);
    }
    put<uint64_t>(out, fnv1a64(out));
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes, const NetConfig* expected) {
    require(bytes.size() >= 4 && std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0, ErrorKind::format,
            "not a checkpoint file (bad magic)");
    require(bytes.size() >= 4 + 2 + 4 + 8, ErrorKind::checksum, "checkpoint truncated");
    const size_t body = bytes.size() - 8;
    size_t cpos = body;
    const auto stored = get<uint64_t>(bytes, cpos);
    require(fnv1a64(std::string_view(bytes.data(), body)) == stored, ErrorKind::checksum,
            "checkpoint checksum mismatch (file truncated or corrupted)");

    size_t pos = 4;
    const auto version = get<uint16_t>(bytes, pos);
    require(version == kCheckpointVersion, ErrorKind::format,
            "unsupported checkpoint version " + std::to_string(version));
    const auto hlen = get<uint32_t>(bytes, pos);
    require(pos + hlen <= body, ErrorKind::format, "checkpoint header overruns the file");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, hlen));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("checkpoint header: ") + e.what());
    }
    pos += hlen;

    Checkpoint ck;
    try {
        const NetConfig net = NetConfig::from_json(header.at("net_config").dump());
        if (expected && !(net == *expected)) {
            fail(ErrorKind::config_mismatch, "checkpoint network config " + net.to_json() +
                                                 " does not match the expected " + expected->to_json());
        }
        ck.params.cfg = net;
        ck.params.layout = ParamLayout::build(net);
        const auto count = header.at("param_count").get<size_t>();
        require(count == ck.params.layout->total, ErrorKind::format, "checkpoint parameter count disagrees with its config");
        for (const auto& e : header.at("lineage")) {
            ck.lineage.push_back({e.at("task").get<std::string>(), e.at("steps").get<int64_t>()});
        }
        ck.trained_steps = header.at("trained_steps").get<int64_t>();
        ck.fingerprint = header.at("fingerprint").get<std::string>();
        ck.rng_state = header.at("rng_state").get<std::string>();
        const auto flat = get_floats(bytes, pos, count);
        ck.params.data.assign(flat.begin(), flat.end());
        if (!header.at("adam").is_null()) {
            const auto& a = header["adam"];
            AdamState st;
            st.step = a.at("step").get<int64_t>();
            st.hyper = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                        a.at("eps").get<double>()};
            st.m = get_floats(bytes, pos, count);
            st.v = get_floats(bytes, pos, count);
            ck.adam = std::move(st);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("checkpoint header: ") + e.what());
    }
    require(pos == body, ErrorKind::format, "checkpoint has trailing bytes before the checksum");
    return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    // write-then-rename so readers never see a half-written file
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorKind::io, "cannot write checkpoint " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(out.good(), ErrorKind::io, "write failed for checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str(), expected);
}

}  // namespace nastl
