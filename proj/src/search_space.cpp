#include "search_space.hpp"

#include <charconv>

#include "errors.hpp"

namespace nastl {

SearchSpaceDescriptor SearchSpaceDescriptor::micro_cell() {
    SearchSpaceDescriptor d;
    d.node_count = 4;
    for (int dst = 1; dst < 4; ++dst) {
        for (int src = 0; src < dst; ++src) {
            d.edges.emplace_back(src, dst);
        }
    }
    d.ops = {"none", "skip_connect", "conv1x1", "conv3x3"};
    return d;
}

uint64_t SearchSpaceDescriptor::space_size() const {
    uint64_t n = 1;
    for (int i = 0; i < edge_count(); ++i) {
        n *= static_cast<uint64_t>(op_count());
    }
    return n;
}

void SearchSpaceDescriptor::validate() const {
    require(node_count >= 2, ErrorKind::validation, "search space needs at least 2 nodes");
    require(!edges.empty(), ErrorKind::validation, "search space has no edges");
    require(ops.size() >= 2, ErrorKind::validation, "op vocabulary needs at least 2 entries");
    for (size_t i = 0; i < edges.size(); ++i) {
        const auto [s, d] = edges[i];
        require(s >= 0 && d < node_count && s < d, ErrorKind::validation,
                "edge " + std::to_string(i) + " must satisfy 0 <= src < dst < node_count");
        for (size_t j = 0; j < i; ++j) {
            require(edges[j] != edges[i], ErrorKind::validation,
                    "duplicate edge " + std::to_string(s) + "->" + std::to_string(d));
        }
    }
    // 2^62 is far beyond anything a tabular benchmark can hold
    double size = 1.0;
    for (size_t i = 0; i < edges.size(); ++i) {
        size *= static_cast<double>(ops.size());
    }
    require(size < 0x1.0p62, ErrorKind::validation, "search space too large to tabulate");
}

bool is_valid(const CellArch& arch, const SearchSpaceDescriptor& desc) {
    if (static_cast<int>(arch.ops.size()) != desc.edge_count()) {
        return false;
    }
    for (int op : arch.ops) {
        if (op < 0 || op >= desc.op_count()) {
            return false;
        }
    }
    return true;
}

uint64_t arch_rank(const CellArch& arch, const SearchSpaceDescriptor& desc) {
    uint64_t r = 0;
    for (int op : arch.ops) {
        r = r * static_cast<uint64_t>(desc.op_count()) + static_cast<uint64_t>(op);
    }
    return r;
}

CellArch arch_from_rank(uint64_t rank, const SearchSpaceDescriptor& desc) {
    CellArch a;
    a.ops.assign(desc.edge_count(), 0);
    const auto base = static_cast<uint64_t>(desc.op_count());
    for (int e = desc.edge_count() - 1; e >= 0; --e) {
        a.ops[e] = static_cast<int>(rank % base);
        rank /= base;
    }
    return a;
}

std::vector<CellArch> enumerate_all(const SearchSpaceDescriptor& desc) {
    const uint64_t n = desc.space_size();
    std::vector<CellArch> out;
    out.reserve(n);
    CellArch cur;
    cur.ops.assign(desc.edge_count(), 0);
    for (uint64_t i = 0; i < n; ++i) {
        out.push_back(cur);
        for (int e = desc.edge_count() - 1; e >= 0; --e) {
            if (++cur.ops[e] < desc.op_count()) {
                break;
            }
            cur.ops[e] = 0;
        }
    }
    return out;
}

std::vector<CellArch> neighbors(const CellArch& arch, const SearchSpaceDescriptor& desc) {
    std::vector<CellArch> out;
    out.reserve(static_cast<size_t>(desc.edge_count()) * (desc.op_count() - 1));
    for (int e = 0; e < desc.edge_count(); ++e) {
        for (int op = 0; op < desc.op_count(); ++op) {
            if (op == arch.ops[e]) {
                continue;
            }
            CellArch n = arch;
            n.ops[e] = op;
            out.push_back(std::move(n));
        }
    }
    return out;
}

std::string encode(const CellArch& arch) {
    std::string s;
    for (size_t i = 0; i < arch.ops.size(); ++i) {
        if (i > 0) {
            s.push_back('-');
        }
        s += std::to_string(arch.ops[i]);
    }
    return s;
}

CellArch decode(std::string_view text, const SearchSpaceDescriptor& desc) {
    CellArch a;
    size_t pos = 0;
    while (true) {
        const size_t dash = text.find('-', pos);
        const std::string_view tok = text.substr(pos, dash == std::string_view::npos ? text.npos : dash - pos);
        int v = 0;
        const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        require(!tok.empty() && ec == std::errc{} && end == tok.data() + tok.size(), ErrorKind::format,
                "architecture '" + std::string(text) + "': expected dash-separated integers");
        require(v >= 0 && v < desc.op_count(), ErrorKind::format,
                "architecture '" + std::string(text) + "': op index " + std::to_string(v) +
                    " out of range [0, " + std::to_string(desc.op_count()) + ")");
        a.ops.push_back(v);
        if (dash == std::string_view::npos) {
            break;
        }
        pos = dash + 1;
    }
    require(static_cast<int>(a.ops.size()) == desc.edge_count(), ErrorKind::format,
            "architecture '" + std::string(text) + "': expected " + std::to_string(desc.edge_count()) +
                " ops, got " + std::to_string(a.ops.size()));
    return a;
}

CellArch random_arch(Rng& rng, const SearchSpaceDescriptor& desc) {
    CellArch a;
    a.ops.resize(desc.edge_count());
    for (auto& op : a.ops) {
        op = static_cast<int>(uniform_index(rng, desc.op_count()));
    }
    return a;
}

ArchGraph to_graph(const CellArch& arch, const SearchSpaceDescriptor& desc) {
    ArchGraph g;
    g.node_count = desc.node_count;
    g.adjacency.assign(static_cast<size_t>(desc.node_count) * desc.node_count, 0);
    g.op_count = desc.op_count();
    g.edge_ops.assign(static_cast<size_t>(desc.edge_count()) * desc.op_count(), 0);
    for (int e = 0; e < desc.edge_count(); ++e) {
        const auto [s, d] = desc.edges[e];
        g.adjacency[s * desc.node_count + d] = 1;
        g.edge_ops[static_cast<size_t>(e) * desc.op_count() + arch.ops[e]] = 1;
    }
    return g;
}

int hamming_distance(const CellArch& a, const CellArch& b) {
    int d = 0;
    for (size_t i = 0; i < a.ops.size(); ++i) {
        d += a.ops[i] != b.ops[i] ? 1 : 0;
    }
    return d;
}

}  // namespace nastl
