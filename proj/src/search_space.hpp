#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rng.hpp"

namespace nastl {

struct SearchSpaceDescriptor {
    int node_count = 4;
    std::vector<std::pair<int, int>> edges;
    std::vector<std::string> ops;

    // Complete 4-node DAG with the micro-cell operation vocabulary.
    static SearchSpaceDescriptor micro_cell();

    int edge_count() const { return static_cast<int>(edges.size()); }
    int op_count() const { return static_cast<int>(ops.size()); }
    uint64_t space_size() const;

    // Throws validation error on cycles, bad node indices, or < 2 ops.
    void validate() const;

    bool operator==(const SearchSpaceDescriptor&) const = default;
};

struct CellArch {
    std::vector<int> ops;

    auto operator<=>(const CellArch&) const = default;
    bool operator==(const CellArch&) const = default;
};

struct ArchGraph {
    int node_count = 0;
    std::vector<uint8_t> adjacency;  // node_count x node_count, row-major
    int op_count = 0;
    std::vector<uint8_t> edge_ops;   // edge_count x op_count one-hot rows

    uint8_t adj(int src, int dst) const { return adjacency[src * node_count + dst]; }
};

bool is_valid(const CellArch& arch, const SearchSpaceDescriptor& desc);

// Position of arch in the lexicographic enumeration.
uint64_t arch_rank(const CellArch& arch, const SearchSpaceDescriptor& desc);
CellArch arch_from_rank(uint64_t rank, const SearchSpaceDescriptor& desc);

std::vector<CellArch> enumerate_all(const SearchSpaceDescriptor& desc);

// Single-edge substitutions, edge-major then replacement-op order.
std::vector<CellArch> neighbors(const CellArch& arch, const SearchSpaceDescriptor& desc);

std::string encode(const CellArch& arch);
CellArch decode(std::string_view text, const SearchSpaceDescriptor& desc);

CellArch random_arch(Rng& rng, const SearchSpaceDescriptor& desc);

ArchGraph to_graph(const CellArch& arch, const SearchSpaceDescriptor& desc);

int hamming_distance(const CellArch& a, const CellArch& b);

}  // namespace nastl
