#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "adam.hpp"
#include "qnetwork.hpp"

namespace nastl {

struct LineageEntry {
    std::string task;
    int64_t steps = 0;

    bool operator==(const LineageEntry&) const = default;
};

struct Checkpoint {
    Params params;
    std::optional<AdamState> adam;
    int64_t trained_steps = 0;
    std::vector<LineageEntry> lineage;
    std::string rng_state;
    std::string fingerprint;

    const NetConfig& net() const { return params.cfg; }
};

inline constexpr char kCheckpointMagic[4] = {'N', 'T', 'L', 'C'};
inline constexpr uint16_t kCheckpointVersion = 1;

// "NTLC" | u16 version | u32 header length | JSON header | f32 LE parameter
// arrays in declaration order | optional Adam moments | u64 FNV-1a checksum
// of every preceding byte.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes, const NetConfig* expected = nullptr);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// With `expected`, a NetConfig mismatch is a config_mismatch error.
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetConfig* expected = nullptr);

}  // namespace nastl
