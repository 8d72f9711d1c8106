#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "benchmark.hpp"

namespace nastl {

enum class LandscapeFamily {
    smooth,  // quality falls off with Hamming distance to a planted optimum
    skewed,  // same structure, metric compressed toward the low end of a narrow band
};

struct SyntheticTaskSpec {
    std::string name;
    std::string metric_name = "metric";
    bool higher_is_better = true;
    LandscapeFamily family = LandscapeFamily::smooth;
    double band_lo = 0.0;
    double band_hi = 1.0;
    double landscape_noise = 0.05;  // per-architecture roughness, latent units
    double split_noise = 0.02;      // independent per split
    double skew_power = 3.0;        // skewed family only
    // Optional Kendall-tau target (valid split) against an earlier task.
    std::string correlate_with;
    double correlation = 0.0;
};

struct SyntheticSpec {
    SearchSpaceDescriptor descriptor = SearchSpaceDescriptor::micro_cell();
    std::vector<SyntheticTaskSpec> tasks;

    // The four task names of the micro-cell benchmark with plausible metric
    // bands; segmentsemantic uses the skewed low band.
    static SyntheticSpec four_task_default();

    void validate() const;
};

SyntheticSpec parse_synthetic_spec(std::string_view json_text);

struct SyntheticBenchmark {
    Benchmark bench;
    std::vector<CellArch> planted_optima;  // one per task
};

SyntheticBenchmark generate_synthetic_with_optima(uint64_t seed, const SyntheticSpec& spec);
Benchmark generate_synthetic(uint64_t seed, const SyntheticSpec& spec);

}  // namespace nastl
