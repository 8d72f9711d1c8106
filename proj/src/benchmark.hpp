#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "search_space.hpp"

namespace nastl {

enum class Split { train = 0, valid = 1, test = 2 };

const char* to_string(Split split);
Split parse_split(std::string_view name);

struct TaskSpec {
    std::string name;
    std::string metric_name;
    bool higher_is_better = true;

    bool operator==(const TaskSpec&) const = default;
};

struct SplitMetrics {
    double train = 0.0;
    double valid = 0.0;
    double test = 0.0;

    double at(Split s) const;
    bool operator==(const SplitMetrics&) const = default;
};

struct ArchRecord {
    CellArch arch;
    std::vector<SplitMetrics> metrics;  // indexed like Benchmark::tasks

    bool operator==(const ArchRecord&) const = default;
};

struct MinMax {
    double min = 0.0;
    double max = 0.0;

    bool operator==(const MinMax&) const = default;
};

using TaskIndex = int;

// Complete tabulation: records[i] holds the architecture of rank i.
class Benchmark {
public:
    Benchmark() = default;
    Benchmark(SearchSpaceDescriptor descriptor, std::vector<TaskSpec> tasks, std::vector<ArchRecord> records);

    const SearchSpaceDescriptor& descriptor() const { return descriptor_; }
    const std::vector<TaskSpec>& tasks() const { return tasks_; }
    const std::vector<ArchRecord>& records() const { return records_; }

    TaskIndex task_index(std::string_view name) const;  // throws not_found
    bool has_task(std::string_view name) const;

    const ArchRecord& record(const CellArch& arch) const;  // throws not_found
    double raw_metric(const CellArch& arch, TaskIndex task, Split split) const;
    const MinMax& norm_stats(TaskIndex task, Split split) const;

    // Min-max normalized per split, oriented so 1 is always best. Degenerate
    // max == min maps to 0.5.
    double normalized_metric(const CellArch& arch, TaskIndex task, Split split) const;
    double normalize(double raw, TaskIndex task, Split split) const;

    bool operator==(const Benchmark&) const = default;

private:
    void recompute_stats();

    SearchSpaceDescriptor descriptor_;
    std::vector<TaskSpec> tasks_;
    std::vector<ArchRecord> records_;
    std::vector<std::array<MinMax, 3>> norm_stats_;
};

Benchmark load_benchmark(const std::filesystem::path& path);
Benchmark parse_benchmark(std::string_view json_text);

// Records in lexicographic op-tuple order, doubles in shortest round-trip form.
std::string serialize_benchmark(const Benchmark& bench);
void save_benchmark(const Benchmark& bench, const std::filesystem::path& path);

}  // namespace nastl
