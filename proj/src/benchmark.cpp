#include "benchmark.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"

namespace nastl {

using nlohmann::json;

const char* to_string(Split split) {
    switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "valid") return Split::valid;
    if (name == "test") return Split::test;
    fail(ErrorKind::invalid_argument, "unknown split '" + std::string(name) + "' (expected train, valid or test)");
}

double SplitMetrics::at(Split s) const {
    switch (s) {
    case Split::train: return train;
    case Split::valid: return valid;
    case Split::test: return test;
    }
    return valid;
}

Benchmark::Benchmark(SearchSpaceDescriptor descriptor, std::vector<TaskSpec> tasks, std::vector<ArchRecord> records)
    : descriptor_(std::move(descriptor)), tasks_(std::move(tasks)) {
    descriptor_.validate();
    require(!tasks_.empty(), ErrorKind::validation, "benchmark declares no tasks");
    for (size_t i = 0; i < tasks_.size(); ++i) {
        require(!tasks_[i].name.empty(), ErrorKind::validation, "task " + std::to_string(i) + " has an empty name");
        for (size_t j = 0; j < i; ++j) {
            require(tasks_[i].name != tasks_[j].name, ErrorKind::validation, "duplicate task '" + tasks_[i].name + "'");
        }
    }

    const uint64_t n = descriptor_.space_size();
    records_.resize(n);
    std::vector<bool> seen(n, false);
    uint64_t present = 0;
    for (size_t i = 0; i < records.size(); ++i) {
        auto& rec = records[i];
        require(is_valid(rec.arch, descriptor_), ErrorKind::validation,
                "record " + std::to_string(i) + ": architecture does not fit the search space");
        require(rec.metrics.size() == tasks_.size(), ErrorKind::validation,
                "record " + std::to_string(i) + " (" + encode(rec.arch) + "): metrics for " +
                    std::to_string(rec.metrics.size()) + " tasks, expected " + std::to_string(tasks_.size()));
        for (size_t t = 0; t < tasks_.size(); ++t) {
            const auto& m = rec.metrics[t];
            require(std::isfinite(m.train) && std::isfinite(m.valid) && std::isfinite(m.test), ErrorKind::validation,
                    "record " + std::to_string(i) + " (" + encode(rec.arch) + "): non-finite metric for task '" +
                        tasks_[t].name + "'");
        }
        const uint64_t r = arch_rank(rec.arch, descriptor_);
        require(!seen[r], ErrorKind::format, "record " + std::to_string(i) + ": duplicate architecture " + encode(rec.arch));
        seen[r] = true;
        ++present;
        records_[r] = std::move(rec);
    }
    if (present != n) {
        fail(ErrorKind::completeness, "incomplete tabulation: " + std::to_string(n - present) + " of " +
                                          std::to_string(n) + " architectures missing");
    }
    recompute_stats();
}

void Benchmark::recompute_stats() {
    norm_stats_.assign(tasks_.size(), {});
    for (size_t t = 0; t < tasks_.size(); ++t) {
        for (int s = 0; s < 3; ++s) {
            MinMax mm{INFINITY, -INFINITY};
            for (const auto& rec : records_) {
                const double v = rec.metrics[t].at(static_cast<Split>(s));
                mm.min = std::min(mm.min, v);
                mm.max = std::max(mm.max, v);
            }
            norm_stats_[t][s] = mm;
        }
    }
}

TaskIndex Benchmark::task_index(std::string_view name) const {
    for (size_t i = 0; i < tasks_.size(); ++i) {
        if (tasks_[i].name == name) {
            return static_cast<TaskIndex>(i);
        }
    }
    std::string avail;
    for (const auto& t : tasks_) {
        avail += (avail.empty() ? "" : ", ") + t.name;
    }
    fail(ErrorKind::not_found, "task '" + std::string(name) + "' not found in benchmark (available: " + avail + ")");
}

bool Benchmark::has_task(std::string_view name) const {
    for (const auto& t : tasks_) {
        if (t.name == name) {
            return true;
        }
    }
    return false;
}

const ArchRecord& Benchmark::record(const CellArch& arch) const {
    require(is_valid(arch, descriptor_), ErrorKind::not_found,
            "architecture " + encode(arch) + " is not in the benchmark");
    return records_[arch_rank(arch, descriptor_)];
}

double Benchmark::raw_metric(const CellArch& arch, TaskIndex task, Split split) const {
    require(task >= 0 && task < static_cast<int>(tasks_.size()), ErrorKind::not_found, "task index out of range");
    return record(arch).metrics[task].at(split);
}

const MinMax& Benchmark::norm_stats(TaskIndex task, Split split) const {
    require(task >= 0 && task < static_cast<int>(tasks_.size()), ErrorKind::not_found, "task index out of range");
    return norm_stats_[task][static_cast<int>(split)];
}

double Benchmark::normalize(double raw, TaskIndex task, Split split) const {
    const MinMax& mm = norm_stats(task, split);
    if (mm.max == mm.min) {
        return 0.5;
    }
    const double x = tasks_[task].higher_is_better ? (raw - mm.min) : (mm.max - raw);
    return std::clamp(x / (mm.max - mm.min), 0.0, 1.0);
}

double Benchmark::normalized_metric(const CellArch& arch, TaskIndex task, Split split) const {
    return normalize(raw_metric(arch, task, split), task, split);
}

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& ctx) {
    if (!obj.is_object() || !obj.contains(key)) {
        fail(ErrorKind::format, ctx + ": missing field '" + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::format, ctx + ": field '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

double metric_value(const json& v, const std::string& ctx) {
    if (v.is_number()) {
        return v.get<double>();
    }
    // JSON has no literal for NaN/inf; tolerate them as strings so the
    // validator can reject them with a useful message.
    if (v.is_string() || v.is_null()) {
        return NAN;
    }
    fail(ErrorKind::format, ctx + ": metric is not a number");
}

}  // namespace

Benchmark parse_benchmark(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // e.byte is 1-based; report the line as well
        size_t line = 1;
        for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            line += text[i] == '\n' ? 1 : 0;
        }
        fail(ErrorKind::format, "benchmark file: malformed JSON at line " + std::to_string(line) + ": " + e.what());
    }
    require(doc.is_object(), ErrorKind::format, "benchmark file: top level must be an object");
    const int version = field<int>(doc, "format_version", "benchmark file");
    require(version == 1, ErrorKind::format, "benchmark file: unsupported format_version " + std::to_string(version));

    SearchSpaceDescriptor desc;
    const json& ss = doc.contains("search_space") ? doc["search_space"] : json();
    desc.node_count = field<int>(ss, "node_count", "search_space");
    desc.edges = field<std::vector<std::pair<int, int>>>(ss, "edges", "search_space");
    desc.ops = field<std::vector<std::string>>(ss, "ops", "search_space");
    desc.validate();

    std::vector<TaskSpec> tasks;
    const auto task_list = field<json>(doc, "tasks", "benchmark file");
    require(task_list.is_array(), ErrorKind::format, "benchmark file: 'tasks' must be an array");
    for (size_t i = 0; i < task_list.size(); ++i) {
        const std::string ctx = "task " + std::to_string(i);
        tasks.push_back({field<std::string>(task_list[i], "name", ctx), field<std::string>(task_list[i], "metric_name", ctx),
                         field<bool>(task_list[i], "higher_is_better", ctx)});
    }

    const auto recs = field<json>(doc, "records", "benchmark file");
    require(recs.is_array(), ErrorKind::format, "benchmark file: 'records' must be an array");
    std::vector<ArchRecord> records;
    records.reserve(recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        const std::string ctx = "record " + std::to_string(i);
        ArchRecord rec;
        rec.arch.ops = field<std::vector<int>>(recs[i], "ops", ctx);
        require(is_valid(rec.arch, desc), ErrorKind::format, ctx + ": 'ops' has the wrong arity or an out-of-range index");
        const auto metrics = field<json>(recs[i], "metrics", ctx);
        require(metrics.is_object(), ErrorKind::format, ctx + ": 'metrics' must be an object");
        for (const auto& t : tasks) {
            require(metrics.contains(t.name), ErrorKind::validation, ctx + " (" + encode(rec.arch) + "): missing task '" + t.name + "'");
            const json& m = metrics[t.name];
            const std::string mctx = ctx + " task '" + t.name + "'";
            for (const char* k : {"train", "valid", "test"}) {
                require(m.is_object() && m.contains(k), ErrorKind::format, mctx + ": missing split '" + k + "'");
            }
            rec.metrics.push_back({metric_value(m["train"], mctx), metric_value(m["valid"], mctx), metric_value(m["test"], mctx)});
        }
        records.push_back(std::move(rec));
    }
    // Stored norm_stats (if any) are ignored; the constructor recomputes them.
    return Benchmark(std::move(desc), std::move(tasks), std::move(records));
}

Benchmark load_benchmark(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open benchmark file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_benchmark(ss.str());
}

std::string serialize_benchmark(const Benchmark& bench) {
    json doc;
    doc["format_version"] = 1;
    const auto& d = bench.descriptor();
    doc["search_space"] = {{"node_count", d.node_count}, {"edges", d.edges}, {"ops", d.ops}};
    json tasks = json::array();
    for (const auto& t : bench.tasks()) {
        tasks.push_back({{"name", t.name}, {"metric_name", t.metric_name}, {"higher_is_better", t.higher_is_better}});
    }
    doc["tasks"] = std::move(tasks);
    json stats = json::object();
    for (size_t t = 0; t < bench.tasks().size(); ++t) {
        json per = json::object();
        for (Split s : {Split::train, Split::valid, Split::test}) {
            const auto& mm = bench.norm_stats(static_cast<TaskIndex>(t), s);
            per[to_string(s)] = {{"min", mm.min}, {"max", mm.max}};
        }
        stats[bench.tasks()[t].name] = std::move(per);
    }
    doc["norm_stats"] = std::move(stats);
    json records = json::array();
    for (const auto& rec : bench.records()) {
        json metrics = json::object();
        for (size_t t = 0; t < bench.tasks().size(); ++t) {
            const auto& m = rec.metrics[t];
            metrics[bench.tasks()[t].name] = {{"train", m.train}, {"valid", m.valid}, {"test", m.test}};
        }
        records.push_back({{"ops", rec.arch.ops}, {"metrics", std::move(metrics)}});
    }
    doc["records"] = std::move(records);
    return doc.dump() + "\n";
}

void save_benchmark(const Benchmark& bench, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::io, "cannot write benchmark file " + path.string());
    out << serialize_benchmark(bench);
    require(out.good(), ErrorKind::io, "write failed for " + path.string());
}

}  // namespace nastl
