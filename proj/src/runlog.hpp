#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace nastl {

struct RunEvent {
    std::string type;  // config | train | eval | checkpoint
    int64_t step = 0;
    double walltime_s = 0.0;
    nlohmann::json fields = nlohmann::json::object();

    nlohmann::json to_json() const;
    static RunEvent from_json(const nlohmann::json& j);
};

// Append-only event stream, optionally mirrored to a JSON-lines file.
// Steps are non-decreasing and walltime is monotone.
class RunLog {
public:
    RunLog() = default;
    explicit RunLog(const std::filesystem::path& file);

    void append(RunEvent ev);
    const std::vector<RunEvent>& events() const { return events_; }

    static RunLog read(const std::filesystem::path& file);
    std::string to_jsonl() const;

private:
    std::vector<RunEvent> events_;
    std::shared_ptr<std::ofstream> out_;
};

// Event-by-event equality of the given event types, ignoring walltime.
bool same_events(const std::vector<RunEvent>& a, const std::vector<RunEvent>& b,
                 const std::vector<std::string>& types = {"train", "eval"});

std::vector<RunEvent> events_up_to(const std::vector<RunEvent>& events, int64_t step,
                                   const std::vector<std::string>& types = {"train", "eval"});

}  // namespace nastl
