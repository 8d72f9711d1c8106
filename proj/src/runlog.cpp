#include "runlog.hpp"

#include <algorithm>
#include <sstream>

#include "errors.hpp"

namespace nastl {

nlohmann::json RunEvent::to_json() const {
    nlohmann::json j = fields;
    j["type"] = type;
    j["step"] = step;
    j["walltime_s"] = walltime_s;
    return j;
}

RunEvent RunEvent::from_json(const nlohmann::json& j) {
    RunEvent ev;
    try {
        ev.type = j.at("type").get<std::string>();
        ev.step = j.at("step").get<int64_t>();
        ev.walltime_s = j.at("walltime_s").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("run log event: ") + e.what());
    }
    ev.fields = j;
    ev.fields.erase("type");
    ev.fields.erase("step");
    ev.fields.erase("walltime_s");
    return ev;
}

RunLog::RunLog(const std::filesystem::path& file)
    : out_(std::make_shared<std::ofstream>(file, std::ios::trunc)) {
    require(out_->good(), ErrorKind::io, "cannot write run log " + file.string());
}

void RunLog::append(RunEvent ev) {
    if (!events_.empty()) {
        const auto& last = events_.back();
        require(ev.step >= last.step, ErrorKind::contract,
                "run log events must be ordered by step (" + std::to_string(ev.step) + " after " +
                    std::to_string(last.step) + ")");
        ev.walltime_s = std::max(ev.walltime_s, last.walltime_s);
    }
    if (out_) {
        *out_ << ev.to_json().dump() << '\n';
        out_->flush();
    }
    events_.push_back(std::move(ev));
}

RunLog RunLog::read(const std::filesystem::path& file) {
    std::ifstream in(file);
    require(in.good(), ErrorKind::io, "cannot open run log " + file.string());
    RunLog log;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            log.events_.push_back(RunEvent::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::format, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            fail(e.kind(), file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return log;
}

std::string RunLog::to_jsonl() const {
    std::string s;
    for (const auto& ev : events_) {
        s += ev.to_json().dump();
        s += '\n';
    }
    return s;
}

namespace {

std::vector<const RunEvent*> filtered(const std::vector<RunEvent>& evs, const std::vector<std::string>& types) {
    std::vector<const RunEvent*> out;
    for (const auto& e : evs) {
        if (std::find(types.begin(), types.end(), e.type) != types.end()) {
            out.push_back(&e);
        }
    }
    return out;
}

}  // namespace

bool same_events(const std::vector<RunEvent>& a, const std::vector<RunEvent>& b, const std::vector<std::string>& types) {
    const auto fa = filtered(a, types);
    const auto fb = filtered(b, types);
    if (fa.size() != fb.size()) {
        return false;
    }
    for (size_t i = 0; i < fa.size(); ++i) {
        if (fa[i]->type != fb[i]->type || fa[i]->step != fb[i]->step || fa[i]->fields != fb[i]->fields) {
            return false;
        }
    }
    return true;
}

std::vector<RunEvent> events_up_to(const std::vector<RunEvent>& events, int64_t step,
                                   const std::vector<std::string>& types) {
    std::vector<RunEvent> out;
    for (const auto* e : filtered(events, types)) {
        if (e->step <= step) {
            out.push_back(*e);
        }
    }
    return out;
}

}  // namespace nastl
