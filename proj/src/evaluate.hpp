#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "environment.hpp"
#include "qnetwork.hpp"

namespace nastl {

struct EvalProtocol {
    int episodes = 64;
    int episode_cap = 50;
    int pad_nodes = 8;
    int max_candidates = 50;
    uint64_t seed = 0;
};

struct EvalReport {
    std::vector<double> values;  // test metric of the best-by-validation architecture, per episode
    std::vector<std::string> best_archs;
    double mean = 0.0;
    double std = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int64_t eval_steps = 0;  // environment steps spent evaluating (never counted as training)

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

// Maps a batch of observations to one action each.
using Policy = std::function<std::vector<int>(std::span<const Observation* const>)>;

int greedy_action(const Mat<float>& q, Eigen::Index row);
Policy greedy_policy(std::shared_ptr<const Params> params, const ObservationEncoder& encoder);
// Uniform over neighbors only; never terminates early.
Policy random_walk_policy(uint64_t seed);
// Uniform over every valid action, terminate included.
Policy uniform_random_policy(uint64_t seed);

EvalReport summarize(std::vector<double> values, uint64_t seed);

EvalReport evaluate(const Policy& policy, std::shared_ptr<const Benchmark> bench, const std::string& task,
                    const EvalProtocol& protocol);
EvalReport evaluate(std::shared_ptr<const Params> params, std::shared_ptr<const Benchmark> bench,
                    const std::string& task, const EvalProtocol& protocol);

}  // namespace nastl
