#include "evaluate.hpp"

#include <limits>

#include "analysis.hpp"
#include "errors.hpp"

namespace nastl {

nlohmann::json EvalReport::to_json() const {
    return {{"values", values}, {"best_archs", best_archs}, {"mean", mean},       {"std", std},
            {"ci_low", ci_low}, {"ci_high", ci_high},       {"eval_steps", eval_steps}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
        r.values = j.at("values").get<std::vector<double>>();
        r.best_archs = j.value("best_archs", std::vector<std::string>{});
        r.mean = j.at("mean").get<double>();
        r.std = j.at("std").get<double>();
        r.ci_low = j.at("ci_low").get<double>();
        r.ci_high = j.at("ci_high").get<double>();
        r.eval_steps = j.value("eval_steps", int64_t{0});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("eval report: ") + e.what());
    }
    return r;
}

int greedy_action(const Mat<float>& q, Eigen::Index row) {
    int best = 0;
    float best_q = q(row, 0);
    for (Eigen::Index a = 1; a < q.cols(); ++a) {
        if (q(row, a) > best_q) {
            best_q = q(row, a);
            best = static_cast<int>(a);
        }
    }
    return best;
}

Policy greedy_policy(std::shared_ptr<const Params> params, const ObservationEncoder& encoder) {
    return [params = std::move(params), encoder](std::span<const Observation* const> obs) {
        const auto out = forward(*params, encoder.batch(obs));
        std::vector<int> actions(obs.size());
        for (size_t i = 0; i < obs.size(); ++i) {
            actions[i] = greedy_action(out.q, static_cast<Eigen::Index>(i));
        }
        return actions;
    };
}

Policy random_walk_policy(uint64_t seed) {
    auto rng = std::make_shared<Rng>(derive_seed(seed, "policy.random_walk"));
    return [rng](std::span<const Observation* const> obs) {
        std::vector<int> actions(obs.size());
        for (size_t i = 0; i < obs.size(); ++i) {
            const int k = obs[i]->valid_count() - 1;
            actions[i] = k > 0 ? 1 + static_cast<int>(uniform_index(*rng, static_cast<uint64_t>(k))) : 0;
        }
        return actions;
    };
}

Policy uniform_random_policy(uint64_t seed) {
    auto rng = std::make_shared<Rng>(derive_seed(seed, "policy.uniform"));
    return [rng](std::span<const Observation* const> obs) {
        std::vector<int> actions(obs.size());
        for (size_t i = 0; i < obs.size(); ++i) {
            actions[i] = static_cast<int>(uniform_index(*rng, static_cast<uint64_t>(obs[i]->valid_count())));
        }
        return actions;
    };
}

EvalReport summarize(std::vector<double> values, uint64_t seed) {
    EvalReport r;
    r.values = std::move(values);
    r.mean = mean_of(r.values);
    r.std = sample_std(r.values);
    if (r.values.size() >= 2) {
        const auto iv = bootstrap_ci(r.values, 0.95, 10000, seed);
        r.ci_low = iv.ci_low;
        r.ci_high = iv.ci_high;
    } else {
        r.ci_low = r.ci_high = r.mean;
    }
    return r;
}

EvalReport evaluate(const Policy& policy, std::shared_ptr<const Benchmark> bench, const std::string& task,
                    const EvalProtocol& protocol) {
    require(protocol.episodes >= 1, ErrorKind::invalid_argument, "evaluation needs at least one episode");
    EnvConfig base;
    base.task = task;
    base.split = Split::valid;
    base.episode_cap = protocol.episode_cap;
    base.pad_nodes = protocol.pad_nodes;
    base.max_candidates = protocol.max_candidates;
    std::vector<uint64_t> seeds;
    for (int i = 0; i < protocol.episodes; ++i) {
        seeds.push_back(derive_seed(protocol.seed, "eval.episode", static_cast<uint64_t>(i)));
    }
    std::vector<Environment> envs;
    envs.reserve(seeds.size());
    for (uint64_t s : seeds) {
        EnvConfig c = base;
        c.seed = s;
        envs.emplace_back(bench, c);
    }
    const TaskIndex t = bench->task_index(task);
    const size_t n = envs.size();
    std::vector<Observation> obs(n);
    std::vector<CellArch> best(n);
    std::vector<double> best_valid(n, -std::numeric_limits<double>::infinity());
    std::vector<bool> active(n, true);
    auto consider = [&](size_t i) {
        const double v = bench->normalized_metric(envs[i].current(), t, Split::valid);
        if (v > best_valid[i]) {
            best_valid[i] = v;
            best[i] = envs[i].current();
        }
    };
    for (size_t i = 0; i < n; ++i) {
        obs[i] = envs[i].reset();
        consider(i);
    }
    int64_t steps = 0;
    while (true) {
        std::vector<size_t> idx;
        std::vector<const Observation*> batch;
        for (size_t i = 0; i < n; ++i) {
            if (active[i]) {
                idx.push_back(i);
                batch.push_back(&obs[i]);
            }
        }
        if (idx.empty()) {
            break;
        }
        const auto actions = policy(batch);
        for (size_t k = 0; k < idx.size(); ++k) {
            const size_t i = idx[k];
            auto r = envs[i].step(actions[k]);
            ++steps;
            consider(i);
            obs[i] = std::move(r.obs);
            active[i] = !r.terminal;
        }
    }
    std::vector<double> values(n);
    std::vector<std::string> archs(n);
    for (size_t i = 0; i < n; ++i) {
        values[i] = bench->raw_metric(best[i], t, Split::test);
        archs[i] = encode(best[i]);
    }
    EvalReport rep = summarize(std::move(values), protocol.seed);
    rep.best_archs = std::move(archs);
    rep.eval_steps = steps;
    return rep;
}

EvalReport evaluate(std::shared_ptr<const Params> params, std::shared_ptr<const Benchmark> bench,
                    const std::string& task, const EvalProtocol& protocol) {
    const ObservationEncoder enc(bench->descriptor(), protocol.pad_nodes, protocol.max_candidates);
    return evaluate(greedy_policy(std::move(params), enc), std::move(bench), task, protocol);
}

}  // namespace nastl
