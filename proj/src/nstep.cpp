#include "nstep.hpp"

#include <limits>

#include "errors.hpp"

namespace nastl {

NStepAccumulator::NStepAccumulator(int n, double discount) : n_(n), discount_(discount) {
    require(n >= 1, ErrorKind::invalid_argument, "n_step must be >= 1");
    require(discount > 0.0 && discount <= 1.0, ErrorKind::invalid_argument, "discount must be in (0, 1]");
}

NStepSample NStepAccumulator::make(size_t start, size_t count, bool bootstrap) const {
    NStepSample s;
    const Transition& first = window_[start];
    const Transition& last = window_[start + count - 1];
    s.obs = first.obs;
    s.action = first.action;
    s.q_taken = first.q_taken;
    double ret = 0.0;
    double pw = 1.0;
    for (size_t k = 0; k < count; ++k) {
        ret += pw * window_[start + k].reward;
        pw *= discount_;
    }
    s.return_n = ret;
    s.m = static_cast<int>(count);
    s.bootstrap_obs = last.next_obs;
    s.bootstrap_needed = bootstrap;
    s.bootstrap_value = last.next_max_q;
    return s;
}

std::vector<NStepSample> NStepAccumulator::push(Transition tr) {
    require(tr.t == expected_t_, ErrorKind::contract,
            "n-step stream out of order: got step " + std::to_string(tr.t) + ", expected " + std::to_string(expected_t_));
    require(!(tr.timeout && !tr.terminal), ErrorKind::contract, "timeout transition must also be terminal");
    std::vector<NStepSample> out;
    const bool end = tr.terminal;
    const bool bootstrap = !tr.terminal || tr.timeout;
    window_.push_back(std::move(tr));
    if (end) {
        for (size_t i = 0; i < window_.size(); ++i) {
            out.push_back(make(i, window_.size() - i, bootstrap));
        }
        window_.clear();
        expected_t_ = 0;
        return out;
    }
    ++expected_t_;
    if (static_cast<int>(window_.size()) == n_) {
        out.push_back(make(0, window_.size(), true));
        window_.pop_front();
    }
    return out;
}

std::vector<NStepSample> accumulate_nstep(std::span<const Transition> transitions, int n, double discount) {
    NStepAccumulator acc(n, discount);
    std::vector<NStepSample> out;
    for (const auto& tr : transitions) {
        auto done = acc.push(tr);
        for (auto& s : done) {
            out.push_back(std::move(s));
        }
    }
    return out;
}

double worker_td_error(const NStepSample& s, double discount) {
    double y = s.return_n;
    if (s.bootstrap_needed) {
        y += std::pow(discount, s.m) * s.bootstrap_value;
    }
    return y - s.q_taken;
}

std::vector<double> compute_targets(const QFunction& online, const QFunction& target,
                                    std::span<const NStepSample* const> batch, double discount) {
    std::vector<double> y(batch.size());
    std::vector<const Observation*> boot;
    std::vector<size_t> where;
    for (size_t i = 0; i < batch.size(); ++i) {
        y[i] = batch[i]->return_n;
        if (batch[i]->bootstrap_needed) {
            boot.push_back(&batch[i]->bootstrap_obs);
            where.push_back(i);
        }
    }
    if (boot.empty()) {
        return y;
    }
    const Mat<double> q_online = online(boot);
    const Mat<double> q_target = target(boot);
    for (size_t j = 0; j < boot.size(); ++j) {
        const auto& mask = boot[j]->mask;
        int best = -1;
        double best_q = -std::numeric_limits<double>::infinity();
        for (size_t a = 0; a < mask.size(); ++a) {
            if (mask[a] && (best < 0 || q_online(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a)) > best_q)) {
                best = static_cast<int>(a);
                best_q = q_online(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a));
            }
        }
        const NStepSample& s = *batch[where[j]];
        y[where[j]] += std::pow(discount, s.m) * q_target(static_cast<Eigen::Index>(j), best);
    }
    return y;
}

}  // namespace nastl
