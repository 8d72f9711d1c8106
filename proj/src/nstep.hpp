#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "environment.hpp"
#include "qnetwork.hpp"

namespace nastl {

struct Transition {
    Observation obs;
    int action = 0;
    double reward = 0.0;
    Observation next_obs;
    bool terminal = false;
    bool timeout = false;
    int t = 0;  // index within the episode, 0-based
    // Worker-side estimates under the acting snapshot, used only for the
    // initial replay priority.
    double q_taken = NAN;
    double next_max_q = NAN;
};

struct NStepSample {
    Observation obs;
    int action = 0;
    double return_n = 0.0;
    Observation bootstrap_obs;
    bool bootstrap_needed = true;
    int m = 0;
    double q_taken = NAN;
    double bootstrap_value = NAN;
};

// Sliding n-step windows over one environment's episode-ordered stream.
// Agent termination truncates without bootstrap; a time-limit ending
// truncates and still bootstraps from the final observation.
class NStepAccumulator {
public:
    NStepAccumulator(int n, double discount);

    // Returns the samples completed by this transition (oldest first).
    std::vector<NStepSample> push(Transition tr);

    size_t pending() const { return window_.size(); }

private:
    NStepSample make(size_t start, size_t count, bool bootstrap) const;

    int n_;
    double discount_;
    std::deque<Transition> window_;
    int expected_t_ = 0;
};

std::vector<NStepSample> accumulate_nstep(std::span<const Transition> transitions, int n, double discount);

// Initial priority magnitude |y - Q(s, a)| from worker-side estimates.
double worker_td_error(const NStepSample& s, double discount);

// Maps a batch of observations to Q-values (batch x slots, -inf on masked).
using QFunction = std::function<Mat<double>(std::span<const Observation* const>)>;

// Double-Q n-step targets: the online function picks the bootstrap action,
// the target function evaluates it.
std::vector<double> compute_targets(const QFunction& online, const QFunction& target,
                                    std::span<const NStepSample* const> batch, double discount);

}  // namespace nastl
