#include "analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "rng.hpp"

namespace nastl {

std::vector<double> moving_average(std::span<const double> series, int kernel) {
    require(kernel >= 1, ErrorKind::domain, "moving average kernel must be >= 1");
    require(series.size() >= static_cast<size_t>(kernel), ErrorKind::domain,
            "series of length " + std::to_string(series.size()) + " is shorter than the kernel (" +
                std::to_string(kernel) + ")");
    std::vector<double> out(series.size() - kernel + 1);
    for (size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (int k = 0; k < kernel; ++k) {
            s += series[i + k];
        }
        out[i] = s / kernel;
    }
    return out;
}

double mean_of(std::span<const double> v) {
    if (v.empty()) {
        return NAN;
    }
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) {
        return sorted[lo];
    }
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Interval bootstrap_ci(std::span<const double> samples, double level, int resamples, uint64_t seed) {
    require(samples.size() >= 2, ErrorKind::domain, "bootstrap needs at least 2 samples");
    require(level > 0.0 && level < 1.0, ErrorKind::domain, "confidence level must be in (0, 1)");
    require(resamples >= 1, ErrorKind::domain, "bootstrap needs at least one resample");
    Rng rng(derive_seed(seed, "bootstrap"));
    const size_t n = samples.size();
    std::vector<double> means(resamples);
    std::vector<double> draw(n);
    for (int r = 0; r < resamples; ++r) {
        for (size_t i = 0; i < n; ++i) {
            draw[i] = samples[uniform_index(rng, n)];
        }
        means[r] = mean_of(draw);
    }
    std::sort(means.begin(), means.end());
    const double tail = (1.0 - level) / 2.0;
    Interval iv{mean_of(samples), percentile(means, tail), percentile(means, 1.0 - tail)};
    // Percentiles of a resampled mean can land an ulp off the sample mean
    // when every sample is equal; keep the interval ordered around the mean.
    iv.ci_low = std::min(iv.ci_low, iv.mean);
    iv.ci_high = std::max(iv.ci_high, iv.mean);
    return iv;
}

namespace {

// Counts pairs i<j with v[i] > v[j] while sorting v ascending.
uint64_t merge_count(std::vector<double>& v, std::vector<double>& tmp, size_t lo, size_t hi) {
    if (hi - lo < 2) {
        return 0;
    }
    const size_t mid = lo + (hi - lo) / 2;
    uint64_t swaps = merge_count(v, tmp, lo, mid) + merge_count(v, tmp, mid, hi);
    size_t i = lo;
    size_t j = mid;
    size_t k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += mid - i;
            tmp[k++] = v[j++];
        } else {
            tmp[k++] = v[i++];
        }
    }
    while (i < mid) tmp[k++] = v[i++];
    while (j < hi) tmp[k++] = v[j++];
    std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
    return swaps;
}

template <typename Eq>
uint64_t tied_pairs(size_t n, Eq equal_to_prev) {
    uint64_t ties = 0;
    uint64_t run = 1;
    for (size_t i = 1; i < n; ++i) {
        if (equal_to_prev(i)) {
            ++run;
        } else {
            ties += run * (run - 1) / 2;
            run = 1;
        }
    }
    return ties + run * (run - 1) / 2;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), ErrorKind::invalid_argument,
            "kendall_tau: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
    require(x.size() >= 2, ErrorKind::domain, "kendall_tau needs at least 2 observations");
    const size_t n = x.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });

    const uint64_t n0 = static_cast<uint64_t>(n) * (n - 1) / 2;
    const uint64_t n1 = tied_pairs(n, [&](size_t i) { return x[idx[i]] == x[idx[i - 1]]; });
    const uint64_t n3 = tied_pairs(n, [&](size_t i) {
        return x[idx[i]] == x[idx[i - 1]] && y[idx[i]] == y[idx[i - 1]];
    });

    std::vector<double> ys(n);
    for (size_t i = 0; i < n; ++i) {
        ys[i] = y[idx[i]];
    }
    std::vector<double> tmp(n);
    const uint64_t swaps = merge_count(ys, tmp, 0, n);
    const uint64_t n2 = tied_pairs(n, [&](size_t i) { return ys[i] == ys[i - 1]; });

    const double denom = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
    if (denom == 0.0) {
        return NAN;
    }
    const double num = static_cast<double>(n0) - static_cast<double>(n1) - static_cast<double>(n2) +
                       static_cast<double>(n3) - 2.0 * static_cast<double>(swaps);
    return std::clamp(num / denom, -1.0, 1.0);
}

std::vector<std::vector<double>> task_correlation_matrix(const Benchmark& bench, const std::vector<std::string>& tasks,
                                                         Split split) {
    std::vector<std::vector<double>> cols;
    for (const auto& name : tasks) {
        const TaskIndex t = bench.task_index(name);
        std::vector<double> v;
        v.reserve(bench.records().size());
        for (const auto& rec : bench.records()) {
            // oriented so that larger is better for every task
            const double raw = rec.metrics[t].at(split);
            v.push_back(bench.tasks()[t].higher_is_better ? raw : -raw);
        }
        cols.push_back(std::move(v));
    }
    const size_t k = tasks.size();
    std::vector<std::vector<double>> m(k, std::vector<double>(k, 1.0));
    for (size_t i = 0; i < k; ++i) {
        for (size_t j = i + 1; j < k; ++j) {
            m[i][j] = m[j][i] = kendall_tau(cols[i], cols[j]);
        }
    }
    return m;
}

TrainingCurve smooth_curve(const TrainingCurve& curve, int kernel) {
    std::vector<double> vals;
    vals.reserve(curve.points.size());
    for (const auto& p : curve.points) {
        vals.push_back(p.value);
    }
    const auto sm = moving_average(vals, kernel);
    TrainingCurve out;
    out.points.reserve(sm.size());
    for (size_t i = 0; i < sm.size(); ++i) {
        const auto& end = curve.points[i + kernel - 1];
        out.points.push_back({end.step, end.walltime_s, sm[i]});
    }
    return out;
}

std::optional<Crossing> crossover_point(const TrainingCurve& transfer_curve, double reference_final, int kernel) {
    if (transfer_curve.points.size() < static_cast<size_t>(kernel)) {
        return std::nullopt;
    }
    const auto sm = smooth_curve(transfer_curve, kernel);
    for (const auto& p : sm.points) {
        if (p.value >= reference_final) {
            return Crossing{p.step, p.walltime_s};
        }
    }
    return std::nullopt;
}

double reference_level(const TrainingCurve& reference_curve, ReferenceMode mode, int kernel) {
    const auto sm = smooth_curve(reference_curve, kernel);
    if (mode == ReferenceMode::final_value) {
        return sm.points.back().value;
    }
    double best = -INFINITY;
    for (const auto& p : sm.points) {
        best = std::max(best, p.value);
    }
    return best;
}

EquivalenceReport time_to_equivalence(const std::vector<TrainingCurve>& transfer_runs,
                                      const std::vector<TrainingCurve>& reference_runs, ReferenceMode mode, int kernel,
                                      uint64_t seed) {
    EquivalenceReport rep;
    std::vector<double> levels;
    for (const auto& ref : reference_runs) {
        levels.push_back(reference_level(ref, mode, kernel));
    }
    std::vector<double> steps;
    std::vector<double> walls;
    for (const auto& tr : transfer_runs) {
        for (double level : levels) {
            auto c = crossover_point(tr, level, kernel);
            ++rep.pair_count;
            if (c) {
                ++rep.crossed_count;
                steps.push_back(static_cast<double>(c->step));
                walls.push_back(c->walltime_s);
            }
            rep.pairs.push_back(c);
        }
    }
    auto summarize = [&](const std::vector<double>& v) {
        if (v.empty()) {
            return Interval{NAN, NAN, NAN};
        }
        if (v.size() == 1) {
            return Interval{v[0], v[0], v[0]};
        }
        return bootstrap_ci(v, 0.95, 10000, seed);
    };
    rep.steps = summarize(steps);
    rep.walltime_s = summarize(walls);
    return rep;
}

const MatrixCell& MatrixReport::at(const std::string& source, const std::string& target) const {
    for (const auto& c : cells) {
        if (c.source == source && c.target == target) {
            return c;
        }
    }
    fail(ErrorKind::not_found, "matrix has no cell " + source + " -> " + target);
}

}  // namespace nastl
