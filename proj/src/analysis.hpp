#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "benchmark.hpp"
#include "runlog.hpp"

namespace nastl {

struct CurvePoint {
    int64_t step = 0;
    double walltime_s = 0.0;
    double value = 0.0;
};

struct TrainingCurve {
    std::vector<CurvePoint> points;  // steps strictly increasing
};

struct Interval {
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

inline constexpr int kSmoothingKernel = 16;

// (step, walltime_s, mean) of every eval event, in log order.
TrainingCurve curve_from_events(const std::vector<RunEvent>& events);

// Valid-mode uniform convolution: out[i] = mean(series[i .. i+kernel)).
std::vector<double> moving_average(std::span<const double> series, int kernel = kSmoothingKernel);

// Percentile bootstrap of the mean.
Interval bootstrap_ci(std::span<const double> samples, double level = 0.95, int resamples = 10000, uint64_t seed = 0);

double mean_of(std::span<const double> v);
double sample_std(std::span<const double> v);

// Tie-corrected tau-b via merge-sort discordance counting, O(n log n).
double kendall_tau(std::span<const double> x, std::span<const double> y);

std::vector<std::vector<double>> task_correlation_matrix(const Benchmark& bench, const std::vector<std::string>& tasks,
                                                         Split split = Split::valid);

struct Crossing {
    int64_t step = 0;
    double walltime_s = 0.0;
};

// Smoothed point i is stamped with the step of the last raw point in its
// window, i.e. the earliest time the average is observable.
TrainingCurve smooth_curve(const TrainingCurve& curve, int kernel = kSmoothingKernel);

std::optional<Crossing> crossover_point(const TrainingCurve& transfer_curve, double reference_final,
                                        int kernel = kSmoothingKernel);

enum class ReferenceMode { final_value, best_value };

double reference_level(const TrainingCurve& reference_curve, ReferenceMode mode, int kernel = kSmoothingKernel);

struct EquivalenceReport {
    int pair_count = 0;
    int crossed_count = 0;
    Interval steps;      // over crossed pairs only; NaN when none crossed
    Interval walltime_s;
    std::vector<std::optional<Crossing>> pairs;  // transfer-major order
};

EquivalenceReport time_to_equivalence(const std::vector<TrainingCurve>& transfer_runs,
                                      const std::vector<TrainingCurve>& reference_runs,
                                      ReferenceMode mode = ReferenceMode::final_value, int kernel = kSmoothingKernel,
                                      uint64_t seed = 0);

struct MatrixCell {
    std::string source;
    std::string target;
    double mean = 0.0;
    double std = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n = 0;  // 0 marks a gap (incomplete cell)
};

struct MatrixReport {
    std::vector<std::string> tasks;
    std::vector<MatrixCell> cells;  // source-major over tasks x tasks
    std::vector<std::string> missing;

    const MatrixCell& at(const std::string& source, const std::string& target) const;
};

// Aggregates per-seed eval means for every (source, target) of one regime;
// the diagonal holds the from-scratch agents.
MatrixReport performance_matrix(const std::filesystem::path& experiment_dir, const std::string& regime,
                                uint64_t seed = 0);

std::string matrix_to_csv(const MatrixReport& report);
MatrixReport matrix_from_csv(const std::string& csv);
std::string matrix_to_svg(const MatrixReport& report, const std::string& title);

// Curves of every cell of one regime (plus the from-scratch references).
std::string curves_csv(const std::filesystem::path& experiment_dir, const std::string& regime,
                       int kernel = kSmoothingKernel);

std::string crossover_csv(const std::filesystem::path& experiment_dir, const std::string& regime,
                          ReferenceMode mode = ReferenceMode::final_value, int kernel = kSmoothingKernel,
                          uint64_t seed = 0);

}  // namespace nastl
