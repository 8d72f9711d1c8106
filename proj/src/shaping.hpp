#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace nastl {

// r -> r^exponent on rewards already normalized to [0, 1].
struct ShapingConfig {
    double exponent = 1.0;

    void validate() const;
};

// The exponent found by the spread sweep on the segmentation task.
inline constexpr double kSegmentationShapingExponent = 0.478;

double gamma_transform(double r, double exponent);

// Population standard deviation.
double spread(std::span<const double> values);

struct SweepRow {
    double exponent = 0.0;
    double spread = 0.0;
};

struct SweepResult {
    double best_exponent = 0.0;
    std::vector<SweepRow> table;
};

// 2000 points uniform on (0, 2].
std::vector<double> default_sweep_grid();

// Argmax of spread over the grid; ties go to the smallest exponent.
SweepResult sweep_gamma(std::span<const double> values, std::span<const double> grid);

}  // namespace nastl
