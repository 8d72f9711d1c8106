#include "shaping.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace nastl {

void ShapingConfig::validate() const {
    require(std::isfinite(exponent) && exponent > 0.0, ErrorKind::domain,
            "shaping exponent must be positive, got " + std::to_string(exponent));
}

double gamma_transform(double r, double exponent) {
    require(r >= 0.0 && r <= 1.0, ErrorKind::domain, "gamma_transform: reward " + std::to_string(r) + " outside [0, 1]");
    require(std::isfinite(exponent) && exponent > 0.0, ErrorKind::domain, "gamma_transform: exponent must be positive");
    if (exponent == 1.0 || r == 0.0 || r == 1.0) {
        return r;
    }
    return std::pow(r, exponent);
}

double spread(std::span<const double> values) {
    require(values.size() >= 2, ErrorKind::domain, "spread needs at least 2 values");
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    return std::sqrt(ss / static_cast<double>(values.size()));
}

std::vector<double> default_sweep_grid() {
    std::vector<double> g(2000);
    for (int i = 0; i < 2000; ++i) {
        g[i] = static_cast<double>(i + 1) * 0.001;
    }
    return g;
}

SweepResult sweep_gamma(std::span<const double> values, std::span<const double> grid) {
    require(!grid.empty(), ErrorKind::domain, "sweep_gamma: empty grid");
    SweepResult res;
    res.table.reserve(grid.size());
    std::vector<double> shaped(values.size());
    double best_spread = -1.0;
    for (double g : grid) {
        for (size_t i = 0; i < values.size(); ++i) {
            shaped[i] = gamma_transform(values[i], g);
        }
        const double s = spread(shaped);
        res.table.push_back({g, s});
        if (s > best_spread || (s == best_spread && g < res.best_exponent)) {
            best_spread = s;
            res.best_exponent = g;
        }
    }
    return res;
}

}  // namespace nastl
