#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace nastl {

struct AdamHyper {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamHyper hyper;
    std::vector<float> m;
    std::vector<float> v;
    int64_t step = 0;

    static AdamState zeros(size_t n, AdamHyper hyper = {});
};

// Bias-corrected Adam; params and grads must match the state's size.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state);

}  // namespace nastl
