#include "adam.hpp"

#include <cmath>

#include "errors.hpp"

namespace nastl {

AdamState AdamState::zeros(size_t n, AdamHyper hyper) {
    AdamState s;
    s.hyper = hyper;
    s.m.assign(n, 0.0f);
    s.v.assign(n, 0.0f);
    return s;
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state) {
    require(params.size() == grads.size() && params.size() == state.m.size() && state.m.size() == state.v.size(),
            ErrorKind::contract, "adam_step: parameter, gradient and moment sizes differ");
    ++state.step;
    const auto& h = state.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    const float b1 = static_cast<float>(h.beta1);
    const float b2 = static_cast<float>(h.beta2);
    for (size_t i = 0; i < params.size(); ++i) {
        const float g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0f - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0f - b2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] = static_cast<float>(params[i] - h.lr * mhat / (std::sqrt(vhat) + h.eps));
    }
}

}  // namespace nastl
