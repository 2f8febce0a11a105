#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dust/error.hpp"
#include "dust/model.hpp"

namespace dust {

// Adam with the optimizer's stock constants. Bias correction included.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(AdamState& state, std::vector<double>& params,
                      const std::vector<double>& grad, double lr,
                      const EncoderModel* owner = nullptr) {
    require(lr >= 0.0, "adam_step: negative learning rate");
    require(state.m.size() == params.size() && grad.size() == params.size(),
            "adam_step: state/param/grad size mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            std::string where = owner ? owner->block_of_index(i)
                                      : ("index " + std::to_string(i));
            throw Error("adam_step: non-finite gradient in block " + where);
        }
    }
    state.step += 1;
    const double b1t = 1.0 - std::pow(state.beta1, double(state.step));
    const double b2t = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / b1t;
        const double vhat = state.v[i] / b2t;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

} // namespace dust
