#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "behrt/errors.hpp"
#include "behrt/model/parameters.hpp"

namespace behrt::training {

using model::ParamStore;

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <typename T>
struct AdamState {
    ParamStore<T> m;
    ParamStore<T> v;
    long step = 0;

    static AdamState zeros_like(const ParamStore<T>& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

// Layer-norm gains and bias vectors are exempt from weight decay.
inline bool decays(const std::string& name) {
    auto ends_with = [&](const char* s) {
        const std::string suffix(s);
        return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    return !ends_with(".bias") && !ends_with(".gain");
}

// One bias-corrected Adam update with decoupled weight decay. `trainable`
// (per tensor, empty = all) leaves frozen tensors and their moments untouched.
template <typename T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state, const AdamConfig& cfg,
               std::span<const std::uint8_t> trainable = {}) {
    if (grads.size() != params.size() || state.m.size() != params.size()) {
        throw ShapeError("adam_step: parameter, gradient and state layouts differ");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!trainable.empty() && !trainable[i]) continue;
        auto& [name, w] = params[i];
        const auto& g = grads[i].second;
        auto& m = state.m[i].second;
        auto& v = state.v[i].second;
        if (g.shape() != w.shape()) throw ShapeError("adam_step: gradient shape mismatch for " + name);
        const double wd = decays(name) ? cfg.weight_decay : 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = static_cast<double>(g[k]);
            const double mk = cfg.beta1 * static_cast<double>(m[k]) + (1.0 - cfg.beta1) * gk;
            const double vk = cfg.beta2 * static_cast<double>(v[k]) + (1.0 - cfg.beta2) * gk * gk;
            m[k] = static_cast<T>(mk);
            v[k] = static_cast<T>(vk);
            const double update = (mk / c1) / (std::sqrt(vk / c2) + cfg.eps) + wd * static_cast<double>(w[k]);
            w[k] = static_cast<T>(static_cast<double>(w[k]) - cfg.learning_rate * update);
        }
    }
}

}  // namespace behrt::training
