#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "behrt/data/tasks.hpp"
#include "behrt/errors.hpp"
#include "behrt/kv_config.hpp"
#include "behrt/training/adam.hpp"

namespace behrt::training {

enum class Freeze { none, encoder, all };

inline const char* to_string(Freeze f) {
    switch (f) {
        case Freeze::none: return "none";
        case Freeze::encoder: return "encoder";
        case Freeze::all: return "all";
    }
    return "?";
}

inline Freeze parse_freeze(const std::string& s) {
    if (s == "none") return Freeze::none;
    if (s == "encoder") return Freeze::encoder;
    if (s == "all") return Freeze::all;
    throw ConfigError("freeze must be none, encoder or all, got '" + s + "'");
}

inline bool parse_decay(const std::string& s) {
    if (s == "none") return false;
    if (s == "linear") return true;
    throw ConfigError("lr_decay must be none or linear, got '" + s + "'");
}

struct TrainConfig {
    data::Task task = data::Task::mlm;
    int batch_size = 32;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    double warmup_fraction = 0.05;  // linear warmup over this share of max_steps
    bool linear_decay = false;      // after warmup, decay linearly to zero at max_steps
    long max_steps = 1000;
    long eval_every = 100;
    int patience = 5;
    double mask_prob = 0.15;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    Freeze freeze = Freeze::none;

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
        if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
        if (patience < 1) fail("patience must be >= 1");
        if (batch_size < 1) fail("batch_size must be >= 1");
        if (max_steps < 0) fail("max_steps must be >= 0");
        if (eval_every < 1) fail("eval_every must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("adam betas must lie in [0,1)");
        if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
        if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
        if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) fail("warmup_fraction must lie in [0,1]");
        if (!(mask_prob > 0.0 && mask_prob <= 1.0)) fail("mask_prob must lie in (0,1]");
    }

    AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_eps, weight_decay}; }

    long warmup_steps() const {
        return std::max<long>(1, static_cast<long>(std::ceil(warmup_fraction * static_cast<double>(max_steps))));
    }

    // Linear warmup, then constant or linear decay.
    double learning_rate_at(long step) const {
        const long w = warmup_steps();
        if (step < w) return learning_rate * static_cast<double>(step) / static_cast<double>(w);
        if (!linear_decay || max_steps <= w) return learning_rate;
        const double left = static_cast<double>(max_steps - std::min(step, max_steps));
        return learning_rate * left / static_cast<double>(max_steps - w);
    }
};

inline TrainConfig train_config_from_kv(const KeyValueConfig& kv) {
    TrainConfig c;
    c.task = data::parse_task(kv.get("task", data::to_string(c.task)));
    c.batch_size = kv.get_number("batch_size", c.batch_size);
    c.learning_rate = kv.get_number("learning_rate", c.learning_rate);
    c.beta1 = kv.get_number("beta1", c.beta1);
    c.beta2 = kv.get_number("beta2", c.beta2);
    c.adam_eps = kv.get_number("adam_eps", c.adam_eps);
    c.weight_decay = kv.get_number("weight_decay", c.weight_decay);
    c.warmup_fraction = kv.get_number("warmup_fraction", c.warmup_fraction);
    c.linear_decay = parse_decay(kv.get("lr_decay", c.linear_decay ? "linear" : "none"));
    c.max_steps = kv.get_number("max_steps", c.max_steps);
    c.eval_every = kv.get_number("eval_every", c.eval_every);
    c.patience = kv.get_number("patience", c.patience);
    c.mask_prob = kv.get_number("mask_prob", c.mask_prob);
    c.seed = kv.get_number("seed", c.seed);
    c.split_seed = kv.get_number("split_seed", c.split_seed);
    c.freeze = parse_freeze(kv.get("freeze", to_string(c.freeze)));
    kv.reject_unused();
    c.validate();
    return c;
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["task"] = data::to_string(c.task);
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["weight_decay"] = c.weight_decay;
    j["warmup_fraction"] = c.warmup_fraction;
    j["lr_decay"] = c.linear_decay ? "linear" : "none";
    j["max_steps"] = c.max_steps;
    j["eval_every"] = c.eval_every;
    j["patience"] = c.patience;
    j["mask_prob"] = c.mask_prob;
    j["seed"] = c.seed;
    j["split_seed"] = c.split_seed;
    j["freeze"] = to_string(c.freeze);
    return j;
}

}  // namespace behrt::training
