#pragma once

#include <string>

#include <json.hpp>

#include "behrt/data/sequence.hpp"
#include "behrt/data/vocab.hpp"
#include "behrt/errors.hpp"
#include "behrt/kv_config.hpp"

namespace behrt::model {

enum class Pooling { cls, mean };

inline const char* to_string(Pooling p) { return p == Pooling::cls ? "cls" : "mean"; }

inline Pooling parse_pooling(const std::string& s) {
    if (s == "cls") return Pooling::cls;
    if (s == "mean") return Pooling::mean;
    throw ConfigError("pooling must be cls or mean, got '" + s + "'");
}

struct ModelConfig {
    int num_layers = 2;
    int num_heads = 2;
    int hidden_size = 64;
    int intermediate_size = 128;
    int vocab_size = 0;  // token vocabulary including the five special tokens
    int max_age = 120;   // age ids are integer years in [0, max_age)
    int max_position = 64;
    int max_len = 64;
    double dropout_rate = 0.0;
    double layer_norm_eps = 1e-12;
    Pooling pooling = Pooling::cls;
    data::PositionMode position_mode = data::PositionMode::per_visit;

    // G: classifier width.
    int num_labels() const noexcept { return vocab_size - data::kNumSpecial; }
    int head_size() const noexcept { return hidden_size / num_heads; }

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
        if (num_layers < 1) fail("num_layers must be >= 1");
        if (num_heads < 1) fail("num_heads must be >= 1");
        if (hidden_size < 1) fail("hidden_size must be >= 1");
        if (intermediate_size < 1) fail("intermediate_size must be >= 1");
        if (hidden_size % num_heads != 0) fail("hidden_size must be divisible by num_heads");
        if (vocab_size <= data::kNumSpecial) fail("vocab_size must exceed the five special tokens");
        if (max_age < 1) fail("max_age must be >= 1");
        if (max_len < 3) fail("max_len must be >= 3");
        if (max_position < 1) fail("max_position must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0,1)");
        if (!(layer_norm_eps >= 0.0)) fail("layer_norm_eps must be >= 0");
    }

    // 6 layers, 12 heads, hidden 288, intermediate 512.
    static ModelConfig reference(int vocab_size) {
        ModelConfig c;
        c.num_layers = 6;
        c.num_heads = 12;
        c.hidden_size = 288;
        c.intermediate_size = 512;
        c.vocab_size = vocab_size;
        return c;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["num_layers"] = c.num_layers;
    j["num_heads"] = c.num_heads;
    j["hidden_size"] = c.hidden_size;
    j["intermediate_size"] = c.intermediate_size;
    j["vocab_size"] = c.vocab_size;
    j["max_age"] = c.max_age;
    j["max_position"] = c.max_position;
    j["max_len"] = c.max_len;
    j["dropout_rate"] = c.dropout_rate;
    j["layer_norm_eps"] = c.layer_norm_eps;
    j["pooling"] = to_string(c.pooling);
    j["position_mode"] = data::to_string(c.position_mode);
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.hidden_size = j.at("hidden_size").get<int>();
    c.intermediate_size = j.at("intermediate_size").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_age = j.at("max_age").get<int>();
    c.max_position = j.at("max_position").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    c.pooling = parse_pooling(j.at("pooling").get<std::string>());
    c.position_mode = data::parse_position_mode(j.at("position_mode").get<std::string>());
    c.validate();
    return c;
}

// Reads a flat key-value model config. vocab_size comes from the data
// vocabulary; if the file states it, the two must agree.
inline ModelConfig model_config_from_kv(const KeyValueConfig& kv, int vocab_size) {
    ModelConfig c;
    c.num_layers = kv.get_number("num_layers", c.num_layers);
    c.num_heads = kv.get_number("num_heads", c.num_heads);
    c.hidden_size = kv.get_number("hidden_size", c.hidden_size);
    c.intermediate_size = kv.get_number("intermediate_size", c.intermediate_size);
    c.vocab_size = kv.get_number("vocab_size", vocab_size);
    if (c.vocab_size != vocab_size) {
        throw ConfigError("model config vocab_size " + std::to_string(c.vocab_size) +
                          " does not match the data vocabulary (" + std::to_string(vocab_size) + ")");
    }
    c.max_age = kv.get_number("max_age", c.max_age);
    c.max_len = kv.get_number("max_len", c.max_len);
    c.max_position = kv.get_number("max_position", c.max_len);
    c.dropout_rate = kv.get_number("dropout_rate", c.dropout_rate);
    c.layer_norm_eps = kv.get_number("layer_norm_eps", c.layer_norm_eps);
    c.pooling = parse_pooling(kv.get("pooling", to_string(c.pooling)));
    c.position_mode = data::parse_position_mode(kv.get("position_mode", data::to_string(c.position_mode)));
    kv.reject_unused();
    c.validate();
    return c;
}

}  // namespace behrt::model
