#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "behrt/data/sequence.hpp"
#include "behrt/errors.hpp"
#include "behrt/model/config.hpp"
#include "behrt/model/parameters.hpp"
#include "behrt/rng.hpp"

namespace behrt::model {

// Fixed sinusoidal encoding: entry 2i = sin(pos / 10000^(2i/H)), 2i+1 = cos(same).
template <typename T = double>
std::vector<T> positional_encoding(int position, int hidden, int max_position) {
    if (position < 0 || position >= max_position) {
        throw ConfigError("position " + std::to_string(position) + " outside [0, " + std::to_string(max_position) + ")");
    }
    std::vector<T> pe(static_cast<std::size_t>(hidden));
    for (int i = 0; 2 * i < hidden; ++i) {
        const double angle = position / std::pow(10000.0, 2.0 * i / hidden);
        pe[static_cast<std::size_t>(2 * i)] = static_cast<T>(std::sin(angle));
        if (2 * i + 1 < hidden) pe[static_cast<std::size_t>(2 * i + 1)] = static_cast<T>(std::cos(angle));
    }
    return pe;
}

// Closed-form parameter count for a ModelConfig.
inline std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t H = c.hidden_size, I = c.intermediate_size, V = c.vocab_size, G = c.num_labels();
    const std::size_t A = c.max_age, L = c.num_layers;
    const std::size_t per_layer = 4 * (H * H + H) + 2 * H + (H * I + I) + (I * H + H) + 2 * H;
    return V * H + A * H + 2 * H + L * per_layer + (H * V + V) + (H * G + G);
}

template <typename T>
class BehrtModel {
public:
    struct Encoded {
        Var hidden;                       // [M x H] final-layer representation
        std::vector<Var> attention_nodes;  // one per layer; see Graph::attention_probs
    };

    BehrtModel(ModelConfig config, ParamStore<T> params) : config_(std::move(config)), params_(std::move(params)) {
        config_.validate();
        check_layout(params_, config_);
        build_position_table();
    }

    static BehrtModel initialize(const ModelConfig& config, std::uint64_t seed) {
        return BehrtModel(config, init_parameters<T>(config, seed));
    }

    const ModelConfig& config() const noexcept { return config_; }
    ParamStore<T>& params() noexcept { return params_; }
    const ParamStore<T>& params() const noexcept { return params_; }

    // Row t = disease[token_t] + age[age_t] + segment[seg_t] + PE(pos_t).
    Var embed(ParamBinding<T>& p, const data::TokenSequence& seq) const {
        Graph<T>& g = p.graph();
        const std::size_t m = seq.size();
        const auto H = static_cast<std::size_t>(config_.hidden_size);
        Tensor<T> pos({m, H});
        for (std::size_t t = 0; t < m; ++t) {
            const int q = seq.position_ids[t];
            if (q < 0 || q >= config_.max_position) {
                throw ConfigError("position " + std::to_string(q) + " outside [0, " +
                                  std::to_string(config_.max_position) + ")");
            }
            std::copy_n(position_table_.data() + static_cast<std::size_t>(q) * H, H, pos.data() + t * H);
        }
        Var x = g.gather_rows(p("embeddings.disease"), seq.token_ids);
        x = g.add(x, g.gather_rows(p("embeddings.age"), seq.age_ids));
        x = g.add(x, g.gather_rows(p("embeddings.segment"), seq.segment_ids));
        return g.add(x, g.constant(std::move(pos)));
    }

    // Post-norm encoder stack: attention -> add & norm -> GELU FFN -> add & norm.
    // dropout_rng == nullptr disables dropout.
    Encoded encode(ParamBinding<T>& p, const data::TokenSequence& seq, Rng* dropout_rng = nullptr) const {
        if (seq.size() == 0) throw ConfigError("encode: empty sequence");
        if (static_cast<int>(seq.size()) > config_.max_len) throw ConfigError("encode: sequence longer than max_len");
        Graph<T>& g = p.graph();
        const auto key_valid = seq.valid_mask();
        const T eps = static_cast<T>(config_.layer_norm_eps);
        const T rate = dropout_rng ? static_cast<T>(config_.dropout_rate) : T{0};
        auto drop = [&](Var v) { return rate > T{0} ? g.dropout(v, rate, *dropout_rng) : v; };

        Encoded out;
        Var x = drop(embed(p, seq));
        for (int l = 0; l < config_.num_layers; ++l) {
            const std::string pre = layer_prefix(l);
            auto proj = [&](const char* name, Var in) {
                return g.linear(in, p(pre + "attn." + name + ".weight"), p(pre + "attn." + name + ".bias"));
            };
            Var ctx = g.attention(proj("q", x), proj("k", x), proj("v", x), key_valid,
                                  static_cast<std::size_t>(config_.num_heads));
            out.attention_nodes.push_back(ctx);
            Var a = drop(proj("o", ctx));
            x = g.layer_norm(g.add(x, a), p(pre + "attn_norm.gain"), p(pre + "attn_norm.bias"), eps);
            Var f = g.gelu(g.linear(x, p(pre + "ffn.in.weight"), p(pre + "ffn.in.bias")));
            f = drop(g.linear(f, p(pre + "ffn.out.weight"), p(pre + "ffn.out.bias")));
            x = g.layer_norm(g.add(x, f), p(pre + "ffn_norm.gain"), p(pre + "ffn_norm.bias"), eps);
        }
        out.hidden = x;
        return out;
    }

    // [M x V] affine map per position.
    Var mlm_logits(ParamBinding<T>& p, Var hidden) const {
        return p.graph().linear(hidden, p("mlm.weight"), p("mlm.bias"));
    }

    // [1 x G] logits from the pooled sequence representation; sigmoid is left to the caller.
    Var classify(ParamBinding<T>& p, Var hidden, const data::TokenSequence& seq) const {
        Graph<T>& g = p.graph();
        Var pooled;
        if (config_.pooling == Pooling::cls) {
            const int cls_row[] = {0};
            pooled = g.gather_rows(hidden, cls_row);
        } else {
            pooled = g.mean_rows(hidden, seq.valid_mask());
        }
        return g.linear(pooled, p("classifier.weight"), p("classifier.bias"));
    }

    // Inference helpers (no dropout).

    Tensor<T> predict_mlm_logits(const data::TokenSequence& seq) const {
        Graph<T> g;
        ParamBinding<T> p(g, params_);
        auto enc = encode(p, seq);
        return g.value(mlm_logits(p, enc.hidden));
    }

    std::vector<T> predict_label_logits(const data::TokenSequence& seq) const {
        Graph<T> g;
        ParamBinding<T> p(g, params_);
        auto enc = encode(p, seq);
        const auto& v = g.value(classify(p, enc.hidden, seq));
        return std::vector<T>(v.values().begin(), v.values().end());
    }

    std::vector<T> predict_label_probs(const data::TokenSequence& seq) const {
        auto out = predict_label_logits(seq);
        for (auto& v : out) v = Graph<T>::sigmoid(v);
        return out;
    }

    Tensor<T> hidden_states(const data::TokenSequence& seq) const {
        Graph<T> g;
        ParamBinding<T> p(g, params_);
        return g.value(encode(p, seq).hidden);
    }

    // Per-layer [heads x M x M] attention probabilities.
    std::vector<Tensor<T>> attentions(const data::TokenSequence& seq) const {
        Graph<T> g;
        ParamBinding<T> p(g, params_);
        auto enc = encode(p, seq);
        std::vector<Tensor<T>> out;
        for (Var v : enc.attention_nodes) out.push_back(g.attention_probs(v));
        return out;
    }

    friend bool operator==(const BehrtModel& a, const BehrtModel& b) {
        return a.config_ == b.config_ && a.params_ == b.params_;
    }

private:
    void build_position_table() {
        const auto H = static_cast<std::size_t>(config_.hidden_size);
        position_table_.assign(static_cast<std::size_t>(config_.max_position) * H, T{0});
        for (int q = 0; q < config_.max_position; ++q) {
            const auto pe = positional_encoding<T>(q, config_.hidden_size, config_.max_position);
            std::copy(pe.begin(), pe.end(), position_table_.begin() + static_cast<std::ptrdiff_t>(q * H));
        }
    }

    ModelConfig config_;
    ParamStore<T> params_;
    std::vector<T> position_table_;
};

// Head-averaged [M x M] attention of one layer; layer < 0 counts from the end.
template <typename T>
Tensor<T> extract_attention(const std::vector<Tensor<T>>& attentions, int layer = -1) {
    const int n = static_cast<int>(attentions.size());
    const int l = layer < 0 ? n + layer : layer;
    if (l < 0 || l >= n) throw ConfigError("attention layer " + std::to_string(layer) + " out of range");
    const auto& a = attentions[static_cast<std::size_t>(l)];
    const std::size_t heads = a.dim(0), m = a.dim(1);
    Tensor<T> out({m, m});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < m * m; ++i) out[i] += a[h * m * m + i];
    for (auto& v : out.values()) v /= static_cast<T>(heads);
    return out;
}

}  // namespace behrt::model
