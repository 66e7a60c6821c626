#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "behrt/errors.hpp"
#include "behrt/model/config.hpp"
#include "behrt/numerics/graph.hpp"
#include "behrt/numerics/tensor.hpp"
#include "behrt/rng.hpp"

namespace behrt::model {

using numerics::Graph;
using numerics::Shape;
using numerics::Tensor;
using numerics::Var;

// Ordered named-tensor map. Insertion order is the serialisation order.
template <typename T>
class ParamStore {
public:
    using Entry = std::pair<std::string, Tensor<T>>;

    void add(std::string name, Tensor<T> value) {
        if (index_.count(name)) throw Error("duplicate parameter name: " + name);
        index_.emplace(name, entries_.size());
        entries_.emplace_back(std::move(name), std::move(value));
    }

    bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

    std::size_t index_of(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) throw Error("unknown parameter: " + std::string(name));
        return it->second;
    }

    Tensor<T>& at(std::string_view name) { return entries_[index_of(name)].second; }
    const Tensor<T>& at(std::string_view name) const { return entries_[index_of(name)].second; }

    std::size_t size() const noexcept { return entries_.size(); }
    Entry& operator[](std::size_t i) { return entries_[i]; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }
    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    std::size_t num_values() const {
        std::size_t n = 0;
        for (const auto& [name, t] : entries_) n += t.size();
        return n;
    }

    ParamStore zeros_like() const {
        ParamStore z;
        for (const auto& [name, t] : entries_) z.add(name, Tensor<T>(t.shape()));
        return z;
    }

    void set_zero() {
        for (auto& [name, t] : entries_) t.fill(T{0});
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
        return out;
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class Init { normal, ones, zeros };

struct ParamSpec {
    std::string name;
    Shape shape;
    Init init;
};

inline std::string layer_prefix(int l) { return "layer." + std::to_string(l) + "."; }

// Every parameter name and shape follows from the config alone.
inline std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
    const auto H = static_cast<std::size_t>(c.hidden_size);
    const auto I = static_cast<std::size_t>(c.intermediate_size);
    const auto V = static_cast<std::size_t>(c.vocab_size);
    const auto G = static_cast<std::size_t>(c.num_labels());
    std::vector<ParamSpec> specs = {
        {"embeddings.disease", {V, H}, Init::normal},
        {"embeddings.age", {static_cast<std::size_t>(c.max_age), H}, Init::normal},
        {"embeddings.segment", {2, H}, Init::normal},
    };
    for (int l = 0; l < c.num_layers; ++l) {
        const std::string p = layer_prefix(l);
        for (const char* proj : {"q", "k", "v", "o"}) {
            specs.push_back({p + "attn." + proj + ".weight", {H, H}, Init::normal});
            specs.push_back({p + "attn." + proj + ".bias", {H}, Init::zeros});
        }
        specs.push_back({p + "attn_norm.gain", {H}, Init::ones});
        specs.push_back({p + "attn_norm.bias", {H}, Init::zeros});
        specs.push_back({p + "ffn.in.weight", {H, I}, Init::normal});
        specs.push_back({p + "ffn.in.bias", {I}, Init::zeros});
        specs.push_back({p + "ffn.out.weight", {I, H}, Init::normal});
        specs.push_back({p + "ffn.out.bias", {H}, Init::zeros});
        specs.push_back({p + "ffn_norm.gain", {H}, Init::ones});
        specs.push_back({p + "ffn_norm.bias", {H}, Init::zeros});
    }
    specs.push_back({"mlm.weight", {H, V}, Init::normal});
    specs.push_back({"mlm.bias", {V}, Init::zeros});
    specs.push_back({"classifier.weight", {H, G}, Init::normal});
    specs.push_back({"classifier.bias", {G}, Init::zeros});
    return specs;
}

// Normal(0, 0.02) truncated to two standard deviations; ones/zeros for norms and biases.
template <typename T>
ParamStore<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng = derive_rng(seed, {0x1A17ULL});
    std::normal_distribution<double> normal(0.0, 0.02);
    ParamStore<T> store;
    for (const auto& spec : parameter_layout(cfg)) {
        Tensor<T> t(spec.shape);
        if (spec.init == Init::ones) {
            t.fill(T{1});
        } else if (spec.init == Init::normal) {
            for (auto& v : t.values()) {
                double x;
                do {
                    x = normal(rng);
                } while (std::abs(x) > 0.04);
                v = static_cast<T>(x);
            }
        }
        store.add(spec.name, std::move(t));
    }
    return store;
}

// Throws naming the first tensor whose name or shape disagrees with the layout of `cfg`.
template <typename T>
void check_layout(const ParamStore<T>& store, const ModelConfig& cfg) {
    const auto layout = parameter_layout(cfg);
    for (const auto& spec : layout) {
        if (!store.contains(spec.name)) throw ConfigError("checkpoint is missing tensor '" + spec.name + "'");
        const auto& t = store.at(spec.name);
        if (t.shape() != spec.shape) {
            throw ConfigError("tensor '" + spec.name + "' has shape " + numerics::to_string(t.shape()) +
                              ", expected " + numerics::to_string(spec.shape));
        }
    }
    if (store.size() != layout.size()) {
        for (const auto& [name, t] : store) {
            bool known = false;
            for (const auto& spec : layout) known = known || spec.name == name;
            if (!known) throw ConfigError("unexpected tensor '" + name + "' for the requested model config");
        }
    }
}

// Binds a ParamStore into one graph, creating leaf nodes on first use.
template <typename T>
class ParamBinding {
public:
    ParamBinding(Graph<T>& graph, const ParamStore<T>& store)
        : graph_(graph), store_(store), vars_(store.size()) {}

    Var operator()(std::string_view name) { return (*this)(store_.index_of(name)); }

    Var operator()(std::size_t index) {
        if (!vars_[index].valid()) vars_[index] = graph_.parameter(store_[index].second);
        return vars_[index];
    }

    // grads[i] += d(loss)/d(param i) for every bound parameter that received a gradient.
    void accumulate_into(ParamStore<T>& grads) const {
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            if (!vars_[i].valid() || !graph_.has_grad(vars_[i])) continue;
            const auto& g = graph_.grad(vars_[i]);
            auto& dst = grads[i].second;
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
        }
    }

    Graph<T>& graph() noexcept { return graph_; }

private:
    Graph<T>& graph_;
    const ParamStore<T>& store_;
    std::vector<Var> vars_;
};

}  // namespace behrt::model
