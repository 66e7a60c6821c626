#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "behrt/errors.hpp"
#include "behrt/model/behrt.hpp"
#include "behrt/model/config.hpp"
#include "behrt/model/parameters.hpp"

namespace behrt::model {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host order");

// File layout:
//   8 bytes  magic "BEHRTCKP"
//   8 bytes  header length N, little-endian uint64
//   N bytes  JSON header {format, model_config, seed, metadata, tensors:[{name, shape, dtype, offset, nbytes}]}
//   payload  raw little-endian tensor data; offsets are relative to the payload start
inline constexpr char kCheckpointMagic[8] = {'B', 'E', 'H', 'R', 'T', 'C', 'K', 'P'};

template <typename T>
constexpr const char* dtype_name() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? "f32" : "f64";
}

template <typename T>
struct Checkpoint {
    ModelConfig config;
    std::uint64_t seed = 0;
    nlohmann::json metadata = nlohmann::json::object();
    ParamStore<T> params;
    // Additional named groups (optimizer moments and the like), stored as "<group>/<tensor>".
    std::vector<std::pair<std::string, ParamStore<T>>> groups;

    const ParamStore<T>* group(const std::string& name) const {
        for (const auto& [n, g] : groups)
            if (n == name) return &g;
        return nullptr;
    }
};

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ck) {
    nlohmann::ordered_json header;
    header["format"] = "behrt-checkpoint/1";
    header["model_config"] = to_json(ck.config);
    header["seed"] = ck.seed;
    header["metadata"] = ck.metadata;
    auto tensors = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    std::vector<std::pair<std::string, const Tensor<T>*>> order;
    for (const auto& [name, t] : ck.params) order.emplace_back(name, &t);
    for (const auto& [gname, store] : ck.groups)
        for (const auto& [name, t] : store) order.emplace_back(gname + "/" + name, &t);
    for (const auto& [name, t] : order) {
        const std::uint64_t nbytes = t->size() * sizeof(T);
        tensors.push_back({{"name", name}, {"shape", t->shape()}, {"dtype", dtype_name<T>()},
                           {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    }
    header["tensors"] = std::move(tensors);
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : order) {
        out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(T)));
    }
    if (!out) throw ConfigError("failed writing checkpoint: " + path);
}

namespace detail {

template <typename Src, typename T>
Tensor<T> decode_tensor(const char* bytes, const Shape& shape) {
    std::vector<Src> raw(numerics::shape_size(shape));
    std::memcpy(raw.data(), bytes, raw.size() * sizeof(Src));
    return Tensor<T>(shape, std::vector<T>(raw.begin(), raw.end()));
}

}  // namespace detail

inline nlohmann::json read_checkpoint_header(std::ifstream& in, const std::string& path, std::uint64_t& payload_start) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw FormatError("not a checkpoint file: " + path);
    }
    std::uint64_t len = 0;
    if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ULL << 32)) {
        throw FormatError("corrupt checkpoint header: " + path);
    }
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated checkpoint header: " + path);
    payload_start = sizeof magic + sizeof len + len;
    try {
        return nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw FormatError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
}

// Reads any stored dtype into T. When `expected` is given the stored tensors
// must match its layout exactly; a mismatch names the offending tensor.
template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    std::uint64_t payload_start = 0;
    const auto header = read_checkpoint_header(in, path, payload_start);
    std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Checkpoint<T> ck;
    try {
        ck.config = model_config_from_json(header.at("model_config"));
        ck.seed = header.at("seed").get<std::uint64_t>();
        ck.metadata = header.value("metadata", nlohmann::json::object());
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError("checkpoint header: " + std::string(e.what()));
    }
    for (const auto& jt : header.at("tensors")) {
        const std::string name = jt.at("name").get<std::string>();
        const Shape shape = jt.at("shape").get<Shape>();
        const std::string dtype = jt.at("dtype").get<std::string>();
        const std::uint64_t offset = jt.at("offset").get<std::uint64_t>();
        const std::uint64_t nbytes = jt.at("nbytes").get<std::uint64_t>();
        const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
        if (!width) throw FormatError("tensor '" + name + "' has unsupported dtype " + dtype);
        if (nbytes != numerics::shape_size(shape) * width || offset + nbytes > payload.size()) {
            throw FormatError("tensor '" + name + "' payload is truncated or inconsistent");
        }
        const char* bytes = payload.data() + offset;
        Tensor<T> t = width == 4 ? detail::decode_tensor<float, T>(bytes, shape)
                                 : detail::decode_tensor<double, T>(bytes, shape);
        const auto slash = name.find('/');
        if (slash == std::string::npos) {
            ck.params.add(name, std::move(t));
        } else {
            const std::string gname = name.substr(0, slash);
            ParamStore<T>* g = nullptr;
            for (auto& [n, store] : ck.groups)
                if (n == gname) g = &store;
            if (!g) g = &ck.groups.emplace_back(gname, ParamStore<T>{}).second;
            g->add(name.substr(slash + 1), std::move(t));
        }
    }
    if (expected) {
        check_layout(ck.params, *expected);
        if (!(*expected == ck.config)) throw ConfigError("checkpoint model config differs from the requested config");
    } else {
        check_layout(ck.params, ck.config);
    }
    return ck;
}

// Stored dtype without loading the payload.
inline std::string checkpoint_dtype(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    std::uint64_t start = 0;
    const auto header = read_checkpoint_header(in, path, start);
    const auto& tensors = header.at("tensors");
    return tensors.empty() ? "f32" : tensors.front().at("dtype").get<std::string>();
}

template <typename T>
BehrtModel<T> model_from_checkpoint(const Checkpoint<T>& ck) {
    return BehrtModel<T>(ck.config, ck.params);
}

}  // namespace behrt::model
