#pragma once

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "behrt/errors.hpp"

namespace behrt::data {

// Special tokens occupy ids 0..4; disease i (0-based) has id i + kNumSpecial.
enum SpecialToken : int { kCls = 0, kSep = 1, kMask = 2, kPad = 3, kUnk = 4 };
inline constexpr int kNumSpecial = 5;

inline const char* special_name(int id) {
    static const char* names[] = {"CLS", "SEP", "MASK", "PAD", "UNK"};
    return id >= 0 && id < kNumSpecial ? names[id] : "?";
}

class DiseaseVocab {
public:
    DiseaseVocab() = default;

    explicit DiseaseVocab(std::vector<std::string> codes) : codes_(std::move(codes)) {
        if (codes_.empty()) throw ConfigError("vocabulary must contain at least one disease code");
        for (std::size_t i = 0; i < codes_.size(); ++i) {
            if (codes_[i].empty()) throw ConfigError("empty disease code in vocabulary");
            if (!index_.emplace(codes_[i], static_cast<int>(i) + kNumSpecial).second) {
                throw ConfigError("duplicate disease code in vocabulary: " + codes_[i]);
            }
        }
    }

    // G, the number of diseases.
    int num_diseases() const noexcept { return static_cast<int>(codes_.size()); }
    // Token vocabulary size including the special tokens.
    int size() const noexcept { return num_diseases() + kNumSpecial; }

    bool contains(const std::string& code) const { return index_.count(code) != 0; }

    // Token id for a code, or kUnk.
    int id(const std::string& code) const {
        auto it = index_.find(code);
        return it == index_.end() ? kUnk : it->second;
    }

    static bool is_disease(int id) noexcept { return id >= kNumSpecial; }

    // Code for a token id; special tokens map to their names.
    std::string token(int id) const {
        if (id < kNumSpecial) return special_name(id);
        return codes_.at(static_cast<std::size_t>(id - kNumSpecial));
    }

    const std::string& code(int disease_index) const { return codes_.at(static_cast<std::size_t>(disease_index)); }
    const std::vector<std::string>& codes() const noexcept { return codes_; }

    friend bool operator==(const DiseaseVocab& a, const DiseaseVocab& b) { return a.codes_ == b.codes_; }

private:
    std::vector<std::string> codes_;
    std::unordered_map<std::string, int> index_;
};

// One code per line; the code on 0-based line n has token id n + 5.
inline DiseaseVocab read_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vocabulary file: " + path);
    std::vector<std::string> codes;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        codes.push_back(line);
    }
    return DiseaseVocab(std::move(codes));
}

inline void write_vocab(const std::string& path, const DiseaseVocab& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write vocabulary file: " + path);
    for (const auto& c : vocab.codes()) out << c << '\n';
}

}  // namespace behrt::data
