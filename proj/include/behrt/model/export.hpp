#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "behrt/data/sequence.hpp"
#include "behrt/data/vocab.hpp"
#include "behrt/model/behrt.hpp"

namespace behrt::model {

inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// "CODE@AGE" for every position of the sequence, in token order.
inline std::vector<std::string> token_labels(const data::TokenSequence& seq, const data::DiseaseVocab& vocab) {
    std::vector<std::string> labels;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        labels.push_back(vocab.token(seq.token_ids[t]) + "@" + std::to_string(seq.age_ids[t]));
    }
    return labels;
}

// Tab-separated grid: header row of key labels, then one row per query token.
template <typename T>
void write_attention_grid(std::ostream& out, const Tensor<T>& grid, const std::vector<std::string>& labels) {
    const std::size_t m = grid.dim(0);
    if (grid.dim(1) != m || labels.size() != m) throw ShapeError("attention grid and labels disagree in size");
    out << "query\\key";
    for (const auto& l : labels) out << '\t' << l;
    out << '\n';
    for (std::size_t i = 0; i < m; ++i) {
        out << labels[i];
        for (std::size_t j = 0; j < m; ++j) out << '\t' << format_value(static_cast<double>(grid(i, j)));
        out << '\n';
    }
}

// One row per disease (G rows): code then the H embedding coordinates.
template <typename T>
void write_disease_embeddings(std::ostream& out, const BehrtModel<T>& model, const data::DiseaseVocab& vocab) {
    const auto& table = model.params().at("embeddings.disease");
    const std::size_t h = table.cols();
    out << "code";
    for (std::size_t k = 0; k < h; ++k) out << "\tdim" << k;
    out << '\n';
    for (int d = 0; d < vocab.num_diseases(); ++d) {
        out << vocab.code(d);
        const auto row = table.row(static_cast<std::size_t>(d + data::kNumSpecial));
        for (std::size_t k = 0; k < h; ++k) out << '\t' << format_value(static_cast<double>(row[k]));
        out << '\n';
    }
}

}  // namespace behrt::model
