#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "behrt/data/masking.hpp"
#include "behrt/errors.hpp"
#include "behrt/numerics/graph.hpp"
#include "behrt/numerics/tensor.hpp"

namespace behrt::training {

using numerics::Graph;
using numerics::Tensor;
using numerics::Var;

// Mean cross-entropy over the positions whose label is not kIgnoreLabel.
template <typename T>
double mlm_loss(const Tensor<T>& logits, std::span<const int> mlm_labels) {
    if (logits.rows() != mlm_labels.size()) throw ShapeError("mlm_loss: one label per logit row required");
    const std::size_t c = logits.cols();
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < mlm_labels.size(); ++t) {
        const int y = mlm_labels[t];
        if (y == data::kIgnoreLabel) continue;
        if (y < 0 || static_cast<std::size_t>(y) >= c) throw ShapeError("mlm_loss: label id out of range");
        const auto row = logits.row(t);
        double mx = row[0];
        for (T v : row) mx = std::max(mx, static_cast<double>(v));
        double z = 0.0;
        for (T v : row) z += std::exp(static_cast<double>(v) - mx);
        total += std::log(z) + mx - static_cast<double>(row[static_cast<std::size_t>(y)]);
        ++count;
    }
    if (count == 0) throw ConfigError("mlm_loss: no masked positions");
    return total / static_cast<double>(count);
}

// Mean over the G labels of the sigmoid binary cross-entropy.
template <typename T>
double multilabel_loss(std::span<const T> logits, std::span<const T> labels) {
    if (logits.size() != labels.size()) throw ShapeError("multilabel_loss: logits and labels differ in length");
    if (logits.empty()) throw ShapeError("multilabel_loss: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = static_cast<double>(logits[i]);
        if (labels[i] == T{1}) {
            total += Graph<double>::softplus(-z);
        } else if (labels[i] == T{0}) {
            total += Graph<double>::softplus(z);
        } else {
            throw ConfigError("multilabel_loss: labels must be 0 or 1");
        }
    }
    return total / static_cast<double>(logits.size());
}

// Graph forms. `scale` turns per-example sums into batch means.
template <typename T>
Var mlm_loss(Graph<T>& g, Var logits, std::span<const int> mlm_labels, T scale) {
    return g.cross_entropy(logits, mlm_labels, scale);
}

template <typename T>
Var multilabel_loss(Graph<T>& g, Var logits, std::span<const T> labels, T scale) {
    return g.bce_with_logits(logits, labels, scale);
}

}  // namespace behrt::training
