#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "behrt/errors.hpp"

namespace behrt::metrics {

// A metric that is undefined for the given labels (e.g. no positives).
class UndefinedMetric : public Error {
public:
    using Error::Error;
};

struct PrecisionResult {
    double value = 0.0;
    std::size_t true_positives = 0;
    std::size_t predicted_positives = 0;
    bool zero_denominator = false;  // nothing crossed the threshold; value is 0 by convention
};

// TP / predicted-positive at threshold 0.5, pooled over every (probability,
// label) pair given.
inline PrecisionResult precision_at_half(std::span<const double> probs, std::span<const std::uint8_t> labels) {
    if (probs.size() != labels.size()) throw ShapeError("precision_at_half: probs and labels differ in length");
    PrecisionResult r;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] >= 0.5) {
            ++r.predicted_positives;
            r.true_positives += labels[i] != 0;
        }
    }
    r.zero_denominator = r.predicted_positives == 0;
    r.value = r.zero_denominator ? 0.0
                                 : static_cast<double>(r.true_positives) / static_cast<double>(r.predicted_positives);
    return r;
}

inline void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels, const char* what) {
    if (scores.size() != labels.size()) throw ShapeError(std::string(what) + ": scores and labels differ in length");
}

// sum_n (R_n - R_{n-1}) P_n over descending unique score thresholds.
inline double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels, "average_precision");
    const std::size_t n = scores.size();
    std::size_t positives = 0;
    for (auto l : labels) positives += l != 0;
    if (positives == 0) throw UndefinedMetric("average_precision: no positive labels");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0, prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t k = i;
        while (k < n && scores[order[k]] == scores[order[i]]) {
            tp += labels[order[k]] != 0;
            ++k;
        }
        seen = k;
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = k;
    }
    return ap;
}

// P(score of a random positive > score of a random negative), ties counted 1/2.
inline double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels, "auroc");
    const std::size_t n = scores.size();
    std::size_t positives = 0;
    for (auto l : labels) positives += l != 0;
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) throw UndefinedMetric("auroc: labels contain a single class");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Rank-sum with mid-ranks for tied groups.
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t k = i;
        std::size_t pos_in_group = 0;
        while (k < n && scores[order[k]] == scores[order[i]]) {
            pos_in_group += labels[order[k]] != 0;
            ++k;
        }
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + k);
        rank_sum += mid_rank * static_cast<double>(pos_in_group);
        i = k;
    }
    const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

}  // namespace behrt::metrics
