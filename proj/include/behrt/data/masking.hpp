#pragma once

#include <vector>

#include "behrt/data/sequence.hpp"
#include "behrt/data/vocab.hpp"
#include "behrt/rng.hpp"

namespace behrt::data {

inline constexpr int kIgnoreLabel = -1;

struct MaskedExample {
    std::vector<int> input_ids;   // token ids after modification
    std::vector<int> mlm_labels;  // original id at selected positions, kIgnoreLabel elsewhere

    int num_selected() const {
        int n = 0;
        for (int l : mlm_labels) n += l != kIgnoreLabel;
        return n;
    }
};

struct MaskingOptions {
    double select_p = 0.15;
    double mask_p = 0.8;    // of selected: replace with MASK
    double random_p = 0.1;  // of selected: replace with a uniformly drawn disease
};

// Each disease-token position is selected independently with select_p. Per
// position the draws are: one uniform for selection, then (if selected) one
// uniform for the action, then (if random) one uniform integer over disease ids.
inline MaskedExample mask_sequence(const TokenSequence& seq, int vocab_size, Rng& rng,
                                   const MaskingOptions& opt = {}) {
    MaskedExample ex;
    ex.input_ids = seq.token_ids;
    ex.mlm_labels.assign(seq.size(), kIgnoreLabel);
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const int id = seq.token_ids[t];
        if (seq.pad_mask[t] || !DiseaseVocab::is_disease(id)) continue;
        if (uniform01(rng) >= opt.select_p) continue;
        ex.mlm_labels[t] = id;
        const double u = uniform01(rng);
        if (u < opt.mask_p) {
            ex.input_ids[t] = kMask;
        } else if (u < opt.mask_p + opt.random_p) {
            ex.input_ids[t] = uniform_int(rng, kNumSpecial, vocab_size - 1);
        }
    }
    return ex;
}

}  // namespace behrt::data
