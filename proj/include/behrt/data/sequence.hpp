#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "behrt/data/record.hpp"
#include "behrt/data/vocab.hpp"
#include "behrt/errors.hpp"

namespace behrt::data {

enum class PositionMode {
    per_visit,  // CLS = 0, k-th retained visit and its SEP = k
    per_token,  // CLS = 0, then 1, 2, ... for every token
};

inline const char* to_string(PositionMode m) { return m == PositionMode::per_visit ? "per_visit" : "per_token"; }

inline PositionMode parse_position_mode(const std::string& s) {
    if (s == "per_visit") return PositionMode::per_visit;
    if (s == "per_token") return PositionMode::per_token;
    throw ConfigError("position_mode must be per_visit or per_token, got '" + s + "'");
}

enum Segment : int { kSegmentA = 0, kSegmentB = 1 };

// The parallel streams the model consumes. All five have the same length.
struct TokenSequence {
    std::vector<int> token_ids;
    std::vector<int> age_ids;
    std::vector<int> segment_ids;
    std::vector<int> position_ids;
    std::vector<std::uint8_t> pad_mask;  // 1 at padding positions

    int unknown_codes = 0;    // codes replaced by UNK
    int first_visit = 0;      // 0-based index of the oldest retained visit
    int retained_visits = 0;

    std::size_t size() const noexcept { return token_ids.size(); }

    // 1 where the token is real (non-padding); the attention key mask.
    std::vector<std::uint8_t> valid_mask() const {
        std::vector<std::uint8_t> v(pad_mask.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = pad_mask[i] ? 0 : 1;
        return v;
    }

    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// [CLS, v1 codes..., SEP, v2 codes..., SEP, ...]. When the record does not fit
// in max_len, the oldest visits are dropped whole; CLS is always kept. If even
// the most recent visit alone is too long, its leading codes are kept and it is
// still closed by SEP.
inline TokenSequence build_sequence(const PatientRecord& record, const DiseaseVocab& vocab, int max_len,
                                    PositionMode mode = PositionMode::per_visit) {
    if (record.visits.empty()) throw ConfigError("build_sequence: patient " + record.patient_id + " has no visits");
    if (max_len < 3) throw ConfigError("build_sequence: max_len must be at least 3");

    const int n = record.num_visits();
    int first = n;
    int used = 1;  // CLS
    while (first > 0) {
        const int need = static_cast<int>(record.visits[first - 1].codes.size()) + 1;
        if (used + need > max_len) break;
        used += need;
        --first;
    }
    std::size_t last_visit_keep = record.visits.back().codes.size();
    if (first == n) {
        first = n - 1;
        last_visit_keep = static_cast<std::size_t>(max_len - 2);
    }

    TokenSequence seq;
    seq.first_visit = first;
    seq.retained_visits = n - first;
    const int cls_age = record.visits[first].age_years;
    auto push = [&](int token, int age, int segment, int position) {
        seq.token_ids.push_back(token);
        seq.age_ids.push_back(age);
        seq.segment_ids.push_back(segment);
        seq.position_ids.push_back(mode == PositionMode::per_visit ? position
                                                                   : static_cast<int>(seq.position_ids.size()));
        seq.pad_mask.push_back(0);
    };
    push(kCls, cls_age, kSegmentA, 0);
    for (int j = first; j < n; ++j) {
        const Visit& v = record.visits[j];
        const int k = j - first + 1;
        const int segment = (k - 1) % 2 == 0 ? kSegmentA : kSegmentB;
        const std::size_t keep = j == n - 1 ? std::min(last_visit_keep, v.codes.size()) : v.codes.size();
        for (std::size_t c = 0; c < keep; ++c) {
            const int id = vocab.id(v.codes[c]);
            if (id == kUnk) ++seq.unknown_codes;
            push(id, v.age_years, segment, k);
        }
        push(kSep, v.age_years, segment, k);
    }
    return seq;
}

// Right-pads to `length` with PAD tokens (age 0, segment A, position 0).
inline TokenSequence pad_sequence(TokenSequence seq, std::size_t length) {
    if (seq.size() > length) throw ConfigError("pad_sequence: sequence longer than target length");
    while (seq.size() < length) {
        seq.token_ids.push_back(kPad);
        seq.age_ids.push_back(0);
        seq.segment_ids.push_back(kSegmentA);
        seq.position_ids.push_back(0);
        seq.pad_mask.push_back(1);
    }
    return seq;
}

}  // namespace behrt::data
