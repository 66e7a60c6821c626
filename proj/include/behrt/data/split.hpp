#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "behrt/data/record.hpp"
#include "behrt/errors.hpp"
#include "behrt/rng.hpp"

namespace behrt::data {

struct PatientSplit {
    std::vector<std::string> train, val, test;
};

// 80/10/10 by patient: floor(0.8n), floor(0.1n), remainder. Ids are sorted
// before shuffling so the partition does not depend on input order.
inline PatientSplit split_patients(std::vector<std::string> ids, std::uint64_t seed) {
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw ConfigError("split_patients: patient ids must be unique");
    }
    Rng rng = derive_rng(seed, {0x5D117ULL});
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n = ids.size();
    const std::size_t n_train = n * 8 / 10;
    const std::size_t n_val = n / 10;
    PatientSplit s;
    s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                 ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
    return s;
}

struct CohortSplit {
    std::vector<PatientRecord> train, val, test;
};

inline CohortSplit split_cohort(const std::vector<PatientRecord>& cohort, std::uint64_t seed) {
    std::vector<std::string> ids;
    ids.reserve(cohort.size());
    for (const auto& r : cohort) ids.push_back(r.patient_id);
    const PatientSplit s = split_patients(ids, seed);
    const std::unordered_set<std::string> val(s.val.begin(), s.val.end());
    const std::unordered_set<std::string> test(s.test.begin(), s.test.end());
    CohortSplit out;
    for (const auto& r : cohort) {
        if (val.count(r.patient_id)) {
            out.val.push_back(r);
        } else if (test.count(r.patient_id)) {
            out.test.push_back(r);
        } else {
            out.train.push_back(r);
        }
    }
    return out;
}

}  // namespace behrt::data
