#pragma once

#include <string>
#include <vector>

#include "behrt/errors.hpp"

namespace behrt::data {

enum class Sex { female, male };

inline const char* to_string(Sex s) { return s == Sex::female ? "F" : "M"; }

inline Sex parse_sex(const std::string& s) {
    if (s == "F") return Sex::female;
    if (s == "M") return Sex::male;
    throw ConfigError("sex must be F or M, got '" + s + "'");
}

struct Visit {
    int day_offset = 0;  // days since the patient's first record
    int age_years = 0;
    std::vector<std::string> codes;

    friend bool operator==(const Visit&, const Visit&) = default;
};

struct PatientRecord {
    std::string patient_id;
    Sex sex = Sex::female;
    std::vector<Visit> visits;

    int num_visits() const noexcept { return static_cast<int>(visits.size()); }

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

// Throws when visits are out of order or a visit carries no diagnosis.
inline void validate(const PatientRecord& record) {
    for (std::size_t j = 0; j < record.visits.size(); ++j) {
        const Visit& v = record.visits[j];
        if (v.codes.empty()) {
            throw FormatError("patient " + record.patient_id + ": visit " + std::to_string(j + 1) +
                              " has no diagnoses");
        }
        if (j > 0) {
            const Visit& prev = record.visits[j - 1];
            if (v.day_offset < prev.day_offset || v.age_years < prev.age_years) {
                throw FormatError("patient " + record.patient_id + ": visits are not chronological at visit " +
                                  std::to_string(j + 1));
            }
        }
    }
}

// Visits lacking diagnoses are removed at ingestion.
inline PatientRecord drop_empty_visits(PatientRecord record) {
    std::erase_if(record.visits, [](const Visit& v) { return v.codes.empty(); });
    return record;
}

}  // namespace behrt::data
