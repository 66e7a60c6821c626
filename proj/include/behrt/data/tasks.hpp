#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "behrt/data/record.hpp"
#include "behrt/data/sequence.hpp"
#include "behrt/data/vocab.hpp"
#include "behrt/errors.hpp"
#include "behrt/rng.hpp"

namespace behrt::data {

enum class Task { mlm, t1, t2, t3 };

inline const char* to_string(Task t) {
    switch (t) {
        case Task::mlm: return "MLM";
        case Task::t1: return "T1";
        case Task::t2: return "T2";
        case Task::t3: return "T3";
    }
    return "?";
}

inline Task parse_task(const std::string& s) {
    if (s == "MLM") return Task::mlm;
    if (s == "T1") return Task::t1;
    if (s == "T2") return Task::t2;
    if (s == "T3") return Task::t3;
    throw ConfigError("unknown task '" + s + "' (expected MLM, T1, T2 or T3)");
}

// Forward window for the calendar tasks: 6 and 12 months.
inline int window_days(Task t) {
    switch (t) {
        case Task::t2: return 183;
        case Task::t3: return 365;
        default: return 0;
    }
}

inline constexpr int kMinVisits = 5;

struct TaskExample {
    TokenSequence input;              // built from visits 1..j
    std::vector<std::uint8_t> label;  // multi-hot over the G diseases
    Task task = Task::t1;
    std::string patient_id;
    int j = 0;  // 1-based index of the last input visit
};

// Multi-hot over disease indices; repeated and unknown codes are ignored.
inline std::vector<std::uint8_t> multi_hot(const DiseaseVocab& vocab, const std::vector<const Visit*>& visits) {
    std::vector<std::uint8_t> label(static_cast<std::size_t>(vocab.num_diseases()), 0);
    for (const Visit* v : visits)
        for (const auto& code : v->codes) {
            const int id = vocab.id(code);
            if (DiseaseVocab::is_disease(id)) label[static_cast<std::size_t>(id - kNumSpecial)] = 1;
        }
    return label;
}

// Largest 1-based visit index with at least `window` days of record after it,
// measured to the last recorded visit; 0 when none.
inline int last_index_with_followup(const PatientRecord& record, int window) {
    const int last_day = record.visits.back().day_offset;
    for (int j = record.num_visits(); j >= 1; --j)
        if (last_day - record.visits[j - 1].day_offset >= window) return j;
    return 0;
}

// Draws the cut index j and builds the (input, label) pair, or nullopt when
// the record has no admissible j for this task.
inline std::optional<TaskExample> make_task_example(const PatientRecord& record, const DiseaseVocab& vocab, Task task,
                                                    int window, Rng& rng, int max_len,
                                                    PositionMode mode = PositionMode::per_visit) {
    const int n = record.num_visits();
    if (n < kMinVisits) {
        throw ConfigError("make_task_example: patient " + record.patient_id + " has " + std::to_string(n) +
                          " visits; at least 5 are required");
    }
    if (task == Task::mlm) throw ConfigError("make_task_example: MLM is not a prediction task");

    int hi = 0;
    if (task == Task::t1) {
        hi = n - 1;
    } else {
        hi = last_index_with_followup(record, window);
        if (hi < 4) return std::nullopt;
    }
    const int j = uniform_int(rng, 4, hi);

    TaskExample ex;
    ex.task = task;
    ex.patient_id = record.patient_id;
    ex.j = j;
    PatientRecord prefix{record.patient_id, record.sex,
                         std::vector<Visit>(record.visits.begin(), record.visits.begin() + j)};
    ex.input = build_sequence(prefix, vocab, max_len, mode);

    std::vector<const Visit*> target;
    if (task == Task::t1) {
        target.push_back(&record.visits[static_cast<std::size_t>(j)]);
    } else {
        const int start = record.visits[static_cast<std::size_t>(j - 1)].day_offset;
        for (int k = j; k < n; ++k) {
            const Visit& v = record.visits[static_cast<std::size_t>(k)];
            if (v.day_offset > start && v.day_offset <= start + window) target.push_back(&v);
        }
    }
    ex.label = multi_hot(vocab, target);
    return ex;
}

struct TaskDataset {
    Task task = Task::t1;
    std::vector<TaskExample> examples;
    int skipped = 0;  // records with no admissible index
};

// One example per patient. Each patient draws from its own stream keyed by
// (seed, patient_id, task), so the result does not depend on record order.
inline TaskDataset build_task_dataset(const std::vector<PatientRecord>& records, const DiseaseVocab& vocab, Task task,
                                      std::uint64_t seed, int max_len, PositionMode mode = PositionMode::per_visit) {
    TaskDataset ds;
    ds.task = task;
    for (const auto& r : records) {
        Rng rng = derive_rng(seed, {hash_string(r.patient_id), static_cast<std::uint64_t>(task)});
        auto ex = make_task_example(r, vocab, task, window_days(task), rng, max_len, mode);
        if (ex) {
            ds.examples.push_back(std::move(*ex));
        } else {
            ++ds.skipped;
        }
    }
    return ds;
}

}  // namespace behrt::data
