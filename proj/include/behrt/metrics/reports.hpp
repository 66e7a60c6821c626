#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "behrt/errors.hpp"
#include "behrt/metrics/ranking.hpp"

namespace behrt::metrics {

// One patient's predicted scores and true multi-hot labels over the G diseases.
struct PredictionVector {
    std::string patient_id;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
};

struct PatientReport {
    double mean_aps = 0.0;
    double mean_auroc = 0.0;
    std::size_t patients_used = 0;
    std::size_t skipped = 0;  // patients for which APS or AUROC is undefined
};

// APS and AUROC per patient over its G-length vector, then unweighted means.
inline PatientReport per_patient_report(const std::vector<PredictionVector>& predictions) {
    if (predictions.empty()) throw ConfigError("per_patient_report: no predictions");
    PatientReport r;
    double sum_aps = 0.0, sum_auc = 0.0;
    for (const auto& p : predictions) {
        double aps, auc;
        try {
            aps = average_precision(p.scores, p.labels);
            auc = auroc(p.scores, p.labels);
        } catch (const UndefinedMetric&) {
            ++r.skipped;
            continue;
        }
        sum_aps += aps;
        sum_auc += auc;
        ++r.patients_used;
    }
    if (r.patients_used == 0) throw UndefinedMetric("per_patient_report: every patient was skipped");
    r.mean_aps = sum_aps / static_cast<double>(r.patients_used);
    r.mean_auroc = sum_auc / static_cast<double>(r.patients_used);
    return r;
}

struct DiseaseRow {
    int disease = 0;  // 0-based disease index
    double aps = 0.0;
    double auroc = 0.0;
    double prevalence = 0.0;  // positives / patients
    std::size_t positives = 0;
};

struct DiseaseReport {
    std::vector<DiseaseRow> rows;  // ascending disease index
    std::size_t omitted = 0;       // below min_prevalence or single-class
};

// Column i of the score/label matrix, across patients.
inline DiseaseReport per_disease_report(const std::vector<PredictionVector>& predictions, double min_prevalence = 0.01) {
    DiseaseReport r;
    if (predictions.empty()) return r;
    const std::size_t g = predictions.front().labels.size();
    const std::size_t n = predictions.size();
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < g; ++i) {
        std::size_t pos = 0;
        for (std::size_t p = 0; p < n; ++p) {
            if (predictions[p].labels.size() != g || predictions[p].scores.size() != g) {
                throw ShapeError("per_disease_report: prediction vectors differ in length");
            }
            scores[p] = predictions[p].scores[i];
            labels[p] = predictions[p].labels[i];
            pos += labels[p] != 0;
        }
        const double prevalence = static_cast<double>(pos) / static_cast<double>(n);
        if (pos == 0 || pos == n || prevalence < min_prevalence) {
            ++r.omitted;
            continue;
        }
        r.rows.push_back({static_cast<int>(i), average_precision(scores, labels), auroc(scores, labels), prevalence, pos});
    }
    return r;
}

inline std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Summary table: one row per (model, task).
inline void write_summary_header(std::ostream& out) { out << "Model\tTask\tAPS\tAUROC\tPatients\tSkipped\n"; }

inline void write_summary_row(std::ostream& out, const std::string& model, const std::string& task,
                              const PatientReport& r) {
    out << model << '\t' << task << '\t' << fixed6(r.mean_aps) << '\t' << fixed6(r.mean_auroc) << '\t'
        << r.patients_used << '\t' << r.skipped << '\n';
}

struct DiseaseLabel {
    std::string code;
    std::string description;
    std::string chapter;
};

inline constexpr const char* kDiseaseReportHeader = "Code\tAPS\tAUROC\tDescription\tRatio\tChapter";

// Per-disease table, grouped by chapter and ordered by APS within a chapter.
inline void write_disease_report(std::ostream& out, const DiseaseReport& report,
                                 const std::vector<DiseaseLabel>& labels) {
    std::vector<DiseaseRow> rows = report.rows;
    auto chapter = [&](const DiseaseRow& r) -> const std::string& {
        return labels.at(static_cast<std::size_t>(r.disease)).chapter;
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const DiseaseRow& a, const DiseaseRow& b) {
        if (chapter(a) != chapter(b)) return chapter(a) < chapter(b);
        return a.aps < b.aps;
    });
    out << kDiseaseReportHeader << '\n';
    for (const auto& r : rows) {
        const auto& l = labels.at(static_cast<std::size_t>(r.disease));
        out << l.code << '\t' << fixed6(r.aps) << '\t' << fixed6(r.auroc) << '\t' << l.description << '\t'
            << fixed6(r.prevalence) << '\t' << l.chapter << '\n';
    }
}

}  // namespace behrt::metrics
