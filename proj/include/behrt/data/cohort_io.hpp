#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "behrt/data/record.hpp"
#include "behrt/errors.hpp"

namespace behrt::data {

// One JSON object per line:
//   {"patient_id":"P1","sex":"F","visits":[{"day":0,"age":30,"codes":["D001"]}]}
// Keys are written in this fixed order.
inline std::string to_line(const PatientRecord& r) {
    nlohmann::ordered_json j;
    j["patient_id"] = r.patient_id;
    j["sex"] = to_string(r.sex);
    auto visits = nlohmann::ordered_json::array();
    for (const auto& v : r.visits) {
        nlohmann::ordered_json jv;
        jv["day"] = v.day_offset;
        jv["age"] = v.age_years;
        jv["codes"] = v.codes;
        visits.push_back(std::move(jv));
    }
    j["visits"] = std::move(visits);
    return j.dump();
}

inline PatientRecord parse_line(const std::string& line, std::size_t line_no) {
    try {
        const auto j = nlohmann::json::parse(line);
        PatientRecord r;
        r.patient_id = j.at("patient_id").get<std::string>();
        r.sex = parse_sex(j.at("sex").get<std::string>());
        for (const auto& jv : j.at("visits")) {
            Visit v;
            v.day_offset = jv.at("day").get<int>();
            v.age_years = jv.at("age").get<int>();
            v.codes = jv.at("codes").get<std::vector<std::string>>();
            r.visits.push_back(std::move(v));
        }
        r = drop_empty_visits(std::move(r));
        validate(r);
        return r;
    } catch (const FormatError& e) {
        throw FormatError(e.what(), line_no);
    } catch (const std::exception& e) {
        throw FormatError(std::string("malformed cohort record: ") + e.what(), line_no);
    }
}

inline std::vector<PatientRecord> read_cohort(std::istream& in) {
    std::vector<PatientRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        records.push_back(parse_line(line, line_no));
    }
    return records;
}

inline std::vector<PatientRecord> read_cohort(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open cohort file: " + path);
    return read_cohort(in);
}

inline void write_cohort(std::ostream& out, const std::vector<PatientRecord>& records) {
    for (const auto& r : records) out << to_line(r) << '\n';
}

inline void write_cohort(const std::string& path, const std::vector<PatientRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write cohort file: " + path);
    write_cohort(out, records);
}

}  // namespace behrt::data
