#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "behrt/errors.hpp"

namespace behrt::training {

struct MetricRecord {
    long step = 0;
    std::string split;
    std::string metric;
    double value = 0.0;

    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

// Append-only; one tab-separated record per line: step, split, metric, value.
// Values are printed with 17 significant digits so they round-trip exactly.
class MetricLog {
public:
    void append(long step, std::string split, std::string metric, double value) {
        records_.push_back({step, std::move(split), std::move(metric), value});
        if (sink_) {
            *sink_ << format(records_.back()) << '\n';
            sink_->flush();
        }
    }

    // Mirror every later record to a stream.
    void attach(std::ostream* sink) { sink_ = sink; }

    const std::vector<MetricRecord>& records() const noexcept { return records_; }

    std::vector<MetricRecord> select(const std::string& split, const std::string& metric) const {
        std::vector<MetricRecord> out;
        for (const auto& r : records_)
            if (r.split == split && r.metric == metric) out.push_back(r);
        return out;
    }

    static std::string format(const MetricRecord& r) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        return std::to_string(r.step) + '\t' + r.split + '\t' + r.metric + '\t' + buf;
    }

    void write(std::ostream& out) const {
        for (const auto& r : records_) out << format(r) << '\n';
    }

    std::string str() const {
        std::ostringstream out;
        write(out);
        return out.str();
    }

    static MetricLog read(std::istream& in) {
        MetricLog log;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream fields(line);
            MetricRecord r;
            std::string value;
            if (!(fields >> r.step >> r.split >> r.metric >> value)) {
                throw FormatError("metric log record needs four fields", line_no);
            }
            r.value = std::stod(value);
            log.records_.push_back(std::move(r));
        }
        return log;
    }

    friend bool operator==(const MetricLog& a, const MetricLog& b) { return a.records_ == b.records_; }

private:
    std::vector<MetricRecord> records_;
    std::ostream* sink_ = nullptr;
};

}  // namespace behrt::training
