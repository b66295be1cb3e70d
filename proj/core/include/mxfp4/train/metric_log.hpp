// SPDX-License-Identifier: Apache-2.0
//
// JSON-lines metric log. One object per line:
//
//   {"step": 120, "metric": "loss", "tensor": "", "value": 0.42}
//   {"step": 800, "metric": "confidence_hist", "tensor": "model", "histogram": [3, 9, ...]}
//
// `tensor` names the parameter a diagnostic belongs to, "model" for
// aggregates and "" for run-level scalars. Records are appended in step
// order; the log carries no timestamps, so equal runs give equal files.
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace mxfp4::train {

struct MetricRecord {
    std::int64_t step = 0;
    std::string metric;
    std::string tensor;
    double value = 0.0;
    std::vector<double> histogram;  // set instead of value when non-empty
    bool is_histogram = false;
};

std::string to_json_line(const MetricRecord& r);
// Throws FormatError when the line does not match the schema.
MetricRecord parse_json_line(const std::string& line);
std::vector<MetricRecord> read_metric_log(const std::string& path);

class MetricLog {
public:
    MetricLog() = default;  // in-memory only
    explicit MetricLog(const std::string& path);

    void scalar(std::int64_t step, const std::string& metric, const std::string& tensor, double value);
    void histogram(std::int64_t step, const std::string& metric, const std::string& tensor,
                   const std::vector<double>& bins);

    const std::vector<MetricRecord>& records() const noexcept { return records_; }

private:
    void emit(MetricRecord r);

    std::ofstream out_;
    std::vector<MetricRecord> records_;
};

}  // namespace mxfp4::train
