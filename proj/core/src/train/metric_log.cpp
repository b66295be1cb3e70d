// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/train/metric_log.hpp"

#include <cmath>

#include "json.hpp"
#include "mxfp4/error.hpp"

namespace mxfp4::train {

using json = nlohmann::json;

std::string to_json_line(const MetricRecord& r) {
    json j;
    j["step"] = r.step;
    j["metric"] = r.metric;
    j["tensor"] = r.tensor;
    if (r.is_histogram) {
        j["histogram"] = r.histogram;
    } else if (std::isfinite(r.value)) {
        j["value"] = r.value;
    } else {
        // JSON has no infinities; keep them readable and round-trippable.
        j["value"] = std::isnan(r.value) ? "nan" : (r.value > 0 ? "inf" : "-inf");
    }
    return j.dump();
}

MetricRecord parse_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("metric log: ") + e.what());
    }
    if (!j.is_object() || !j.contains("step") || !j["step"].is_number_integer() || !j.contains("metric") ||
        !j["metric"].is_string() || !j.contains("tensor") || !j["tensor"].is_string() ||
        (j.contains("value") == j.contains("histogram")) || j.size() != 4) {
        throw FormatError("metric log: record does not match {step, metric, tensor, value | histogram}");
    }
    MetricRecord r;
    r.step = j["step"].get<std::int64_t>();
    r.metric = j["metric"].get<std::string>();
    r.tensor = j["tensor"].get<std::string>();
    if (j.contains("histogram")) {
        if (!j["histogram"].is_array()) throw FormatError("metric log: histogram must be an array");
        r.is_histogram = true;
        r.histogram = j["histogram"].get<std::vector<double>>();
    } else if (j["value"].is_number()) {
        r.value = j["value"].get<double>();
    } else if (j["value"].is_string()) {
        const auto s = j["value"].get<std::string>();
        if (s == "inf") r.value = INFINITY;
        else if (s == "-inf") r.value = -INFINITY;
        else if (s == "nan") r.value = NAN;
        else throw FormatError("metric log: bad value '" + s + "'");
    } else {
        throw FormatError("metric log: value must be a number");
    }
    return r;
}

std::vector<MetricRecord> read_metric_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open metric log '" + path + "'");
    std::vector<MetricRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(parse_json_line(line));
    }
    return out;
}

MetricLog::MetricLog(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw ConfigError("output.log", "cannot open '" + path + "' for writing");
}

void MetricLog::scalar(std::int64_t step, const std::string& metric, const std::string& tensor, double value) {
    emit({step, metric, tensor, value, {}, false});
}

void MetricLog::histogram(std::int64_t step, const std::string& metric, const std::string& tensor,
                          const std::vector<double>& bins) {
    emit({step, metric, tensor, 0.0, bins, true});
}

void MetricLog::emit(MetricRecord r) {
    if (out_.is_open()) out_ << to_json_line(r) << '\n' << std::flush;
    records_.push_back(std::move(r));
}

}  // namespace mxfp4::train
