// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/train/experiments.hpp"

#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "mxfp4/error.hpp"

namespace mxfp4::train {

namespace {

template <class F>
double mean_of(const std::vector<RunSummary>& runs, F f) {
    if (runs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : runs) s += f(r);
    return s / static_cast<double>(runs.size());
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

void run_row(ExperimentRow& row, std::size_t index, const ExperimentOptions& opt) {
    try {
        row.config.validate();
    } catch (const ConfigError& e) {
        row.notice = e.what();
        if (opt.progress) opt.progress("skip " + row.label + ": " + row.notice);
        return;
    }
    for (std::uint64_t seed : opt.seeds) {
        TrainConfig cfg = row.config;
        cfg.seed = seed;
        cfg.output = {};
        std::unique_ptr<MetricLog> log;
        if (!opt.log_dir.empty()) {
            std::filesystem::create_directories(opt.log_dir);
            log = std::make_unique<MetricLog>(
                (std::filesystem::path(opt.log_dir) / (std::to_string(index) + "_s" + std::to_string(seed) + ".jsonl"))
                    .string());
        }
        if (opt.progress) opt.progress("run " + row.label + " seed " + std::to_string(seed));
        Trainer tr(cfg, log.get());
        row.runs.push_back(tr.run());
    }
}

}  // namespace

double ExperimentRow::mean_val_accuracy() const {
    return mean_of(runs, [](const RunSummary& r) { return r.val.accuracy; });
}
double ExperimentRow::mean_final_loss() const {
    return mean_of(runs, [](const RunSummary& r) { return r.final_loss; });
}
double ExperimentRow::mean_r_wq() const {
    return mean_of(runs, [](const RunSummary& r) { return r.diagnostics.r_wq; });
}
double ExperimentRow::mean_oscillating_fraction() const {
    return mean_of(runs, [](const RunSummary& r) { return r.diagnostics.oscillating_fraction; });
}

std::string ExperimentTable::to_text() const {
    std::ostringstream out;
    out << title << " (" << seeds.size() << " seed" << (seeds.size() == 1 ? "" : "s") << ")\n";
    char line[256];
    std::snprintf(line, sizeof line, "%-64s %9s %9s %10s %9s\n", "cell", "val_acc", "loss", "r(W^Q)", "osc_frac");
    out << line;
    for (const auto& r : rows) {
        if (r.skipped()) {
            std::snprintf(line, sizeof line, "%-64s skipped: ", r.label.c_str());
            out << line << r.notice << '\n';
            continue;
        }
        std::snprintf(line, sizeof line, "%-64s %9.4f %9.4f %10.6f %9.5f\n", r.label.c_str(), r.mean_val_accuracy(),
                      r.mean_final_loss(), r.mean_r_wq(), r.mean_oscillating_fraction());
        out << line;
    }
    return out.str();
}

std::string ExperimentTable::to_json() const {
    nlohmann::json j;
    j["title"] = title;
    j["seeds"] = seeds;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row;
        row["label"] = r.label;
        row["config"] = nlohmann::json::parse(train::to_json(r.config));
        if (r.skipped()) {
            row["skipped"] = r.notice;
        } else {
            row["mean_val_accuracy"] = r.mean_val_accuracy();
            row["mean_final_loss"] = r.mean_final_loss();
            row["mean_r_wq"] = r.mean_r_wq();
            row["mean_oscillating_fraction"] = r.mean_oscillating_fraction();
            row["runs"] = nlohmann::json::array();
            for (const auto& s : r.runs) {
                row["runs"].push_back({{"val_accuracy", s.val.accuracy},
                                       {"val_loss", s.val.loss},
                                       {"final_loss", s.final_loss},
                                       {"r_w", s.diagnostics.r_w},
                                       {"r_wq", s.diagnostics.r_wq},
                                       {"r_probe", s.diagnostics.r_probe},
                                       {"oscillating_fraction", s.diagnostics.oscillating_fraction}});
            }
        }
        j["rows"].push_back(row);
    }
    return j.dump(2);
}

ExperimentTable run_quantizer_impact(const TrainConfig& base, const ExperimentOptions& opt) {
    ExperimentTable t;
    t.title = "quantizer impact";
    t.seeds = opt.seeds;
    auto add = [&](std::string label, QuantizerMask mask) {
        ExperimentRow row;
        row.label = std::move(label);
        row.config = base;
        row.config.quant.linear.mask = mask;
        t.rows.push_back(std::move(row));
    };
    add("full precision", QuantizerMask::all_off());
    for (int i = 1; i <= 6; ++i) add("Q" + std::to_string(i) + " only", QuantizerMask::only(i));
    add("all quantizers", QuantizerMask::all_on());
    for (std::size_t i = 0; i < t.rows.size(); ++i) run_row(t.rows[i], i, opt);
    return t;
}

std::size_t AblationAxes::cells() const noexcept {
    return rounding.size() * path.size() * scale.size() * format.size() * weight.size() * optimizer.size();
}

AblationAxes parse_grid(const std::string& spec, const TrainConfig& base) {
    AblationAxes a;
    a.rounding = {base.quant.linear.backward_rounding};
    a.path = {base.quant.gradient_path};
    a.scale = {base.quant.linear.scale_rule};
    a.format = {base.quant.linear.forward_format};
    a.weight = {base.weight_quantizer};
    a.optimizer = {base.optimizer};
    for (const std::string& term : split(spec, ';')) {
        if (term == "default") {
            a.rounding = {Rounding::Deterministic, Rounding::Stochastic};
            a.path = {GradientPath::Microscaling, GradientPath::DoubleQuantization};
            a.scale = {ScaleRule::Microscaling, ScaleRule::TruncationFree};
            continue;
        }
        const auto eq = term.find('=');
        if (eq == std::string::npos) throw ConfigError("--grid", "expected axis=values, got '" + term + "'");
        const std::string axis = term.substr(0, eq);
        const auto values = split(term.substr(eq + 1), ',');
        if (values.empty()) throw ConfigError("--grid", "axis '" + axis + "' has no values");
        auto fill = [&](auto& out, auto parse) {
            out.clear();
            for (const auto& v : values) out.push_back(parse(v));
        };
        if (axis == "rounding") {
            fill(a.rounding, parse_rounding);
        } else if (axis == "path") {
            fill(a.path, parse_gradient_path);
        } else if (axis == "scale") {
            fill(a.scale, parse_scale_rule);
        } else if (axis == "format") {
            fill(a.format, [](const std::string& v) {
                try {
                    return parse_format(v);
                } catch (const Error& e) {
                    throw ConfigError("--grid", e.what());
                }
            });
        } else if (axis == "weight") {
            fill(a.weight, [](const std::string& v) {
                if (v == "plain") return WeightQuantizer::Plain;
                if (v == "qema") return WeightQuantizer::QEma;
                throw ConfigError("--grid", "weight must be plain or qema");
            });
        } else if (axis == "optimizer") {
            fill(a.optimizer, [](const std::string& v) {
                if (v == "adamw") return OptimizerKind::AdamW;
                if (v == "qramping") return OptimizerKind::QRamping;
                throw ConfigError("--grid", "optimizer must be adamw or qramping");
            });
        } else {
            throw ConfigError("--grid", "unknown axis '" + axis + "'");
        }
    }
    return a;
}

ExperimentTable run_ablation(const TrainConfig& base, const AblationAxes& axes, const ExperimentOptions& opt) {
    ExperimentTable t;
    t.title = "ablation grid";
    t.seeds = opt.seeds;
    for (Rounding r : axes.rounding)
        for (GradientPath p : axes.path)
            for (ScaleRule s : axes.scale)
                for (FormatId f : axes.format)
                    for (WeightQuantizer w : axes.weight)
                        for (OptimizerKind o : axes.optimizer) {
                            ExperimentRow row;
                            row.config = base;
                            auto& l = row.config.quant.linear;
                            l.backward_rounding = r;
                            l.scale_rule = s;
                            l.forward_format = f;
                            l.grad_format = f;
                            row.config.quant.gradient_path = p;
                            row.config.weight_quantizer = w;
                            row.config.optimizer = o;
                            row.label = std::string(to_string(r)) + " " + to_string(p) + " " + to_string(s) + " " +
                                        std::string(format_of(f).name) + (w == WeightQuantizer::QEma ? " qema" : "") +
                                        (o == OptimizerKind::QRamping ? " qramping" : "");
                            t.rows.push_back(std::move(row));
                        }
    for (std::size_t i = 0; i < t.rows.size(); ++i) run_row(t.rows[i], i, opt);
    return t;
}

}  // namespace mxfp4::train
