// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/train/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mxfp4/error.hpp"

namespace mxfp4::train {

using json = nlohmann::json;

namespace {

// Reads typed fields out of one JSON object and remembers which keys were
// consumed, so leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

    const json* find(const std::string& name) {
        seen_.insert(name);
        auto it = obj_.find(name);
        return it == obj_.end() ? nullptr : &*it;
    }

    template <class T>
    void get(const std::string& name, T& out) {
        const json* v = find(name);
        if (v == nullptr) return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v->is_boolean()) throw ConfigError(key(name), "expected a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v->is_number_integer()) throw ConfigError(key(name), "expected an integer");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v->is_number()) throw ConfigError(key(name), "expected a number");
            } else {
                if (!v->is_string()) throw ConfigError(key(name), "expected a string");
            }
            out = v->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(key(name), e.what());
        }
    }

    std::optional<ObjectReader> child(const std::string& name) {
        const json* v = find(name);
        if (v == nullptr) return std::nullopt;
        return ObjectReader(*v, key(name));
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(key(it.key()), "unknown key");
        }
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
auto with_key(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(key, e.what());
    }
}

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
}

}  // namespace

ScaleRule parse_scale_rule(const std::string& s) {
    if (s == "truncation_free") return ScaleRule::TruncationFree;
    if (s == "microscaling") return ScaleRule::Microscaling;
    throw ConfigError("scale_rule", "expected truncation_free or microscaling, got '" + s + "'");
}

Rounding parse_rounding(const std::string& s) {
    if (s == "deterministic") return Rounding::Deterministic;
    if (s == "stochastic") return Rounding::Stochastic;
    throw ConfigError("rounding", "expected deterministic or stochastic, got '" + s + "'");
}

GradientPath parse_gradient_path(const std::string& s) {
    if (s == "double_quantization") return GradientPath::DoubleQuantization;
    if (s == "microscaling") return GradientPath::Microscaling;
    throw ConfigError("gradient_path", "expected double_quantization or microscaling, got '" + s + "'");
}

Axis parse_axis(const std::string& s) {
    if (s == "row" || s == "rows" || s == "0") return Axis::RowGroups;
    if (s == "col" || s == "cols" || s == "1") return Axis::ColGroups;
    throw ConfigError("axis", "expected row or col, got '" + s + "'");
}

const char* to_string(ScaleRule r) noexcept {
    return r == ScaleRule::TruncationFree ? "truncation_free" : "microscaling";
}
const char* to_string(Rounding r) noexcept {
    return r == Rounding::Deterministic ? "deterministic" : "stochastic";
}
const char* to_string(GradientPath p) noexcept {
    return p == GradientPath::DoubleQuantization ? "double_quantization" : "microscaling";
}

void ModelConfig::validate() const {
    require(depth >= 1, "model.depth", "must be >= 1");
    require(width >= 32, "model.width", "must be >= 32");
    require(heads >= 1 && width % heads == 0, "model.width,model.heads", "width must be divisible by heads");
    require(mlp_ratio >= 1, "model.mlp_ratio", "must be >= 1");
    require(tokens >= 1, "model.tokens", "must be >= 1");
    require(patch_dim >= 1, "model.patch_dim", "must be >= 1");
    require(classes >= 2, "model.classes", "must be >= 2");
    if (!ragged) {
        require(width % 32 == 0, "model.width,model.ragged",
                "quantized dimensions must be multiples of 32 unless ragged groups are enabled");
    }
}

void DataConfig::validate(const ModelConfig&) const {
    if (kind == DataKind::File) {
        require(!path.empty(), "data.path", "file datasets need a path");
        return;
    }
    require(train_size >= 1, "data.train_size", "must be >= 1");
    require(val_size >= 1, "data.val_size", "must be >= 1");
    require(separation > 0.0 && std::isfinite(separation), "data.separation", "must be > 0");
    require(noise >= 0.0 && std::isfinite(noise), "data.noise", "must be >= 0");
}

double ScheduleConfig::lr_at(int step) const noexcept {
    if (step < warmup_steps) return lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const int decay = steps - warmup_steps;
    if (decay <= 0) return lr;
    const double p = std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay));
    return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * p));
}

void ScheduleConfig::validate() const {
    require(steps >= 1, "train.steps", "must be >= 1");
    require(batch_size >= 1, "train.batch_size", "must be >= 1");
    require(lr > 0.0 && std::isfinite(lr), "train.lr", "must be > 0");
    require(warmup_steps >= 0 && warmup_steps < steps, "train.warmup_steps", "must be in [0, steps)");
    require(eval_every >= 0, "train.eval_every", "must be >= 0");
    require(log_every >= 0, "train.log_every", "must be >= 0");
    require(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0, "train.beta1", "must be in [0, 1)");
    require(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0, "train.beta2", "must be in [0, 1)");
    require(adamw.eps > 0.0, "train.eps", "must be > 0");
    require(adamw.weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
}

bool TrainConfig::uses_stochastic_rounding() const noexcept {
    const auto& l = quant.linear;
    if (l.backward_rounding != Rounding::Stochastic) return false;
    for (int i = 3; i <= 6; ++i) {
        if (l.mask.on(i)) return true;
    }
    return false;
}

void TrainConfig::validate() const {
    model.validate();
    data.validate(model);
    schedule.validate();
    if (uses_stochastic_rounding() && !seed) {
        throw ConfigError("seed,quant.backward_rounding", "a seed is required for stochastic rounding");
    }
    if (weight_quantizer == WeightQuantizer::QEma) {
        require(ema_beta >= 0.0 && ema_beta < 1.0, "quantizer.qema.beta", "must be in [0, 1)");
        require(quant.linear.mask.on(2), "quantizer.weight,quant.mask",
                "the EMA weight quantizer replaces Q2, which is disabled");
        require(optimizer != OptimizerKind::QRamping, "quantizer.weight,optimizer.kind",
                "the EMA quantizer and the ramping optimizer cannot be combined");
    }
    if (optimizer == OptimizerKind::QRamping) {
        ramping.validate();
        require(ramping.t0 <= schedule.steps, "optimizer.qramping.t0,train.steps",
                "detection window longer than the run");
    }
    switch (baseline.kind) {
        case BaselineKind::None:
            break;
        case BaselineKind::Dampen:
            require(baseline.lambda >= 0.0 && std::isfinite(baseline.lambda), "baseline.lambda", "must be >= 0");
            break;
        case BaselineKind::Freeze:
            require(baseline.momentum > 0.0 && baseline.momentum < 1.0, "baseline.momentum", "must be in (0, 1)");
            require(baseline.f_th >= 0.0, "baseline.f_th", "must be >= 0");
            require(baseline.warmup_fraction >= 0.0 && baseline.warmup_fraction <= 1.0,
                    "baseline.warmup_fraction", "must be in [0, 1]");
            break;
    }
    if (baseline.kind != BaselineKind::None) {
        require(quant.linear.mask.on(2), "baseline.kind,quant.mask", "baselines act on Q2 weights, which are disabled");
    }
    require(diagnostics.window >= 1, "diagnostics.window", "must be >= 1");
    require(diagnostics.probe_block >= -1 && diagnostics.probe_block < model.depth, "diagnostics.probe_block",
            "must name a block or be -1");
    require(diagnostics.confidence_bins >= 1, "diagnostics.confidence_bins", "must be >= 1");
    require(diagnostics.timeline_every == 0 || diagnostics.timeline_every >= diagnostics.window,
            "diagnostics.timeline_every,diagnostics.window", "timeline windows must not overlap");
}

TrainConfig parse_config(const std::string& json_text, bool validate) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    TrainConfig cfg;
    ObjectReader r(root, "");
    if (const json* s = r.find("seed")) {
        require(s->is_number_unsigned() || (s->is_number_integer() && s->get<std::int64_t>() >= 0), "seed",
                "expected a non-negative integer");
        cfg.seed = s->get<std::uint64_t>();
    }
    if (auto m = r.child("model")) {
        m->get("depth", cfg.model.depth);
        m->get("width", cfg.model.width);
        m->get("heads", cfg.model.heads);
        m->get("mlp_ratio", cfg.model.mlp_ratio);
        m->get("tokens", cfg.model.tokens);
        m->get("patch_dim", cfg.model.patch_dim);
        m->get("classes", cfg.model.classes);
        m->get("ragged", cfg.model.ragged);
        m->finish();
    }
    if (auto d = r.child("data")) {
        std::string kind = "synthetic";
        d->get("kind", kind);
        require(kind == "synthetic" || kind == "file", "data.kind", "expected synthetic or file");
        cfg.data.kind = kind == "file" ? DataKind::File : DataKind::Synthetic;
        d->get("train_size", cfg.data.train_size);
        d->get("val_size", cfg.data.val_size);
        d->get("separation", cfg.data.separation);
        d->get("noise", cfg.data.noise);
        d->get("path", cfg.data.path);
        d->finish();
    }
    if (auto t = r.child("train")) {
        auto& s = cfg.schedule;
        t->get("steps", s.steps);
        t->get("batch_size", s.batch_size);
        t->get("lr", s.lr);
        t->get("warmup_steps", s.warmup_steps);
        t->get("eval_every", s.eval_every);
        t->get("log_every", s.log_every);
        t->get("weight_decay", s.adamw.weight_decay);
        t->get("beta1", s.adamw.beta1);
        t->get("beta2", s.adamw.beta2);
        t->get("eps", s.adamw.eps);
        t->finish();
    }
    if (auto q = r.child("quant")) {
        auto& l = cfg.quant.linear;
        std::string mask = l.mask.to_string(), fmt = "e2m1", gfmt, rule = to_string(l.scale_rule),
                    rounding = to_string(l.backward_rounding), path = to_string(cfg.quant.gradient_path);
        q->get("mask", mask);
        q->get("format", fmt);
        q->get("grad_format", gfmt);
        q->get("scale_rule", rule);
        q->get("backward_rounding", rounding);
        q->get("gradient_path", path);
        q->finish();
        l.mask = with_key("quant.mask", [&] { return QuantizerMask::parse(mask); });
        l.forward_format = with_key("quant.format", [&] { return parse_format(fmt); });
        l.grad_format = gfmt.empty() ? l.forward_format : with_key("quant.grad_format", [&] { return parse_format(gfmt); });
        l.scale_rule = with_key("quant.scale_rule", [&] { return parse_scale_rule(rule); });
        l.backward_rounding = with_key("quant.backward_rounding", [&] { return parse_rounding(rounding); });
        cfg.quant.gradient_path = with_key("quant.gradient_path", [&] { return parse_gradient_path(path); });
    }
    if (auto q = r.child("quantizer")) {
        std::string weight = "plain";
        q->get("weight", weight);
        require(weight == "plain" || weight == "qema", "quantizer.weight", "expected plain or qema");
        cfg.weight_quantizer = weight == "qema" ? WeightQuantizer::QEma : WeightQuantizer::Plain;
        if (auto e = q->child("qema")) {
            e->get("beta", cfg.ema_beta);
            e->finish();
        }
        q->finish();
    }
    if (auto o = r.child("optimizer")) {
        std::string kind = "adamw";
        o->get("kind", kind);
        require(kind == "adamw" || kind == "qramping", "optimizer.kind", "expected adamw or qramping");
        cfg.optimizer = kind == "qramping" ? OptimizerKind::QRamping : OptimizerKind::AdamW;
        if (auto q = o->child("qramping")) {
            q->get("k1", cfg.ramping.k1);
            q->get("k2", cfg.ramping.k2);
            q->get("n_max", cfg.ramping.n_max);
            q->get("t0", cfg.ramping.t0);
            q->get("t_update", cfg.ramping.t_update);
            q->finish();
        }
        o->finish();
    }
    if (auto b = r.child("baseline")) {
        std::string kind = "none";
        b->get("kind", kind);
        require(kind == "none" || kind == "dampen" || kind == "freeze", "baseline.kind",
                "expected none, dampen or freeze");
        cfg.baseline.kind = kind == "dampen"   ? BaselineKind::Dampen
                            : kind == "freeze" ? BaselineKind::Freeze
                                               : BaselineKind::None;
        b->get("lambda", cfg.baseline.lambda);
        b->get("f_th", cfg.baseline.f_th);
        b->get("momentum", cfg.baseline.momentum);
        b->get("warmup_fraction", cfg.baseline.warmup_fraction);
        b->finish();
    }
    if (auto d = r.child("diagnostics")) {
        d->get("enabled", cfg.diagnostics.enabled);
        d->get("window", cfg.diagnostics.window);
        d->get("probe_block", cfg.diagnostics.probe_block);
        d->get("confidence_bins", cfg.diagnostics.confidence_bins);
        d->get("timeline_every", cfg.diagnostics.timeline_every);
        d->finish();
    }
    if (auto o = r.child("output")) {
        o->get("log", cfg.output.log);
        o->get("checkpoint", cfg.output.checkpoint);
        o->finish();
    }
    r.finish();
    if (validate) cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::string& path, bool validate) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), validate);
}

std::string to_json(const TrainConfig& c) {
    json j;
    if (c.seed) j["seed"] = *c.seed;
    j["model"] = {{"depth", c.model.depth},         {"width", c.model.width},   {"heads", c.model.heads},
                  {"mlp_ratio", c.model.mlp_ratio}, {"tokens", c.model.tokens}, {"patch_dim", c.model.patch_dim},
                  {"classes", c.model.classes},     {"ragged", c.model.ragged}};
    j["data"] = {{"kind", c.data.kind == DataKind::File ? "file" : "synthetic"},
                 {"train_size", c.data.train_size},
                 {"val_size", c.data.val_size},
                 {"separation", c.data.separation},
                 {"noise", c.data.noise},
                 {"path", c.data.path}};
    const auto& s = c.schedule;
    j["train"] = {{"steps", s.steps},
                  {"batch_size", s.batch_size},
                  {"lr", s.lr},
                  {"warmup_steps", s.warmup_steps},
                  {"eval_every", s.eval_every},
                  {"log_every", s.log_every},
                  {"weight_decay", s.adamw.weight_decay},
                  {"beta1", s.adamw.beta1},
                  {"beta2", s.adamw.beta2},
                  {"eps", s.adamw.eps}};
    const auto& l = c.quant.linear;
    j["quant"] = {{"mask", l.mask.to_string()},
                  {"format", std::string(format_of(l.forward_format).name)},
                  {"grad_format", std::string(format_of(l.grad_format).name)},
                  {"scale_rule", to_string(l.scale_rule)},
                  {"backward_rounding", to_string(l.backward_rounding)},
                  {"gradient_path", to_string(c.quant.gradient_path)}};
    j["quantizer"] = {{"weight", c.weight_quantizer == WeightQuantizer::QEma ? "qema" : "plain"},
                      {"qema", {{"beta", c.ema_beta}}}};
    j["optimizer"] = {{"kind", c.optimizer == OptimizerKind::QRamping ? "qramping" : "adamw"},
                      {"qramping",
                       {{"k1", c.ramping.k1},
                        {"k2", c.ramping.k2},
                        {"n_max", c.ramping.n_max},
                        {"t0", c.ramping.t0},
                        {"t_update", c.ramping.t_update}}}};
    const char* bk = c.baseline.kind == BaselineKind::Dampen   ? "dampen"
                     : c.baseline.kind == BaselineKind::Freeze ? "freeze"
                                                               : "none";
    j["baseline"] = {{"kind", bk},
                     {"lambda", c.baseline.lambda},
                     {"f_th", c.baseline.f_th},
                     {"momentum", c.baseline.momentum},
                     {"warmup_fraction", c.baseline.warmup_fraction}};
    j["diagnostics"] = {{"enabled", c.diagnostics.enabled},
                        {"window", c.diagnostics.window},
                        {"probe_block", c.diagnostics.probe_block},
                        {"confidence_bins", c.diagnostics.confidence_bins},
                        {"timeline_every", c.diagnostics.timeline_every}};
    j["output"] = {{"log", c.output.log}, {"checkpoint", c.output.checkpoint}};
    return j.dump(2);
}

}  // namespace mxfp4::train
