// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/train/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <string>

#include "json.hpp"
#include "mxfp4/container.hpp"
#include "mxfp4/error.hpp"

namespace mxfp4::train {

using json = nlohmann::json;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kEvalChunk = 256;

AdamWParams param_adamw(const Parameter& p, const AdamWParams& base) {
    AdamWParams a = base;
    if (!p.decay) a.weight_decay = 0.0;
    return a;
}

}  // namespace

struct Trainer::Diagnostics {
    bool active = false;
    TrajectoryTracker tracker;
    std::vector<ChangeRateAccumulator> r_w, r_wq;  // per quantized weight
    ChangeRateAccumulator r_probe;
};

Trainer::Trainer(TrainConfig cfg, MetricLog* log)
    : Trainer(cfg, std::make_shared<const Dataset>(make_dataset(cfg)), log) {}

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<const Dataset> data, MetricLog* log)
    : cfg_(std::move(cfg)), data_(std::move(data)), log_(log), model_(cfg_.model, cfg_.seed_or_zero()) {
    cfg_.validate();
    if (data_->dim != cfg_.model.input_dim() || data_->classes != cfg_.model.classes) {
        throw ConfigError("model.tokens,model.patch_dim,model.classes", "dataset shape does not match the model");
    }
    init();
}

Trainer::~Trainer() = default;
Trainer::Trainer(Trainer&&) noexcept = default;
Trainer& Trainer::operator=(Trainer&&) noexcept = default;

void Trainer::init() {
    auto& params = model_.params();
    adam_.clear();
    for (const auto& p : params) adam_.emplace_back(p.value.size(), param_adamw(p, cfg_.schedule.adamw));
    ramp_.assign(params.size(), RampingAdamW{});
    ema_.assign(params.size(), EmaState{});
    flips_.assign(params.size(), FlipFrequency{});
    freeze_avg_.assign(params.size(), {});
    freeze_prev_.assign(params.size(), {});
    frozen_.assign(params.size(), {});
    for (std::size_t i : model_.quantized()) {
        const Parameter& p = params[i];
        if (cfg_.optimizer == OptimizerKind::QRamping) {
            ramp_[i] = RampingAdamW(p.value.size(), param_adamw(p, cfg_.schedule.adamw));
        }
        if (cfg_.weight_quantizer == WeightQuantizer::QEma) ema_[i] = EmaState(p.value, cfg_.ema_beta);
        if (cfg_.baseline.kind == BaselineKind::Freeze) {
            flips_[i] = FlipFrequency(p.value.size(), cfg_.baseline.momentum);
            const Matrix wq = quantize_weight(p.value, cfg_.quant.linear).values;
            freeze_avg_[i].assign(wq.values().begin(), wq.values().end());
            freeze_prev_[i] = freeze_avg_[i];
            frozen_[i].assign(p.value.size(), 0);
        }
    }
    const std::size_t probe_rows = std::min<std::size_t>(static_cast<std::size_t>(cfg_.schedule.batch_size),
                                                         data_->val.size());
    probe_batch_ = slice(data_->val, 0, probe_rows);
    diag_ = std::make_unique<Diagnostics>();
}

StepContext Trainer::context(std::uint32_t step) const {
    StepContext ctx;
    ctx.quant = cfg_.quant;
    ctx.seed = cfg_.seed_or_zero();
    ctx.step = step;
    if (cfg_.weight_quantizer == WeightQuantizer::QEma) {
        ctx.ema.assign(model_.params().size(), nullptr);
        for (std::size_t i : model_.quantized()) ctx.ema[i] = &ema_[i].w_ema;
    }
    return ctx;
}

std::size_t Trainer::frozen_count() const noexcept {
    std::size_t n = 0;
    for (const auto& f : frozen_) n += static_cast<std::size_t>(std::count(f.begin(), f.end(), std::uint8_t{1}));
    return n;
}

void Trainer::snapshot(std::vector<double>& masters, std::vector<double>& quantized) const {
    masters.clear();
    quantized.clear();
    const auto& params = model_.params();
    for (std::size_t i : model_.quantized()) {
        const Matrix* ema = cfg_.weight_quantizer == WeightQuantizer::QEma ? &ema_[i].w_ema : nullptr;
        const Matrix wq = quantize_weight(params[i].value, cfg_.quant.linear, ema).values;
        masters.insert(masters.end(), params[i].value.values().begin(), params[i].value.values().end());
        quantized.insert(quantized.end(), wq.values().begin(), wq.values().end());
    }
}

std::vector<double> Trainer::latents() const {
    std::vector<double> out;
    const Fp4Format& fmt = format_of(cfg_.quant.linear.forward_format);
    for (std::size_t i : model_.quantized()) {
        const Matrix& w = model_.params()[i].value;
        const Matrix* ema = cfg_.weight_quantizer == WeightQuantizer::QEma ? &ema_[i].w_ema : nullptr;
        const QuantizedWeight qw = quantize_weight(w, cfg_.quant.linear, ema);
        if (!qw.blocks) continue;
        // Baseline scaling can push latents past Qp; they saturate there.
        for (double l : latent_weights(transpose(w), *qw.blocks)) out.push_back(std::clamp(l, fmt.q_neg, fmt.q_pos));
    }
    return out;
}

double dampen_penalty(std::span<const double> w, std::span<const double> wq, double lambda,
                      std::span<double> grad) {
    if (wq.size() != w.size() || grad.size() != w.size()) throw ContractError("dampen_penalty: shape mismatch");
    double loss = 0.0;
    for (std::size_t e = 0; e < w.size(); ++e) {
        const double d = w[e] - wq[e];
        loss += lambda * d * d;
        grad[e] += 2.0 * lambda * d;
    }
    return loss;
}

void Trainer::train_step(double lr) {
    const auto t = static_cast<std::uint32_t>(step_);
    const Batch batch = sample_batch(data_->train, cfg_.schedule.batch_size, cfg_.seed_or_zero(), t);
    const StepContext ctx = context(t);
    StepOutput out;
    try {
        out = model_.train_step(batch, ctx);
    } catch (const InvalidInputError& e) {
        // Data and weights are finite here, so a non-finite quantizer input
        // means activations or gradients overflowed.
        abort_run(std::numeric_limits<double>::quiet_NaN(), std::string("divergence (") + e.what() + ")");
    }
    auto& params = model_.params();

    if (cfg_.baseline.kind == BaselineKind::Dampen) {
        const double lambda = cfg_.baseline.lambda;
        for (std::size_t i : model_.quantized()) {
            const Matrix wq = quantize_weight(params[i].value, cfg_.quant.linear, ctx.ema.empty() ? nullptr : ctx.ema[i]).values;
            out.loss += dampen_penalty(params[i].value.values(), wq.values(), lambda, params[i].grad.values());
        }
    }

    if (!std::isfinite(out.loss)) abort_run(out.loss, "non-finite loss");
    last_loss_ = out.loss;

    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        const std::span<const std::uint8_t> frozen = frozen_[i];
        if (cfg_.optimizer == OptimizerKind::QRamping && p.quantized) {
            ramp_[i].step(p.value.values(), p.grad.values(), lr, frozen);
        } else {
            adam_[i].step(p.value.values(), p.grad.values(), lr, frozen);
        }
    }
    for (const Parameter& p : params) {
        for (double v : p.value.values()) {
            if (!std::isfinite(v)) abort_run(v, "non-finite weight in " + p.name);
        }
    }
    ++step_;

    if (cfg_.weight_quantizer == WeightQuantizer::QEma) {
        for (std::size_t i : model_.quantized()) update_ema(ema_[i], params[i].value);
    }

    if (cfg_.baseline.kind == BaselineKind::Freeze) {
        const double m = cfg_.baseline.momentum;
        const bool armed = static_cast<double>(step_) > cfg_.baseline.warmup_fraction * cfg_.schedule.steps;
        for (std::size_t i : model_.quantized()) {
            const Matrix wq = quantize_weight(params[i].value, cfg_.quant.linear).values;
            flips_[i].update(freeze_prev_[i], wq.values());
            auto w = params[i].value.values();
            auto f = flips_[i].values();
            for (std::size_t e = 0; e < w.size(); ++e) {
                freeze_avg_[i][e] = m * freeze_avg_[i][e] + (1.0 - m) * wq.data()[e];
                freeze_prev_[i][e] = wq.data()[e];
                if (armed && !frozen_[i][e] && f[e] > cfg_.baseline.f_th) {
                    frozen_[i][e] = 1;
                    w[e] = freeze_avg_[i][e];
                }
            }
        }
    }

    if (log_) {
        const int every = cfg_.schedule.log_every;
        if (every > 0 && step_ % every == 0) {
            log_->scalar(step_, "loss", "", out.loss);
            log_->scalar(step_, "train_accuracy", "", static_cast<double>(out.correct) / static_cast<double>(batch.labels.size()));
            log_->scalar(step_, "lr", "", lr);
        }
        const int eval = cfg_.schedule.eval_every;
        if (eval > 0 && step_ % eval == 0 && step_ < cfg_.schedule.steps) {
            const EvalResult ev = evaluate();
            log_->scalar(step_, "val_loss", "", ev.loss);
            log_->scalar(step_, "val_accuracy", "", ev.accuracy);
        }
    }
}

void Trainer::abort_run(double value, const std::string& what) {
    if (log_) log_->scalar(step_, "abort", "", value);
    if (!cfg_.output.checkpoint.empty()) save_checkpoint(cfg_.output.checkpoint + ".abort");
    throw NumericError(what + " at step " + std::to_string(step_));
}

EvalResult Trainer::evaluate() const {
    const Split& val = data_->val;
    const StepContext ctx = context(static_cast<std::uint32_t>(step_));
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < val.size(); begin += kEvalChunk) {
        const Batch b = slice(val, begin, kEvalChunk);
        const Matrix z = model_.logits(b.x, ctx);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto row = z.row(r);
            const double mx = *std::max_element(row.begin(), row.end());
            double sum = 0.0;
            for (double v : row) sum += std::exp(v - mx);
            const auto y = static_cast<std::size_t>(b.labels[r]);
            loss += mx + std::log(sum) - row[y];
            if (static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == y) ++correct;
        }
    }
    const auto n = static_cast<double>(val.size());
    return {loss / n, static_cast<double>(correct) / n};
}

void Trainer::begin_window() {
    Diagnostics& d = *diag_;
    d = Diagnostics{};
    d.active = true;
    d.r_w.resize(model_.quantized().size());
    d.r_wq.resize(model_.quantized().size());
    observe_window();
}

// The first observation of a window sets every reference point.
void Trainer::observe_window() {
    Diagnostics& d = *diag_;
    std::vector<double> w, wq;
    snapshot(w, wq);
    if (d.r_probe.has_reference()) {
        d.tracker.update(w, wq);
    } else {
        d.tracker.reset(w, wq);
    }
    std::size_t at = 0;
    for (std::size_t k = 0; k < model_.quantized().size(); ++k) {
        const std::size_t n = model_.params()[model_.quantized()[k]].value.size();
        d.r_w[k].observe(std::span<const double>(w).subspan(at, n));
        d.r_wq[k].observe(std::span<const double>(wq).subspan(at, n));
        at += n;
    }
    const int block = cfg_.diagnostics.probe_block < 0 ? cfg_.model.depth - 1 : cfg_.diagnostics.probe_block;
    const Matrix y = model_.probe(probe_batch_.x, block, context(static_cast<std::uint32_t>(step_)));
    d.r_probe.observe(y.values());
}

WindowDiagnostics Trainer::finish_window() {
    Diagnostics& d = *diag_;
    WindowDiagnostics out;
    out.steps = static_cast<int>(d.tracker.steps());
    const auto& params = model_.params();
    double sum_w = 0.0, sum_wq = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < model_.quantized().size(); ++k) {
        if (d.r_w[k].steps() == 0 || d.r_wq[k].steps() == 0) continue;
        const double rw = rate_of_change(d.r_w[k]);
        const double rwq = rate_of_change(d.r_wq[k]);
        sum_w += rw;
        sum_wq += rwq;
        ++counted;
        if (log_) {
            const std::string& name = params[model_.quantized()[k]].name;
            log_->scalar(step_, "r_w", name, rw);
            log_->scalar(step_, "r_wq", name, rwq);
        }
    }
    if (counted > 0) {
        out.r_w = sum_w / static_cast<double>(counted);
        out.r_wq = sum_wq / static_cast<double>(counted);
    }
    if (d.r_probe.steps() > 0) out.r_probe = rate_of_change(d.r_probe);
    if (out.steps > 0) out.oscillating_fraction = classify_oscillating(oscillation_ratio(d.tracker)).fraction;

    const std::vector<double> lat = latents();
    const auto bins = static_cast<std::size_t>(cfg_.diagnostics.confidence_bins);
    if (!lat.empty()) {
        const ConfidenceReport rep = confidence_report(lat, format_of(cfg_.quant.linear.forward_format), bins);
        out.confidence_histogram = rep.histogram;
        double s = 0.0;
        for (double c : rep.confidence) s += c;
        out.mean_confidence = s / static_cast<double>(rep.confidence.size());
    }
    if (log_) {
        const int block = cfg_.diagnostics.probe_block < 0 ? cfg_.model.depth - 1 : cfg_.diagnostics.probe_block;
        log_->scalar(step_, "window_steps", "model", out.steps);
        log_->scalar(step_, "r_w", "model", out.r_w);
        log_->scalar(step_, "r_wq", "model", out.r_wq);
        log_->scalar(step_, "r_probe", "block" + std::to_string(block), out.r_probe);
        log_->scalar(step_, "oscillating_fraction", "model", out.oscillating_fraction);
        if (!out.confidence_histogram.empty()) {
            log_->histogram(step_, "confidence_hist", "model",
                            std::vector<double>(out.confidence_histogram.begin(), out.confidence_histogram.end()));
            log_->scalar(step_, "mean_confidence", "model", out.mean_confidence);
        }
    }
    d.active = false;
    return out;
}

namespace {

// Lets the oscillation detector drive ordinary training steps.
class DetectionAdapter final : public RampingTarget {
public:
    DetectionAdapter(const Trainer& t, std::function<void()> step) : trainer_(t), step_(std::move(step)) {}
    void snapshot(std::vector<double>& masters, std::vector<double>& quantized) override {
        trainer_.snapshot(masters, quantized);
    }
    void plain_step() override { step_(); }

private:
    const Trainer& trainer_;
    std::function<void()> step_;
};

}  // namespace

void Trainer::detection_pass() {
    auto& params = model_.params();
    const double lr = cfg_.schedule.lr_at(step_);
    for (std::size_t i : model_.quantized()) {
        const std::vector<int> ones(params[i].value.size(), 1);
        ramp_[i].set_amplification(ones, params[i].value.values(), lr, frozen_[i]);
    }
    DetectionAdapter adapter(*this, [&] { advance(cfg_.schedule.lr_at(step_)); });
    const int at = step_;
    const DetectionResult det = detect_oscillation(adapter, cfg_.ramping);
    std::size_t offset = 0;
    for (std::size_t i : model_.quantized()) {
        const std::size_t n = params[i].value.size();
        ramp_[i].set_amplification(std::span<const int>(det.amplification).subspan(offset, n), params[i].value.values(),
                                   cfg_.schedule.lr_at(step_), frozen_[i]);
        offset += n;
    }
    ++detections_;
    if (log_) {
        log_->scalar(at, "qramping.oscillating_fraction", "model", det.oscillating_fraction);
        log_->histogram(at, "qramping.amplification", "model",
                        std::vector<double>(det.amplification_histogram.begin(), det.amplification_histogram.end()));
    }
}

double RunSummary::mean_timeline_oscillation() const noexcept {
    if (oscillation_timeline.empty()) return 0.0;
    double s = 0.0;
    for (double v : oscillation_timeline) s += v;
    return s / static_cast<double>(oscillation_timeline.size());
}

void Trainer::advance(double lr) {
    const DiagnosticsConfig& dc = cfg_.diagnostics;
    const int total = cfg_.schedule.steps;
    if (dc.enabled && step_ == std::max(0, total - dc.window)) begin_window();
    // Timeline windows end on multiples of timeline_every.
    const int every = dc.timeline_every;
    std::vector<double> w, wq;
    if (dc.enabled && every > 0 && !timeline_active_ && (step_ + dc.window) % every == 0 &&
        step_ + dc.window <= total) {
        snapshot(w, wq);
        timeline_.reset(w, wq);
        timeline_active_ = true;
    }
    train_step(lr);
    if (diag_->active) observe_window();
    if (timeline_active_) {
        snapshot(w, wq);
        timeline_.update(w, wq);
        if (step_ % every == 0) {
            const double f = classify_oscillating(oscillation_ratio(timeline_)).fraction;
            timeline_values_.push_back(f);
            if (log_) log_->scalar(step_, "timeline.oscillating_fraction", "model", f);
            timeline_active_ = false;
        }
    }
}

RunSummary Trainer::run() {
    const int total = cfg_.schedule.steps;
    RunSummary s;
    while (step_ < total) {
        if (cfg_.optimizer == OptimizerKind::QRamping && step_ % cfg_.ramping.t_update == 0 &&
            step_ + cfg_.ramping.t0 <= total) {
            detection_pass();
            continue;
        }
        advance(cfg_.schedule.lr_at(step_));
    }
    if (diag_->active) s.diagnostics = finish_window();
    s.oscillation_timeline = timeline_values_;
    s.steps = step_;
    s.final_loss = last_loss_;
    s.val = evaluate();
    s.frozen = frozen_count();
    s.detections = detections_;
    if (log_) {
        log_->scalar(step_, "final_loss", "", s.final_loss);
        log_->scalar(step_, "val_loss", "", s.val.loss);
        log_->scalar(step_, "val_accuracy", "", s.val.accuracy);
        if (cfg_.baseline.kind == BaselineKind::Freeze) log_->scalar(step_, "frozen", "model", static_cast<double>(s.frozen));
    }
    if (!cfg_.output.checkpoint.empty()) save_checkpoint(cfg_.output.checkpoint);
    return s;
}

WindowDiagnostics Trainer::probe_window(int steps, double lr) {
    if (steps < 1) throw ConfigError("--window", "must be >= 1");
    begin_window();
    for (int k = 0; k < steps; ++k) {
        train_step(lr);
        observe_window();
    }
    return finish_window();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using TensorMap = std::map<std::string, std::vector<double>>;

template <class T>
std::vector<double> as_doubles(const std::vector<T>& v) {
    return {v.begin(), v.end()};
}

void put_bytes(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_bytes(const std::vector<std::uint8_t>& in, std::size_t at, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

const std::vector<double>& fetch(const TensorMap& m, const std::string& name, std::size_t n) {
    auto it = m.find(name);
    if (it == m.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (it->second.size() != n) throw FormatError("checkpoint tensor '" + name + "' has the wrong size");
    return it->second;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
    TensorMap t;
    json adam_steps = json::object();
    const auto& params = model_.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& n = params[i].name;
        const AdamW& a = adam_[i];
        t["param/" + n] = as_doubles(std::vector<double>(params[i].value.values().begin(), params[i].value.values().end()));
        t["adam.m/" + n] = a.m();
        t["adam.v/" + n] = a.v();
        adam_steps[n] = a.t();
        if (!params[i].quantized) continue;
        if (cfg_.optimizer == OptimizerKind::QRamping) {
            const RampingAdamW& r = ramp_[i];
            t["ramp.m/" + n] = r.m();
            t["ramp.v/" + n] = r.v();
            t["ramp.acc/" + n] = r.accumulator();
            t["ramp.phase/" + n] = as_doubles(r.phase());
            t["ramp.t/" + n] = as_doubles(r.updates());
            t["ramp.n/" + n] = std::vector<double>(r.amplification().begin(), r.amplification().end());
        }
        if (cfg_.weight_quantizer == WeightQuantizer::QEma) {
            const auto v = ema_[i].w_ema.values();
            t["ema/" + n] = std::vector<double>(v.begin(), v.end());
        }
        if (cfg_.baseline.kind == BaselineKind::Freeze) {
            const auto f = flips_[i].values();
            t["freeze.f/" + n] = std::vector<double>(f.begin(), f.end());
            t["freeze.avg/" + n] = freeze_avg_[i];
            t["freeze.prev/" + n] = freeze_prev_[i];
            t["freeze.frozen/" + n] = as_doubles(frozen_[i]);
        }
    }
    json header;
    header["version"] = kCheckpointVersion;
    header["step"] = step_;
    header["last_loss"] = last_loss_;
    header["detections"] = detections_;
    header["adam_steps"] = adam_steps;
    header["config"] = json::parse(to_json(cfg_));
    json dir = json::array();
    for (const auto& [name, v] : t) dir.push_back({{"name", name}, {"count", v.size()}});
    header["tensors"] = dir;
    const std::string h = header.dump();

    std::vector<std::uint8_t> out = {'M', 'X', 'C', 'K'};
    put_bytes(out, kCheckpointVersion, 4);
    put_bytes(out, h.size(), 8);
    out.insert(out.end(), h.begin(), h.end());
    for (const auto& [name, v] : t) {
        for (double d : v) put_bytes(out, std::bit_cast<std::uint64_t>(d), 8);
    }
    write_file(path, out);
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& path, MetricLog* log) {
    const auto bytes = read_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "MXCK", 4) != 0) {
        throw FormatError("'" + path.string() + "' is not a checkpoint");
    }
    if (get_bytes(bytes, 4, 4) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    const std::uint64_t hlen = get_bytes(bytes, 8, 8);
    if (hlen > bytes.size() - 16) throw FormatError("truncated checkpoint header");
    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what());
    }
    TensorMap t;
    std::size_t at = 16 + hlen;
    for (const auto& entry : header.at("tensors")) {
        const auto count = entry.at("count").get<std::size_t>();
        if ((bytes.size() - at) / 8 < count) throw FormatError("truncated checkpoint payload");
        std::vector<double> v(count);
        for (auto& d : v) {
            d = std::bit_cast<double>(get_bytes(bytes, at, 8));
            at += 8;
        }
        t[entry.at("name").get<std::string>()] = std::move(v);
    }
    if (at != bytes.size()) throw FormatError("trailing bytes after checkpoint payload");

    Trainer tr(parse_config(header.at("config").dump()), log);
    tr.step_ = header.at("step").get<int>();
    tr.last_loss_ = header.at("last_loss").get<double>();
    tr.detections_ = header.at("detections").get<int>();
    auto& params = tr.model_.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& n = params[i].name;
        const std::size_t sz = params[i].value.size();
        const auto& w = fetch(t, "param/" + n, sz);
        std::copy(w.begin(), w.end(), params[i].value.values().begin());
        tr.adam_[i].m() = fetch(t, "adam.m/" + n, sz);
        tr.adam_[i].v() = fetch(t, "adam.v/" + n, sz);
        tr.adam_[i].t() = header.at("adam_steps").at(n).get<std::uint64_t>();
        if (!params[i].quantized) continue;
        if (tr.cfg_.optimizer == OptimizerKind::QRamping) {
            auto& r = tr.ramp_[i];
            r.m() = fetch(t, "ramp.m/" + n, sz);
            r.v() = fetch(t, "ramp.v/" + n, sz);
            r.accumulator() = fetch(t, "ramp.acc/" + n, sz);
            const auto& ph = fetch(t, "ramp.phase/" + n, sz);
            const auto& up = fetch(t, "ramp.t/" + n, sz);
            const auto& am = fetch(t, "ramp.n/" + n, sz);
            for (std::size_t e = 0; e < sz; ++e) {
                r.phase()[e] = static_cast<std::uint32_t>(ph[e]);
                r.updates()[e] = static_cast<std::uint64_t>(up[e]);
                r.mutable_amplification()[e] = static_cast<int>(am[e]);
            }
        }
        if (tr.cfg_.weight_quantizer == WeightQuantizer::QEma) {
            const auto& e = fetch(t, "ema/" + n, sz);
            std::copy(e.begin(), e.end(), tr.ema_[i].w_ema.values().begin());
        }
        if (tr.cfg_.baseline.kind == BaselineKind::Freeze) {
            tr.flips_[i].mutable_values() = fetch(t, "freeze.f/" + n, sz);
            tr.freeze_avg_[i] = fetch(t, "freeze.avg/" + n, sz);
            tr.freeze_prev_[i] = fetch(t, "freeze.prev/" + n, sz);
            const auto& fr = fetch(t, "freeze.frozen/" + n, sz);
            for (std::size_t e = 0; e < sz; ++e) tr.frozen_[i][e] = fr[e] != 0.0 ? 1 : 0;
        }
    }
    return tr;
}

}  // namespace mxfp4::train
