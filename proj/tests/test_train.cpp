// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mxfp4/error.hpp"
#include "mxfp4/train/config.hpp"
#include "mxfp4/train/dataset.hpp"
#include "mxfp4/train/experiments.hpp"
#include "mxfp4/train/metric_log.hpp"
#include "mxfp4/train/model.hpp"
#include "mxfp4/train/trainer.hpp"

using namespace mxfp4;
using namespace mxfp4::train;

namespace {

// Small enough to train in well under a second.
TrainConfig tiny(int steps = 40) {
    TrainConfig c;
    c.seed = 11;
    c.model.depth = 1;
    c.model.width = 32;
    c.model.heads = 2;
    c.model.mlp_ratio = 2;
    c.data.train_size = 256;
    c.data.val_size = 64;
    c.schedule.steps = steps;
    c.schedule.batch_size = 16;
    c.diagnostics.window = 10;
    return c;
}

std::vector<Matrix> weights(const Trainer& t) {
    std::vector<Matrix> out;
    for (const auto& p : t.model().params()) out.push_back(p.value);
    return out;
}

std::string config_error_keys(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.keys();
    }
    return "";
}

std::filesystem::path temp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("config parsing and round trip") {
    const TrainConfig c = parse_config(R"({"seed": 3, "model": {"depth": 1}, "quant": {"mask": "101010"},
                                           "optimizer": {"kind": "qramping", "qramping": {"t_update": 300}}})");
    CHECK(*c.seed == 3);
    CHECK(c.model.depth == 1);
    CHECK(c.quant.linear.mask.to_string() == "101010");
    CHECK(c.optimizer == OptimizerKind::QRamping);
    CHECK(c.ramping.t_update == 300);
    const TrainConfig back = parse_config(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(parse_config(R"({"seed": 1})").model.width == 64);
}

TEST_CASE("config errors name the offending keys") {
    CHECK(config_error_keys(R"({"model": {"widht": 64}})") == "model.widht");
    CHECK(config_error_keys(R"({"model": {"width": "wide"}})") == "model.width");
    CHECK(config_error_keys(R"({"model": {"width": 33, "heads": 3}})") == "model.width,model.ragged");
    CHECK(config_error_keys(R"({"quant": {"backward_rounding": "stochastic"}})") ==
          "seed,quant.backward_rounding");
    CHECK(config_error_keys(R"({"seed": 1, "quantizer": {"weight": "qema"}, "optimizer": {"kind": "qramping"}})") ==
          "quantizer.weight,optimizer.kind");
    CHECK(config_error_keys(R"({"seed": 1, "quantizer": {"weight": "qema"}, "quant": {"mask": "101111"}})") ==
          "quantizer.weight,quant.mask");
    CHECK(config_error_keys(R"({"seed": 1, "optimizer": {"kind": "qramping", "qramping": {"t0": 900, "t_update": 2000}}})") ==
          "optimizer.qramping.t0,train.steps");
    CHECK(config_error_keys(R"({"seed": 1, "diagnostics": {"window": 30, "timeline_every": 20}})") ==
          "diagnostics.timeline_every,diagnostics.window");
    CHECK(config_error_keys("{not json") == "<root>");
    CHECK_NOTHROW(parse_config(R"({"quant": {"backward_rounding": "stochastic"}})", false));
}

TEST_CASE("synthetic data and batches are deterministic") {
    const TrainConfig c = tiny();
    const Dataset a = make_dataset(c), b = make_dataset(c);
    CHECK(a.train.features == b.train.features);
    CHECK(a.val.labels == b.val.labels);
    CHECK(a.train.size() == 256);
    CHECK(a.dim == c.model.input_dim());
    const Batch x = sample_batch(a.train, 16, 5, 9), y = sample_batch(a.train, 16, 5, 9);
    CHECK(x.x == y.x);
    CHECK(x.labels == y.labels);
    CHECK(sample_batch(a.train, 16, 5, 10).x != x.x);
    TrainConfig other = c;
    other.seed = 12;
    CHECK(make_dataset(other).train.features != a.train.features);
}

TEST_CASE("MXDS datasets load through the config") {
    const Dataset src = make_dataset(tiny());
    const auto path = temp("mxfp4_test.mxds");
    write_mxds(path, src.train.features, src.train.labels, src.classes);
    TrainConfig c = tiny();
    c.data.kind = DataKind::File;
    c.data.path = path.string();
    c.data.val_size = 32;
    const Dataset d = make_dataset(c);
    CHECK(d.train.size() + d.val.size() == 256);
    CHECK(d.val.size() == 32);
    std::filesystem::remove(path);
}

TEST_CASE("model shapes") {
    ModelConfig m = tiny().model;
    m.width = 40;
    CHECK_THROWS_AS(Model(m, 1), ConfigError);
    m.ragged = true;
    const Model ok(m, 1);
    CHECK(ok.quantized().size() == 4);
    for (std::size_t i : ok.quantized()) CHECK(ok.params()[i].quantized);
}

TEST_CASE("with every quantizer off the model is the dense network") {
    TrainConfig c = tiny();
    c.quant.linear.mask = QuantizerMask::all_off();
    const Dataset data = make_dataset(c);
    const Batch batch = sample_batch(data.train, 8, 3, 0);
    Model model(c.model, 5);
    StepContext ctx{c.quant, 3, 0, {}};
    const Matrix ref = model.logits(batch.x, ctx);
    // Format, scale rule, rounding, path and random stream are all inert.
    ctx.quant.linear.forward_format = FormatId::E3M0;
    ctx.quant.linear.grad_format = FormatId::E3M0;
    ctx.quant.linear.scale_rule = ScaleRule::Microscaling;
    ctx.quant.linear.backward_rounding = Rounding::Deterministic;
    ctx.quant.gradient_path = GradientPath::Microscaling;
    ctx.seed = 99;
    ctx.step = 17;
    CHECK(model.logits(batch.x, ctx) == ref);
    ctx.quant.linear.mask = QuantizerMask::all_on();
    CHECK(model.logits(batch.x, ctx) != ref);

    // Dense gradients agree with central differences of the loss.
    ctx = StepContext{c.quant, 3, 0, {}};
    model.train_step(batch, ctx);
    std::vector<Matrix> grads;
    for (const Parameter& p : model.params()) grads.push_back(p.grad);
    for (std::size_t i : model.quantized()) {
        Parameter& p = model.params()[i];
        const Matrix& grad = grads[i];
        for (std::size_t e : {std::size_t{0}, p.value.size() / 2, p.value.size() - 1}) {
            const double w0 = p.value.values()[e], h = 1e-5;
            p.value.values()[e] = w0 + h;
            const double up = model.train_step(batch, ctx).loss;
            p.value.values()[e] = w0 - h;
            const double down = model.train_step(batch, ctx).loss;
            p.value.values()[e] = w0;
            CHECK(grad.values()[e] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1e-4));
        }
    }
}

TEST_CASE("ragged widths train with finite loss") {
    TrainConfig c = tiny(10);
    c.model.width = 40;
    c.model.ragged = true;
    const RunSummary s = Trainer(c).run();
    CHECK(std::isfinite(s.final_loss));
}

TEST_CASE("training is a pure function of the config") {
    const TrainConfig c = [] {
        TrainConfig t = tiny();
        t.quant.linear.backward_rounding = Rounding::Stochastic;
        return t;
    }();
    Trainer a(c), b(c);
    const RunSummary sa = a.run(), sb = b.run();
    CHECK(weights(a) == weights(b));
    CHECK(sa.final_loss == sb.final_loss);
    CHECK(sa.diagnostics.r_wq == sb.diagnostics.r_wq);
    TrainConfig other = c;
    other.seed = 99;
    Trainer d(other);
    d.run();
    CHECK(weights(d) != weights(a));
}

TEST_CASE("diagnostics do not perturb training") {
    TrainConfig on = tiny(), off = tiny();
    off.diagnostics.enabled = false;
    Trainer a(on), b(off);
    const RunSummary sa = a.run();
    b.run();
    CHECK(weights(a) == weights(b));
    CHECK(sa.diagnostics.steps == 10);
    CHECK(sa.diagnostics.confidence_histogram.size() == 50);
}

TEST_CASE("the oscillation timeline samples matched windows") {
    TrainConfig on = tiny(95), off = tiny(95);
    on.diagnostics.timeline_every = 20;
    off.diagnostics.timeline_every = 0;
    Trainer a(on), b(off);
    const RunSummary sa = a.run();
    const RunSummary sb = b.run();
    CHECK(weights(a) == weights(b));
    REQUIRE(sa.oscillation_timeline.size() == 4);
    CHECK(sb.oscillation_timeline.empty());
    double mean = 0.0;
    for (double f : sa.oscillation_timeline) {
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        mean += f / 4.0;
    }
    CHECK(sa.mean_timeline_oscillation() == doctest::Approx(mean));
    CHECK(sb.mean_timeline_oscillation() == 0.0);
}

TEST_CASE("Dampen penalty") {
    std::vector<double> g{0.0};
    CHECK(dampen_penalty(std::vector<double>{0.6}, std::vector<double>{0.5}, 1.0, g) == doctest::Approx(0.01));
    CHECK(g[0] == doctest::Approx(0.2));
    std::vector<double> z{0.0, 0.0};
    CHECK(dampen_penalty(std::vector<double>{1.5, -3.0}, std::vector<double>{1.5, -3.0}, 2.0, z) == 0.0);
    CHECK(z == std::vector<double>{0.0, 0.0});

    const std::vector<double> w{0.3, -1.2, 2.7, 0.05}, wq{0.5, -1.0, 3.0, 0.0};
    std::vector<double> grad(w.size(), 0.0);
    dampen_penalty(w, wq, 0.7, grad);
    for (std::size_t e = 0; e < w.size(); ++e) {
        const double h = 1e-5;
        std::vector<double> up = w, down = w, sink(w.size());
        up[e] += h;
        down[e] -= h;
        const double fd = (dampen_penalty(up, wq, 0.7, sink) - dampen_penalty(down, wq, 0.7, sink)) / (2 * h);
        CHECK(grad[e] == doctest::Approx(fd).epsilon(1e-8));
    }
    std::vector<double> short_grad(1);
    CHECK_THROWS_AS(dampen_penalty(w, wq, 1.0, short_grad), ContractError);
}

TEST_CASE("a zero Dampen coefficient reproduces the baseline") {
    TrainConfig base = tiny(), damp = tiny();
    damp.baseline.kind = BaselineKind::Dampen;
    damp.baseline.lambda = 0.0;
    Trainer a(base), b(damp);
    a.run();
    b.run();
    CHECK(weights(a) == weights(b));
    damp.baseline.lambda = 1e-2;
    Trainer c(damp);
    c.run();
    CHECK(weights(c) != weights(a));
}

TEST_CASE("Dampen pulls masters toward their quantized values") {
    auto gap = [](double lambda) {
        TrainConfig c = tiny(60);
        c.baseline.kind = BaselineKind::Dampen;
        c.baseline.lambda = lambda;
        Trainer t(c);
        t.run();
        std::vector<double> w, q;
        t.snapshot(w, q);
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] - q[i]) * (w[i] - q[i]);
        return s;
    };
    CHECK(gap(5.0) < gap(0.0));
}

TEST_CASE("Freeze baseline") {
    SUBCASE("an unreachable threshold reproduces the baseline") {
        TrainConfig base = tiny(), fr = tiny();
        fr.baseline.kind = BaselineKind::Freeze;
        fr.baseline.f_th = 1.1;
        Trainer a(base), b(fr);
        a.run();
        const RunSummary s = b.run();
        CHECK(s.frozen == 0);
        CHECK(weights(a) == weights(b));
    }
    SUBCASE("frozen weights stop moving") {
        TrainConfig fr = tiny(60);
        fr.baseline.kind = BaselineKind::Freeze;
        fr.baseline.f_th = 0.0;
        fr.baseline.momentum = 0.5;
        fr.baseline.warmup_fraction = 0.0;
        fr.output.checkpoint = temp("mxfp4_freeze.mxck").string();
        Trainer t(fr);
        const RunSummary s = t.run();
        CHECK(s.frozen > 0);
        // Every element frozen by the end: the masters no longer move.
        Trainer again = Trainer::load_checkpoint(fr.output.checkpoint);
        const auto before = weights(again);
        again.probe_window(3, 1e-2);
        std::size_t still = 0, moved = 0;
        for (std::size_t i : again.model().quantized()) {
            const auto& w0 = before[i].values();
            const auto& w1 = again.model().params()[i].value.values();
            for (std::size_t e = 0; e < w0.size(); ++e) (w0[e] == w1[e] ? still : moved)++;
        }
        CHECK(still >= s.frozen);
        std::filesystem::remove(fr.output.checkpoint);
    }
}

TEST_CASE("ramping with unit amplification is bit-identical to AdamW") {
    TrainConfig plain = tiny(200), ramp = tiny(200);
    plain.diagnostics.window = 30;
    ramp.diagnostics.window = 30;
    ramp.optimizer = OptimizerKind::QRamping;
    ramp.ramping.n_max = 1;
    ramp.ramping.t_update = 60;
    Trainer a(plain), b(ramp);
    const RunSummary sa = a.run(), sb = b.run();
    CHECK(sb.detections == 3);  // at steps 0, 60 and 120; 180 + t0 overruns
    CHECK(weights(a) == weights(b));
    CHECK(sa.final_loss == sb.final_loss);
    CHECK(sa.diagnostics.oscillating_fraction == sb.diagnostics.oscillating_fraction);
}

TEST_CASE("a detection interval past the run gives one detection") {
    TrainConfig c = tiny(60);
    c.optimizer = OptimizerKind::QRamping;
    c.ramping.t_update = 1000;
    CHECK(Trainer(c).run().detections == 1);
}

TEST_CASE("checkpoints restore the full training state") {
    for (const char* variant : {"plain", "qema", "qramping", "freeze"}) {
        CAPTURE(variant);
        TrainConfig c = tiny(40);
        const std::string v = variant;
        if (v == "qema") c.weight_quantizer = WeightQuantizer::QEma;
        if (v == "qramping") {
            c.optimizer = OptimizerKind::QRamping;
            c.ramping.t0 = 10;
            c.ramping.t_update = 25;
        }
        if (v == "freeze") c.baseline.kind = BaselineKind::Freeze;
        c.output.checkpoint = temp("mxfp4_ckpt.mxck").string();
        Trainer a(c);
        a.run();
        Trainer b = Trainer::load_checkpoint(c.output.checkpoint);
        CHECK(b.step() == a.step());
        CHECK(weights(b) == weights(a));
        CHECK(b.evaluate().loss == a.evaluate().loss);
        const WindowDiagnostics da = a.probe_window(5, 1e-3), db = b.probe_window(5, 1e-3);
        CHECK(weights(b) == weights(a));
        CHECK(da.r_w == db.r_w);
        CHECK(da.oscillating_fraction == db.oscillating_fraction);
        std::filesystem::remove(c.output.checkpoint);
    }
    const auto bad = temp("mxfp4_bad.mxck");
    std::ofstream(bad) << "MXCK garbage";
    CHECK_THROWS_AS(Trainer::load_checkpoint(bad), FormatError);
    std::filesystem::remove(bad);
}

TEST_CASE("metric log lines round-trip and follow the schema") {
    MetricRecord r;
    r.step = 12;
    r.metric = "loss";
    r.value = 0.25;
    const MetricRecord back = parse_json_line(to_json_line(r));
    CHECK(back.step == 12);
    CHECK(back.metric == "loss");
    CHECK(back.tensor.empty());
    CHECK(back.value == 0.25);
    CHECK_FALSE(back.is_histogram);
    CHECK_THROWS_AS(parse_json_line(R"({"step": 1})"), FormatError);
    CHECK_THROWS_AS(parse_json_line("not json"), FormatError);

    const auto path = temp("mxfp4_log.jsonl");
    {
        MetricLog log(path.string());
        TrainConfig c = tiny(20);
        c.schedule.log_every = 5;
        Trainer(c, &log).run();
    }
    const auto recs = read_metric_log(path.string());
    bool saw_hist = false, saw_val = false;
    std::int64_t last = 0;
    for (const auto& rec : recs) {
        CHECK(rec.step >= last);
        last = rec.step;
        saw_hist |= rec.is_histogram && rec.metric == "confidence_hist";
        saw_val |= rec.metric == "val_accuracy";
    }
    CHECK(saw_hist);
    CHECK(saw_val);
    std::filesystem::remove(path);
}

TEST_CASE("quantizer impact sweep") {
    TrainConfig c = tiny(10);
    c.diagnostics.enabled = false;
    const ExperimentOptions opt;
    REQUIRE(opt.seeds == std::vector<std::uint64_t>{1});
    const ExperimentTable t = run_quantizer_impact(c, opt);
    REQUIRE(t.rows.size() == 8);
    CHECK(t.rows.front().config.quant.linear.mask.to_string() == "000000");
    CHECK(t.rows.back().config.quant.linear.mask.to_string() == "111111");
    for (const auto& row : t.rows) CHECK(row.runs.size() == 1);
    CHECK_FALSE(t.to_text().empty());
    const auto j = nlohmann::json::parse(t.to_json());
    CHECK(j.at("rows").size() == 8);

    // The end rows are the full-precision and default runs.
    c.seed = 1;
    TrainConfig off = c;
    off.quant.linear.mask = QuantizerMask::all_off();
    Trainer dense(off), full(c);
    const RunSummary sd = dense.run(), sf = full.run();
    const RunSummary &first = t.rows.front().runs[0], &last = t.rows.back().runs[0];
    CHECK(first.final_loss == sd.final_loss);
    CHECK(first.val.loss == sd.val.loss);
    CHECK(last.final_loss == sf.final_loss);
    CHECK(last.val.loss == sf.val.loss);
    CHECK(first.final_loss != last.final_loss);
}
