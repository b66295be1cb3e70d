// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/cli.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mxfp4/container.hpp"
#include "mxfp4/error.hpp"
#include "mxfp4/train/config.hpp"
#include "mxfp4/train/experiments.hpp"
#include "mxfp4/train/trainer.hpp"

namespace mxfp4::cli {

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("--seeds", "'" + tok + "' is not a seed");
        }
    }
    if (out.empty()) throw ConfigError("--seeds", "no seeds given");
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("--out", "cannot write '" + path + "'");
    f << text;
}

void print_window(std::ostream& out, const train::WindowDiagnostics& d) {
    out << "window steps        " << d.steps << '\n'
        << "r(W)                " << d.r_w << '\n'
        << "r(W^Q)              " << d.r_wq << '\n'
        << "r(probe)            " << d.r_probe << '\n'
        << "R_w > 16 fraction   " << d.oscillating_fraction << '\n'
        << "mean confidence     " << d.mean_confidence << '\n';
}

struct QuantizeArgs {
    std::string in, out, axis = "row", rule = "truncation_free", rounding = "deterministic", format = "e2m1";
    std::optional<std::uint64_t> seed;
    std::uint32_t tensor = 0;
    bool dequantize = false;
};

int cmd_quantize(const QuantizeArgs& a, std::ostream& out) {
    if (a.dequantize) {
        const QuantizedMatrix qm = decode_mxt1(read_file(a.in));
        write_file(a.out, encode_mxd1(dequantize_matrix(qm)));
        out << "dequantized " << qm.rows << "x" << qm.cols << " -> " << a.out << '\n';
        return kExitOk;
    }
    QuantSpec spec;
    spec.scale_rule = train::parse_scale_rule(a.rule);
    spec.rounding = train::parse_rounding(a.rounding);
    try {
        spec.format = parse_format(a.format);
    } catch (const Error& e) {
        throw ConfigError("--format", e.what());
    }
    const Axis axis = train::parse_axis(a.axis);
    if (spec.rounding == Rounding::Stochastic && !a.seed) {
        throw ConfigError("--seed", "stochastic rounding requires --seed");
    }
    const Matrix m = decode_mxd1(read_file(a.in));
    const RngContext rng{a.seed.value_or(0), a.tensor, 0};
    const QuantizedMatrix qm = quantize_matrix(m, axis, spec, spec.rounding == Rounding::Stochastic ? &rng : nullptr);
    write_file(a.out, encode_mxt1(qm));
    out << "quantized " << m.rows() << "x" << m.cols() << " into " << qm.blocks.size() << " blocks -> " << a.out
        << '\n';
    return kExitOk;
}

struct TrainArgs {
    std::string config, log, checkpoint;
    std::optional<std::uint64_t> seed;
};

train::TrainConfig load_with_overrides(const std::string& path, std::optional<std::uint64_t> seed) {
    train::TrainConfig cfg = train::load_config(path, false);
    if (seed) cfg.seed = seed;
    return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    train::TrainConfig cfg = load_with_overrides(a.config, a.seed);
    if (!a.log.empty()) cfg.output.log = a.log;
    if (!a.checkpoint.empty()) cfg.output.checkpoint = a.checkpoint;
    cfg.validate();
    std::unique_ptr<train::MetricLog> log;
    if (!cfg.output.log.empty()) log = std::make_unique<train::MetricLog>(cfg.output.log);
    train::Trainer tr(cfg, log.get());
    const train::RunSummary s = tr.run();
    out << "steps               " << s.steps << '\n'
        << "final loss          " << s.final_loss << '\n'
        << "val loss            " << s.val.loss << '\n'
        << "val accuracy        " << s.val.accuracy << '\n';
    if (s.diagnostics.steps > 0) print_window(out, s.diagnostics);
    if (!s.oscillation_timeline.empty()) {
        out << "R_w > 16 timeline   " << s.mean_timeline_oscillation() << " (mean of "
            << s.oscillation_timeline.size() << " windows)\n";
    }
    if (cfg.baseline.kind == train::BaselineKind::Freeze) out << "frozen elements     " << s.frozen << '\n';
    if (!cfg.output.checkpoint.empty()) out << "checkpoint          " << cfg.output.checkpoint << '\n';
    return kExitOk;
}

struct SweepArgs {
    std::string config, grid, seeds = "1", out, log_dir;
    bool quiet = false;
};

int cmd_sweep(const SweepArgs& a, bool ablation, std::ostream& out, std::ostream& err) {
    train::ExperimentOptions opt;
    opt.seeds = parse_seeds(a.seeds);
    opt.log_dir = a.log_dir;
    if (!a.quiet) opt.progress = [&err](const std::string& msg) { err << msg << '\n'; };
    // Each run substitutes its own seed.
    train::TrainConfig base = a.config.empty() ? train::TrainConfig{} : load_with_overrides(a.config, opt.seeds.front());
    const train::ExperimentTable t =
        ablation ? train::run_ablation(base, train::parse_grid(a.grid, base), opt) : train::run_quantizer_impact(base, opt);
    out << t.to_text();
    if (!a.out.empty()) write_text(a.out, t.to_json());
    return kExitOk;
}

struct DiagnoseArgs {
    std::string checkpoint, log;
    int window = 200;
    std::optional<double> lr;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
    std::unique_ptr<train::MetricLog> log;
    if (!a.log.empty()) log = std::make_unique<train::MetricLog>(a.log);
    train::Trainer tr = train::Trainer::load_checkpoint(a.checkpoint, log.get());
    const auto& sched = tr.config().schedule;
    const double lr = a.lr.value_or(sched.lr_at(std::min(tr.step(), sched.steps - 1)));
    if (!(lr >= 0.0)) throw ConfigError("--lr", "must be >= 0");
    out << "checkpoint step     " << tr.step() << '\n' << "probe lr            " << lr << '\n';
    print_window(out, tr.probe_window(a.window, lr));
    const train::EvalResult ev = tr.evaluate();
    out << "val accuracy        " << ev.accuracy << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"MXFP4 quantized-training toolkit", args.empty() ? "mxfp4" : args.front()};
    app.require_subcommand(1);

    QuantizeArgs qa;
    auto* quantize = app.add_subcommand("quantize", "Quantize an MXD1 matrix into an MXT1 container");
    quantize->add_option("in", qa.in, "Input file (MXD1, or MXT1 with --dequantize)")->required();
    quantize->add_option("out", qa.out, "Output file")->required();
    quantize->add_option("--axis", qa.axis, "Group axis: row (1x32) or col (32x1)");
    quantize->add_option("--rule", qa.rule, "Scale rule: truncation_free or microscaling");
    quantize->add_option("--rounding", qa.rounding, "deterministic or stochastic");
    quantize->add_option("--format", qa.format, "e2m1 or e3m0");
    quantize->add_option("--seed", qa.seed, "Seed, required for stochastic rounding");
    quantize->add_option("--tensor", qa.tensor, "Random substream tensor id");
    quantize->add_flag("--dequantize", qa.dequantize, "Decode an MXT1 container back to MXD1");

    TrainArgs ta;
    auto* trn = app.add_subcommand("train", "Train the toy transformer");
    trn->add_option("--config", ta.config, "JSON config file")->required();
    trn->add_option("--seed", ta.seed, "Overrides the config seed");
    trn->add_option("--log", ta.log, "JSON-lines metric log path");
    trn->add_option("--checkpoint", ta.checkpoint, "Checkpoint written at the end");

    SweepArgs aa;
    auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
    ablate->add_option("--grid", aa.grid, "Grid spec, e.g. 'default;format=e2m1,e3m0'")->required();
    ablate->add_option("--config", aa.config, "Base JSON config");
    ablate->add_option("--seeds", aa.seeds, "Comma-separated seeds");
    ablate->add_option("--out", aa.out, "Write the table as JSON");
    ablate->add_option("--log-dir", aa.log_dir, "Directory for per-run metric logs");
    ablate->add_flag("--quiet", aa.quiet, "No progress output");

    SweepArgs ia;
    auto* impact = app.add_subcommand("impact", "Per-quantizer impact sweep");
    impact->add_option("--config", ia.config, "Base JSON config")->required();
    impact->add_option("--seeds", ia.seeds, "Comma-separated seeds");
    impact->add_option("--out", ia.out, "Write the table as JSON");
    impact->add_option("--log-dir", ia.log_dir, "Directory for per-run metric logs");
    impact->add_flag("--quiet", ia.quiet, "No progress output");

    DiagnoseArgs da;
    auto* diagnose = app.add_subcommand("diagnose", "Measure oscillation from a checkpoint");
    diagnose->add_option("--checkpoint", da.checkpoint, "Checkpoint file")->required();
    diagnose->add_option("--window", da.window, "Probe window length in steps");
    diagnose->add_option("--lr", da.lr, "Learning rate for the probe steps");
    diagnose->add_option("--log", da.log, "JSON-lines metric log path");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        if (!rev.empty()) rev.pop_back();
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (quantize->parsed()) return cmd_quantize(qa, out);
        if (trn->parsed()) return cmd_train(ta, out);
        if (ablate->parsed()) return cmd_sweep(aa, true, out, err);
        if (impact->parsed()) return cmd_sweep(ia, false, out, err);
        if (diagnose->parsed()) return cmd_diagnose(da, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "numeric abort: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace mxfp4::cli
