#pragma once

// Option groups shared by the subcommands. Every field is bound to a CLI11
// option, so the same name works on the command line and in a --config file,
// and the effective values can be written back out with config_to_str.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "sffp/data.hpp"
#include "sffp/eval.hpp"
#include "sffp/model.hpp"
#include "sffp/train.hpp"

namespace sffp::cli {

struct DataOptions {
    std::string data_path;          // CSV panel; empty selects the generator
    std::string generator = "chirp";  // chirp | trend
    int t_len = 2048;
    int bands = 2;
    double chirp_rate = 1.0 / 64.0;
    double f0 = 0.0;
    double noise_sigma = 0.3;
    double trend_slope = 0.001;
    std::string trend_kind = "linear";
    double ar1_phi = 0.5;
    std::uint64_t gen_seed = 7;
};

struct ModelOptions {
    int m = 96;
    int p = 24;
    int lowpass_cutoff = -1;     // -1: floor(m / 4)
    int random_high_count = -1;  // -1: floor(m / 8)
    std::uint64_t sampling_seed = 0;
    std::uint64_t init_seed = 0;
    bool per_channel_heads = false;
    double alpha_init = 0.5;
    double revin_eps = 1e-5;
};

struct RunOptions {
    DataOptions data;
    ModelOptions model;
    TrainConfig train;
    std::string out_dir;  // empty: $SFFP_OUTPUT_ROOT/<command>, else runs/<command>
    std::string format = "csv";
    int repeats = 5;
    int workers = 1;
    std::vector<double> alpha_grid{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
    std::vector<int> cutoffs{4, 8, 16, 24, 48, 96};
    std::vector<std::string> strategies{"random-only", "lowpass-only", "hybrid"};
    std::string ablation_filter = "all-pass";
};

inline void add_data_options(CLI::App& app, DataOptions& d) {
    app.add_option("--data", d.data_path, "CSV panel (timestamp column + one column per band)");
    app.add_option("--generator", d.generator, "synthetic generator when --data is absent")
        ->check(CLI::IsMember({"chirp", "trend"}))
        ->capture_default_str();
    app.add_option("--t-len", d.t_len, "synthetic rows")->capture_default_str();
    app.add_option("--bands", d.bands, "synthetic bands")->capture_default_str();
    app.add_option("--chirp-rate", d.chirp_rate, "chirp rate c (phase pi c t^2)")->capture_default_str();
    app.add_option("--f0", d.f0, "chirp start frequency, cycles per sample")->capture_default_str();
    app.add_option("--noise", d.noise_sigma, "noise standard deviation")->capture_default_str();
    app.add_option("--trend-slope", d.trend_slope, "trend slope per sample")->capture_default_str();
    app.add_option("--trend-kind", d.trend_kind, "trend generator shape")
        ->check(CLI::IsMember({"linear", "quadratic"}))
        ->capture_default_str();
    app.add_option("--ar1-phi", d.ar1_phi, "trend generator AR(1) coefficient")->capture_default_str();
    app.add_option("--gen-seed", d.gen_seed, "generator seed")->capture_default_str();
}

inline void add_model_options(CLI::App& app, ModelOptions& m) {
    app.add_option("-m,--input-len", m.m, "input length M")->capture_default_str();
    app.add_option("-p,--horizon", m.p, "prediction horizon P")->capture_default_str();
    app.add_option("--lowpass-cutoff", m.lowpass_cutoff, "retained low bins c (-1: M/4)")->capture_default_str();
    app.add_option("--random-count", m.random_high_count, "random high bins s (-1: M/8)")->capture_default_str();
    app.add_option("--sampling-seed", m.sampling_seed, "seed for the random bins")->capture_default_str();
    app.add_option("--init-seed", m.init_seed, "seed for head initialisation")->capture_default_str();
    app.add_option("--per-channel-heads", m.per_channel_heads, "one linear head per band")->capture_default_str();
    app.add_option("--alpha-init", m.alpha_init, "initial fractional order")->capture_default_str();
    app.add_option("--revin-eps", m.revin_eps, "RevIN std floor")->capture_default_str();
}

inline void add_train_options(CLI::App& app, TrainConfig& t) {
    app.add_option("--lr", t.learning_rate, "Adam learning rate")->capture_default_str();
    app.add_option("--alpha-lr", t.alpha_learning_rate, "Adam learning rate for the order")->capture_default_str();
    app.add_option("--batch-size", t.batch_size)->capture_default_str();
    app.add_option("--epochs", t.max_epochs, "epoch budget")->capture_default_str();
    app.add_option("--patience", t.patience, "early-stopping patience")->capture_default_str();
    app.add_option("--seed", t.seed, "shuffle seed")->capture_default_str();
    app.add_option("--stride", t.stride, "training window stride")->capture_default_str();
    app.add_option("--freeze", t.frozen, "parameter groups held fixed")->delimiter(',');
    app.add_option("--record-timing", t.record_timing, "write wall-clock times (breaks byte-identical reruns)")
        ->capture_default_str();
}

inline void add_output_options(CLI::App& app, RunOptions& r) {
    app.add_option("-o,--out", r.out_dir, "output directory");
    app.add_option("--format", r.format, "report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

inline void add_experiment_options(CLI::App& app, RunOptions& r) {
    app.add_option("--repeats", r.repeats, "training repeats per configuration")->capture_default_str();
    app.add_option("--workers", r.workers, "configurations trained concurrently")->capture_default_str();
}

inline ModelConfig model_config(const ModelOptions& o, int f) {
    ModelConfig mc;
    mc.m = o.m;
    mc.p = o.p;
    mc.f = f;
    if (o.lowpass_cutoff >= 0) mc.lowpass_cutoff = o.lowpass_cutoff;
    if (o.random_high_count >= 0) mc.random_high_count = o.random_high_count;
    mc.sampling_seed = o.sampling_seed;
    mc.init_seed = o.init_seed;
    mc.per_channel_heads = o.per_channel_heads;
    mc.alpha_init = o.alpha_init;
    mc.revin_eps = o.revin_eps;
    return mc;
}

struct LoadedPanel {
    SeriesPanel panel;
    std::string tag;
    std::size_t repaired_cells = 0;
};

inline LoadedPanel load_panel(const DataOptions& d) {
    if (!d.data_path.empty()) {
        auto r = load_csv(d.data_path);
        return {std::move(r.panel), std::filesystem::path(d.data_path).stem().string(), r.report.repaired_cells};
    }
    if (d.generator == "chirp") {
        ChirpSpec spec;
        spec.t_len = d.t_len;
        spec.f_bands = d.bands;
        spec.chirp_rate = d.chirp_rate;
        spec.f0 = d.f0;
        spec.noise_sigma = d.noise_sigma;
        spec.trend_slope = d.trend_slope;
        spec.seed = d.gen_seed;
        spec.oracle_window = std::min(d.t_len, 256);
        return {synth_chirp(spec).panel, "synthetic-chirp", 0};
    }
    TrendNoiseSpec spec;
    spec.t_len = d.t_len;
    spec.f_bands = d.bands;
    spec.trend_kind = d.trend_kind == "quadratic" ? TrendKind::Quadratic : TrendKind::Linear;
    spec.ar1_phi = d.ar1_phi;
    spec.noise_sigma = d.noise_sigma;
    spec.slope = d.trend_slope;
    spec.seed = d.gen_seed;
    return {synth_trend_noise(spec), "synthetic-trend", 0};
}

inline std::filesystem::path resolve_out_dir(const std::string& explicit_dir, const std::string& command) {
    if (!explicit_dir.empty()) return explicit_dir;
    const char* root = std::getenv("SFFP_OUTPUT_ROOT");
    return std::filesystem::path(root && *root ? root : "runs") / command;
}

}  // namespace sffp::cli
