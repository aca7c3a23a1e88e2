// sffp: train, evaluate and inspect fractional-Fourier linear forecasters.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "run_config.hpp"
#include "sffp/checkpoint.hpp"
#include "sffp/data.hpp"
#include "sffp/eval.hpp"
#include "sffp/fracfourier.hpp"
#include "sffp/train.hpp"

namespace fs = std::filesystem;
using namespace sffp;
using namespace sffp::cli;

namespace {

ReportFormat report_format(const std::string& s) { return s == "json" ? ReportFormat::Json : ReportFormat::Csv; }
std::string report_ext(const std::string& s) { return s == "json" ? ".json" : ".csv"; }

fs::path prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

/// Effective options of the active subcommand, readable back with --config.
void write_effective_config(const CLI::App& cmd, const fs::path& dir) {
    write_text(dir / "config.ini", "[" + cmd.get_name() + "]\n" + cmd.config_to_str(true, false));
}

ExperimentConfig experiment_config(const RunOptions& o, const std::string& dataset_tag) {
    ExperimentConfig cfg;
    cfg.model = model_config(o.model, 1);
    cfg.train = o.train;
    cfg.repeats = o.repeats;
    cfg.workers = o.workers;
    cfg.dataset_tag = dataset_tag;
    cfg.ablation_all_pass = o.ablation_filter == "all-pass";
    return cfg;
}

void print_reports(const std::vector<MetricReport>& reports) {
    std::printf("%-22s %6s %12s %12s %10s %8s\n", "model", "p", "mse", "mae", "alpha", "epochs");
    for (const auto& r : sorted_reports(reports)) {
        std::printf("%-22s %6d %12.6f %12.6f %10.4f %8d\n", r.model_tag.c_str(), r.p, r.mse, r.mae, r.alpha,
                    r.epoch_budget);
    }
}

// ---------------------------------------------------------------------------

int cmd_train(const CLI::App& cmd, const RunOptions& o) {
    const LoadedPanel data = load_panel(o.data);
    const ModelConfig mc = model_config(o.model, data.panel.f());
    const fs::path dir = prepare_dir(resolve_out_dir(o.out_dir, "train"));
    write_effective_config(cmd, dir);
    if (data.repaired_cells > 0) std::printf("repaired %zu missing cells by forward fill\n", data.repaired_cells);

    const TrainResult result = train(data.panel, mc, o.train);
    const auto val = sliding_windows(data.panel, mc.m, mc.p, 1, Split::Val);
    const auto test = sliding_windows(data.panel, mc.m, mc.p, 1, Split::Test);
    std::vector<MetricReport> reports{evaluate(result.model, val, "sffp", data.tag + ":val"),
                                      evaluate(result.model, test, "sffp", data.tag + ":test")};
    for (auto& r : reports) {
        r.epoch_budget = o.train.max_epochs;
    }

    save_checkpoint(result.model, dir / "checkpoint.json");
    save_history_csv(result.history, dir / "history.csv");
    emit_report(reports, dir / ("metrics" + report_ext(o.format)), report_format(o.format));

    std::printf("epochs run %d, best epoch %d, alpha %.4f\n", result.epochs_run, result.best_epoch,
                result.model.canonical_alpha());
    std::printf("val  mse %.6f mae %.6f (%d windows)\n", reports[0].mse, reports[0].mae, reports[0].n_windows);
    std::printf("test mse %.6f mae %.6f (%d windows)\n", reports[1].mse, reports[1].mae, reports[1].n_windows);
    std::printf("wrote %s\n", dir.string().c_str());
    return 0;
}

struct PredictOptions {
    std::string checkpoint;
    std::string data;
    std::string out;
};

int cmd_predict(const PredictOptions& o) {
    const SffpModel model = load_checkpoint(o.checkpoint);
    const SeriesPanel input = load_csv(o.data).panel;
    if (input.f() != model.f) {
        throw ConfigError("checkpoint " + o.checkpoint + " expects " + std::to_string(model.f) + " bands, " +
                          o.data + " has " + std::to_string(input.f()));
    }
    if (input.t() < model.m) {
        throw InsufficientDataError(o.data + " has " + std::to_string(input.t()) + " rows, the model needs M = " +
                                    std::to_string(model.m));
    }
    const Forecast fc = forward(input.values.bottomRows(model.m), model);

    SeriesPanel out;
    out.values = fc.values;
    out.band_labels = input.band_labels;
    out.timestamp_format = input.timestamp_format;
    out.timestamp_header = input.timestamp_header;
    out.sample_interval = input.sample_interval;
    for (int k = 1; k <= model.p; ++k) out.timestamps.push_back(input.timestamps.back() + k * input.sample_interval);

    const fs::path path = o.out.empty() ? resolve_out_dir("", "predict") / "forecast.csv" : fs::path(o.out);
    if (path.has_parent_path()) prepare_dir(path.parent_path());
    save_csv(out, path);
    std::printf("forecast %d x %d written to %s (max imaginary residual %.3g)\n", model.p, model.f,
                path.string().c_str(), fc.diagnostics.max_imag_residual);
    return 0;
}

int cmd_ablate(const CLI::App& cmd, const RunOptions& o) {
    const LoadedPanel data = load_panel(o.data);
    const fs::path dir = prepare_dir(resolve_out_dir(o.out_dir, "ablate"));
    write_effective_config(cmd, dir);
    const auto reports = run_transformation_ablation(data.panel, experiment_config(o, data.tag));
    emit_report(reports, dir / ("ablation" + report_ext(o.format)), report_format(o.format));
    print_reports(reports);
    return 0;
}

int cmd_sweep_alpha(const CLI::App& cmd, const RunOptions& o) {
    const LoadedPanel data = load_panel(o.data);
    const fs::path dir = prepare_dir(resolve_out_dir(o.out_dir, "sweep-alpha"));
    write_effective_config(cmd, dir);
    const SweepResult sweep = run_alpha_sweep(data.panel, o.alpha_grid, experiment_config(o, data.tag));
    auto rows = sweep.reports;
    rows.push_back(*sweep.adaptive);
    emit_report(rows, dir / ("alpha_sweep" + report_ext(o.format)), report_format(o.format));
    write_sweep_file(sweep, dir / "alpha_sweep_plot.csv");
    print_reports(rows);
    std::printf("grid minimum at alpha %.4g, learned alpha %.4f\n", sweep.best_axis_value(), *sweep.learned_alpha);
    return 0;
}

int cmd_sweep_filter(const CLI::App& cmd, const RunOptions& o) {
    const LoadedPanel data = load_panel(o.data);
    const fs::path dir = prepare_dir(resolve_out_dir(o.out_dir, "sweep-filter"));
    write_effective_config(cmd, dir);
    std::vector<FilterStrategy> strategies;
    for (const auto& s : o.strategies) strategies.push_back(parse_strategy(s));
    const auto sweeps = run_filter_sweep(data.panel, o.cutoffs, strategies, experiment_config(o, data.tag));
    std::vector<MetricReport> rows;
    for (const auto& s : sweeps) {
        rows.insert(rows.end(), s.reports.begin(), s.reports.end());
        write_sweep_file(s, dir / ("filter_" + s.strategy + ".csv"));
    }
    emit_report(rows, dir / ("filter_sweep" + report_ext(o.format)), report_format(o.format));
    print_reports(rows);
    return 0;
}

struct AnalyzeOptions {
    double order_step = 0.01;
    int window = 96;
};

int cmd_analyze(const CLI::App& cmd, const RunOptions& o, const AnalyzeOptions& a) {
    const LoadedPanel data = load_panel(o.data);
    const fs::path dir = prepare_dir(resolve_out_dir(o.out_dir, "analyze"));
    write_effective_config(cmd, dir);
    const auto orders = frft::order_grid(0.0, 2.0 - a.order_step / 2.0, a.order_step);
    const int window = std::min(a.window, data.panel.t());
    for (int b = 0; b < data.panel.f(); ++b) {
        const std::string& label = data.panel.band_labels[static_cast<std::size_t>(b)];
        const Periodogram pg = periodogram(data.panel, b);
        std::ostringstream spectrum;
        spectrum << "frequency,power\n";
        for (std::size_t k = 0; k < pg.power.size(); ++k) {
            spectrum << detail::format_double(pg.frequency[k]) << ',' << detail::format_double(pg.power[k]) << '\n';
        }
        write_text(dir / ("periodogram_" + label + ".csv"), spectrum.str());
        const auto peak = std::max_element(pg.power.begin(), pg.power.end()) - pg.power.begin();

        // Concentration of the most recent window, after removing its mean.
        Eigen::VectorXd seg = data.panel.values.col(b).tail(window);
        seg.array() -= seg.mean();
        std::ostringstream conc;
        conc << "order,entropy\n";
        double best_order = 0.0;
        if (seg.squaredNorm() > 0.0) {
            const frft::CVector x = seg.cast<Complex>();
            const auto profile = frft::concentration_profile(x, orders);
            for (std::size_t i = 0; i < orders.size(); ++i) {
                conc << detail::format_double(orders[i]) << ',' << detail::format_double(profile[i]) << '\n';
            }
            best_order = frft::most_concentrated_order(x, orders);
        }
        write_text(dir / ("concentration_" + label + ".csv"), conc.str());
        std::printf("%-16s dominant frequency %.6g (bin %td), most concentrated order %.2f\n", label.c_str(),
                    pg.frequency[static_cast<std::size_t>(peak)], peak, best_order);
    }
    return 0;
}

struct GradcheckOptions {
    int trials = 10;
    int m = 8;
    int p = 4;
    int bands = 2;
    int windows = 3;
    std::uint64_t seed = 1;
    double step = 1e-5;
    double tol = 1e-4;
};

SffpModel random_model(const GradcheckOptions& g, std::uint64_t seed) {
    ModelConfig mc;
    mc.m = g.m;
    mc.p = g.p;
    mc.f = g.bands;
    mc.lowpass_cutoff = g.m / 2;
    mc.random_high_count = 2;
    mc.sampling_seed = seed;
    mc.init_seed = seed;
    SffpModel model = make_model(mc);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    model.params.alpha = 2.0 * u(rng);
    for (Eigen::Index i = 0; i < model.params.filter_weights.size(); ++i) {
        model.params.filter_weights(i) = Complex(1.0 + 0.5 * u(rng), 0.5 * u(rng));
    }
    for (auto& h : model.params.heads) {
        for (Eigen::Index i = 0; i < h.bias_real.size(); ++i) {
            h.bias_real(i) = 0.3 * u(rng);
            h.bias_imag(i) = 0.3 * u(rng);
        }
    }
    for (int c = 0; c < g.bands; ++c) {
        model.params.revin_gamma(c) = 1.0 + 0.4 * u(rng);
        model.params.revin_beta(c) = 0.3 * u(rng);
    }
    return model;
}

int cmd_gradcheck(const GradcheckOptions& g, const std::string& out_dir) {
    std::mt19937_64 rng(g.seed);
    std::normal_distribution<double> gauss;
    auto random_matrix = [&](int rows, int cols) {
        Eigen::MatrixXd x(rows, cols);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
        return x;
    };
    nlohmann::ordered_json doc;
    doc["trials"] = g.trials;
    doc["tolerance"] = g.tol;
    double worst = 0.0;
    bool ok = true;
    nlohmann::ordered_json per_group = nlohmann::ordered_json::object();
    for (int t = 0; t < g.trials; ++t) {
        const SffpModel model = random_model(g, g.seed + static_cast<std::uint64_t>(t) * 7919);
        std::vector<Eigen::MatrixXd> xs, ys;
        for (int w = 0; w < g.windows; ++w) {
            xs.push_back(random_matrix(g.m, g.bands));
            ys.push_back(random_matrix(g.p, g.bands));
        }
        const GradientCheckReport rep = gradient_check(model, xs, ys, g.step, g.tol);
        ok = ok && rep.pass;
        worst = std::max(worst, rep.max_rel_error);
        for (const auto& grp : rep.groups) {
            const double prev = per_group.value(grp.group, 0.0);
            per_group[grp.group] = std::max(prev, grp.max_rel_error);
        }
    }
    doc["max_relative_error"] = worst;
    doc["per_group_max_relative_error"] = per_group;
    doc["passed"] = ok;
    const fs::path dir = prepare_dir(resolve_out_dir(out_dir, "gradcheck"));
    write_text(dir / "gradcheck.json", doc.dump(2) + "\n");
    std::printf("%d trials, max relative error %.3e, %s\n", g.trials, worst, ok ? "PASS" : "FAIL");
    return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fractional-Fourier linear forecasting for spectrum time series"};
    app.set_config("--config", "", "read options from an INI/TOML file; command-line values take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    RunOptions run;
    auto* train_cmd = app.add_subcommand("train", "train one model and report validation/test metrics");
    add_data_options(*train_cmd, run.data);
    add_model_options(*train_cmd, run.model);
    add_train_options(*train_cmd, run.train);
    add_output_options(*train_cmd, run);

    PredictOptions pred;
    auto* predict_cmd = app.add_subcommand("predict", "forecast the next P rows after a CSV panel");
    predict_cmd->add_option("--checkpoint", pred.checkpoint, "trained checkpoint")->required();
    predict_cmd->add_option("--data", pred.data, "input CSV with at least M rows")->required();
    predict_cmd->add_option("-o,--out", pred.out, "forecast CSV path");

    auto* ablate_cmd = app.add_subcommand("ablate", "compare time-domain, FFT and learned-order transforms");
    auto* alpha_cmd = app.add_subcommand("sweep-alpha", "fixed-order sweep plus one learned-order model");
    auto* filter_cmd = app.add_subcommand("sweep-filter", "compare filter strategies over low-pass cutoffs");
    for (CLI::App* cmd : {ablate_cmd, alpha_cmd, filter_cmd}) {
        add_data_options(*cmd, run.data);
        add_model_options(*cmd, run.model);
        add_train_options(*cmd, run.train);
        add_output_options(*cmd, run);
        add_experiment_options(*cmd, run);
    }
    ablate_cmd->add_option("--ablation-filter", run.ablation_filter, "filter used by the FFT and FrFT variants")
        ->check(CLI::IsMember({"all-pass", "model"}))
        ->capture_default_str();
    alpha_cmd->add_option("--alpha-grid", run.alpha_grid, "fixed orders to train")->delimiter(',')
        ->capture_default_str();
    filter_cmd->add_option("--cutoffs", run.cutoffs, "low-pass cutoffs in bins")->delimiter(',')
        ->capture_default_str();
    filter_cmd->add_option("--strategies", run.strategies, "random-only, lowpass-only, hybrid")->delimiter(',')
        ->capture_default_str();

    AnalyzeOptions an;
    auto* analyze_cmd = app.add_subcommand("analyze", "periodogram and order-concentration profile per band");
    add_data_options(*analyze_cmd, run.data);
    analyze_cmd->add_option("-o,--out", run.out_dir, "output directory");
    analyze_cmd->add_option("--order-step", an.order_step, "order grid spacing")->capture_default_str();
    analyze_cmd->add_option("--window", an.window, "trailing samples used for the concentration profile")
        ->capture_default_str();

    GradcheckOptions gc;
    std::string gc_out;
    auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
    grad_cmd->add_option("--trials", gc.trials)->capture_default_str();
    grad_cmd->add_option("-m,--input-len", gc.m)->capture_default_str();
    grad_cmd->add_option("-p,--horizon", gc.p)->capture_default_str();
    grad_cmd->add_option("--bands", gc.bands)->capture_default_str();
    grad_cmd->add_option("--seed", gc.seed)->capture_default_str();
    grad_cmd->add_option("--step", gc.step, "central-difference step")->capture_default_str();
    grad_cmd->add_option("--tol", gc.tol, "relative-error tolerance")->capture_default_str();
    grad_cmd->add_option("-o,--out", gc_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(*train_cmd, run);
        if (*predict_cmd) return cmd_predict(pred);
        if (*ablate_cmd) return cmd_ablate(*ablate_cmd, run);
        if (*alpha_cmd) return cmd_sweep_alpha(*alpha_cmd, run);
        if (*filter_cmd) return cmd_sweep_filter(*filter_cmd, run);
        if (*analyze_cmd) return cmd_analyze(*analyze_cmd, run, an);
        if (*grad_cmd) return cmd_gradcheck(gc, gc_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sffp: error: %s\n", e.what());
        return 1;
    }
    return 1;
}
