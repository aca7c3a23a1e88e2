#pragma once

// Metrics and experiment runners: transformation ablation, fractional-order
// sweep and filter-strategy sweep. Every runner trains each configuration
// with the same seeds, splits and epoch budget, so differences between rows
// come from the configuration alone.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "sffp/data.hpp"
#include "sffp/errors.hpp"
#include "sffp/model.hpp"
#include "sffp/train.hpp"

namespace sffp {

struct MetricReport {
    std::string model_tag;
    std::string dataset_tag;
    int p = 0;
    double mse = 0.0;
    double mae = 0.0;
    int n_windows = 0;
    double runtime_seconds = 0.0;
    double mse_std = 0.0;  // across repeats
    double mae_std = 0.0;
    int repeats = 1;
    int epoch_budget = 0;  // max_epochs granted to every repeat
    double alpha = std::numeric_limits<double>::quiet_NaN();  // canonical order of the first repeat
    bool budget_valid = true;
};

/// MSE and MAE pooled over windows, horizon steps and channels.
inline MetricReport evaluate(const SffpModel& model, const WindowBatch& test, std::string model_tag = "sffp",
                             std::string dataset_tag = "") {
    if (test.empty()) throw InsufficientDataError("evaluate: empty test set");
    double sq = 0.0;
    double abs_sum = 0.0;
    double count = 0.0;
    constexpr std::size_t chunk = 256;
    for (std::size_t begin = 0; begin < test.size(); begin += chunk) {
        const std::size_t n = std::min(chunk, test.size() - begin);
        const auto inputs = std::span(test.inputs).subspan(begin, n);
        const PipelineTrace t = forward_trace(model, inputs);
        for (std::size_t w = 0; w < n; ++w) {
            const Eigen::MatrixXd err =
                window_prediction(t, model.p, model.f, static_cast<int>(w)) - test.targets[begin + w];
            sq += err.squaredNorm();
            abs_sum += err.cwiseAbs().sum();
            count += static_cast<double>(err.size());
        }
    }
    MetricReport report;
    report.model_tag = std::move(model_tag);
    report.dataset_tag = std::move(dataset_tag);
    report.p = model.p;
    report.mse = sq / count;
    report.mae = abs_sum / count;
    report.n_windows = static_cast<int>(test.size());
    report.alpha = model.canonical_alpha();
    return report;
}

/// True when every report was trained under the same epoch budget.
inline bool budgets_equal(const std::vector<MetricReport>& reports) {
    return std::all_of(reports.begin(), reports.end(),
                       [&](const MetricReport& r) { return r.epoch_budget == reports.front().epoch_budget; });
}

inline void mark_budget_validity(std::vector<MetricReport>& reports) {
    const bool ok = budgets_equal(reports);
    for (auto& r : reports) r.budget_valid = ok;
}

// ---------------------------------------------------------------------------
// Runners

struct ExperimentConfig {
    ModelConfig model;  // f is taken from the panel
    TrainConfig train;
    int repeats = 5;
    int workers = 1;
    /// Ablation filter: all-pass for every variant, so only the transform
    /// differs. When false, FFT and FrFT keep the configured filter.
    bool ablation_all_pass = true;
    std::string dataset_tag = "synthetic";
};

/// One trainable configuration. `prepare` adjusts the freshly initialised
/// model (e.g. zeroing parts that stay frozen).
struct Variant {
    std::string tag;
    ModelConfig model;
    TrainConfig train;
    std::function<void(SffpModel&)> prepare;
};

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

namespace detail {

struct Splits {
    WindowBatch train;
    WindowBatch val;
    WindowBatch test;
};

inline Splits make_splits(const SeriesPanel& panel, int m, int p, int stride) {
    return {sliding_windows(panel, m, p, stride, Split::Train), sliding_windows(panel, m, p, 1, Split::Val),
            sliding_windows(panel, m, p, 1, Split::Test)};
}

inline double stddev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

/// Trains `repeats` copies (init and shuffle seeds offset by the repeat
/// index) and reports test metrics as mean and standard deviation.
inline MetricReport run_variant(const detail::Splits& splits, const Variant& v, int repeats,
                                const std::string& dataset_tag) {
    if (repeats < 1) throw ConfigError("run_variant: repeats must be positive");
    const auto start = std::chrono::steady_clock::now();
    std::vector<double> mses, maes;
    MetricReport report;
    for (int r = 0; r < repeats; ++r) {
        ModelConfig mc = v.model;
        mc.init_seed += static_cast<std::uint64_t>(r);
        TrainConfig tc = v.train;
        tc.seed += static_cast<std::uint64_t>(r);
        SffpModel model = make_model(mc);
        if (v.prepare) v.prepare(model);
        const TrainResult trained = train_on_windows(std::move(model), splits.train, splits.val, tc);
        MetricReport one = evaluate(trained.model, splits.test, v.tag, dataset_tag);
        if (r == 0) report = one;
        mses.push_back(one.mse);
        maes.push_back(one.mae);
    }
    report.mse = std::accumulate(mses.begin(), mses.end(), 0.0) / repeats;
    report.mae = std::accumulate(maes.begin(), maes.end(), 0.0) / repeats;
    report.mse_std = detail::stddev(mses);
    report.mae_std = detail::stddev(maes);
    report.repeats = repeats;
    report.epoch_budget = v.train.max_epochs;
    if (v.train.record_timing) {
        report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return report;
}

/// Time-domain variant: order 0, all-pass filter, real-only head. With the
/// imaginary parts held at zero every activation stays real.
inline Variant time_domain_variant(ModelConfig mc, TrainConfig tc) {
    mc.alpha_init = 0.0;
    mc.lowpass_cutoff = mc.m;
    mc.random_high_count = 0;
    for (const char* g : {"alpha", "filter_weights", "lin_imag", "bias_imag"}) tc.frozen.emplace_back(g);
    return {"no", mc, tc, [](SffpModel& model) {
                for (auto& h : model.params.heads) {
                    h.weight_imag.setZero();
                    h.bias_imag.setZero();
                }
            }};
}

inline Variant frozen_order_variant(std::string tag, ModelConfig mc, TrainConfig tc, double order) {
    mc.alpha_init = order;
    tc.frozen.emplace_back("alpha");
    return {std::move(tag), mc, tc, {}};
}

inline Variant learnable_order_variant(std::string tag, ModelConfig mc, TrainConfig tc) {
    return {std::move(tag), mc, tc, {}};
}

inline std::vector<Variant> ablation_variants(const ExperimentConfig& cfg) {
    ModelConfig mc = cfg.model;
    if (cfg.ablation_all_pass) {
        mc.lowpass_cutoff = mc.m;
        mc.random_high_count = 0;
    }
    return {time_domain_variant(cfg.model, cfg.train), frozen_order_variant("fft", mc, cfg.train, 1.0),
            learnable_order_variant("frft", mc, cfg.train)};
}

inline ExperimentConfig bind_panel(ExperimentConfig cfg, const SeriesPanel& panel) {
    cfg.model.f = panel.f();
    return cfg;
}

/// NO (time domain), FFT (order frozen at 1) and FrFT (learned order), all
/// with the linear head.
inline std::vector<MetricReport> run_transformation_ablation(const SeriesPanel& panel, ExperimentConfig cfg) {
    cfg = bind_panel(std::move(cfg), panel);
    const auto splits = detail::make_splits(panel, cfg.model.m, cfg.model.p, cfg.train.stride);
    const auto variants = ablation_variants(cfg);
    std::vector<MetricReport> reports(variants.size());
    parallel_for(variants.size(), cfg.workers, [&](std::size_t i) {
        reports[i] = run_variant(splits, variants[i], cfg.repeats, cfg.dataset_tag);
    });
    mark_budget_validity(reports);
    return reports;
}

struct SweepResult {
    std::string axis_label;
    std::vector<double> axis_values;
    std::vector<MetricReport> reports;
    std::string strategy;
    std::optional<MetricReport> adaptive;  // learned-order run, alpha sweeps only
    std::optional<double> learned_alpha;

    /// Axis value with the lowest MSE (first on ties).
    double best_axis_value() const {
        const auto it = std::min_element(reports.begin(), reports.end(),
                                         [](const MetricReport& a, const MetricReport& b) { return a.mse < b.mse; });
        return axis_values[static_cast<std::size_t>(it - reports.begin())];
    }
};

/// One model per grid order with the order frozen, plus one learned-order model.
inline SweepResult run_alpha_sweep(const SeriesPanel& panel, const std::vector<double>& alpha_grid,
                                   ExperimentConfig cfg) {
    if (alpha_grid.empty()) throw ConfigError("alpha sweep: empty grid");
    for (double a : alpha_grid) {
        if (a < -2.0 || a > 2.0) throw ConfigError("alpha sweep: grid values must lie in [-2, 2]");
    }
    cfg = bind_panel(std::move(cfg), panel);
    const auto splits = detail::make_splits(panel, cfg.model.m, cfg.model.p, cfg.train.stride);
    std::vector<Variant> variants;
    for (double a : alpha_grid) {
        char tag[32];
        std::snprintf(tag, sizeof tag, "alpha=%.4g", a);
        variants.push_back(frozen_order_variant(tag, cfg.model, cfg.train, a));
    }
    variants.push_back(learnable_order_variant("alpha=learned", cfg.model, cfg.train));
    std::vector<MetricReport> reports(variants.size());
    parallel_for(variants.size(), cfg.workers, [&](std::size_t i) {
        reports[i] = run_variant(splits, variants[i], cfg.repeats, cfg.dataset_tag);
    });
    mark_budget_validity(reports);

    SweepResult result{"alpha", alpha_grid, {}, "hybrid"};
    result.adaptive = reports.back();
    result.learned_alpha = reports.back().alpha;
    reports.pop_back();
    result.reports = std::move(reports);
    return result;
}

enum class FilterStrategy { RandomOnly, LowpassOnly, Hybrid };

inline const char* strategy_name(FilterStrategy s) {
    switch (s) {
        case FilterStrategy::RandomOnly: return "random-only";
        case FilterStrategy::LowpassOnly: return "lowpass-only";
        case FilterStrategy::Hybrid: return "hybrid";
    }
    return "?";
}

inline FilterStrategy parse_strategy(std::string_view name) {
    if (name == "random-only") return FilterStrategy::RandomOnly;
    if (name == "lowpass-only") return FilterStrategy::LowpassOnly;
    if (name == "hybrid") return FilterStrategy::Hybrid;
    throw ConfigError("unknown filter strategy '" + std::string(name) + "'");
}

/// Filter sizes for cutoff c: low-pass (c, 0), random (0, c), hybrid (c, s)
/// with s the configured random count (default floor(m / 8)).
inline std::pair<int, int> strategy_filter(FilterStrategy s, int cutoff, const ModelConfig& mc) {
    switch (s) {
        case FilterStrategy::LowpassOnly: return {cutoff, 0};
        case FilterStrategy::RandomOnly: return {0, cutoff};
        case FilterStrategy::Hybrid: return {cutoff, mc.random_high_count.value_or(mc.m / 8)};
    }
    return {cutoff, 0};
}

/// Learned-order models for every (strategy, cutoff); cutoffs are absolute bin counts.
inline std::vector<SweepResult> run_filter_sweep(const SeriesPanel& panel, const std::vector<int>& cutoff_grid,
                                                 const std::vector<FilterStrategy>& strategies, ExperimentConfig cfg) {
    if (cutoff_grid.empty() || strategies.empty()) throw ConfigError("filter sweep: empty grid or strategy list");
    cfg = bind_panel(std::move(cfg), panel);
    for (int c : cutoff_grid) {
        if (c < 0 || c > cfg.model.m) throw ConfigError("filter sweep: cutoff outside [0, m]");
    }
    const auto splits = detail::make_splits(panel, cfg.model.m, cfg.model.p, cfg.train.stride);
    std::vector<Variant> variants;
    for (FilterStrategy s : strategies) {
        for (int c : cutoff_grid) {
            ModelConfig mc = cfg.model;
            std::tie(mc.lowpass_cutoff, mc.random_high_count) = strategy_filter(s, c, cfg.model);
            variants.push_back(learnable_order_variant(std::string(strategy_name(s)) + "/c=" + std::to_string(c),
                                                       mc, cfg.train));
        }
    }
    std::vector<MetricReport> reports(variants.size());
    parallel_for(variants.size(), cfg.workers, [&](std::size_t i) {
        reports[i] = run_variant(splits, variants[i], cfg.repeats, cfg.dataset_tag);
    });
    mark_budget_validity(reports);

    std::vector<SweepResult> out;
    std::vector<double> axis(cutoff_grid.begin(), cutoff_grid.end());
    for (std::size_t si = 0; si < strategies.size(); ++si) {
        SweepResult r{"cutoff", axis, {}, strategy_name(strategies[si])};
        for (std::size_t ci = 0; ci < cutoff_grid.size(); ++ci) {
            r.reports.push_back(reports[si * cutoff_grid.size() + ci]);
        }
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

enum class ReportFormat { Csv, Json };

inline nlohmann::ordered_json report_to_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["model_tag"] = r.model_tag;
    j["dataset_tag"] = r.dataset_tag;
    j["p"] = r.p;
    j["mse"] = r.mse;
    j["mae"] = r.mae;
    j["n_windows"] = r.n_windows;
    j["runtime_seconds"] = r.runtime_seconds;
    j["mse_std"] = r.mse_std;
    j["mae_std"] = r.mae_std;
    j["repeats"] = r.repeats;
    j["epoch_budget"] = r.epoch_budget;
    j["alpha"] = std::isfinite(r.alpha) ? nlohmann::ordered_json(r.alpha) : nlohmann::ordered_json(nullptr);
    j["budget_valid"] = r.budget_valid;
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.model_tag = j.at("model_tag").get<std::string>();
    r.dataset_tag = j.at("dataset_tag").get<std::string>();
    r.p = j.at("p").get<int>();
    r.mse = j.at("mse").get<double>();
    r.mae = j.at("mae").get<double>();
    r.n_windows = j.at("n_windows").get<int>();
    r.runtime_seconds = j.at("runtime_seconds").get<double>();
    r.mse_std = j.value("mse_std", 0.0);
    r.mae_std = j.value("mae_std", 0.0);
    r.repeats = j.value("repeats", 1);
    r.epoch_budget = j.value("epoch_budget", 0);
    if (j.contains("alpha") && !j["alpha"].is_null()) r.alpha = j["alpha"].get<double>();
    r.budget_valid = j.value("budget_valid", true);
    return r;
}

/// Rows sorted by (model_tag, p); the sort is stable so equal keys keep
/// their input order.
inline std::vector<MetricReport> sorted_reports(std::vector<MetricReport> reports) {
    std::stable_sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
        return std::tie(a.model_tag, a.p) < std::tie(b.model_tag, b.p);
    });
    return reports;
}

inline void write_reports(std::ostream& out, const std::vector<MetricReport>& reports, ReportFormat format) {
    const auto rows = sorted_reports(reports);
    if (format == ReportFormat::Json) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) arr.push_back(report_to_json(r));
        out << arr.dump(2) << '\n';
        return;
    }
    out << "model_tag,dataset_tag,p,mse,mae,n_windows,runtime_seconds,mse_std,mae_std,repeats,epoch_budget,alpha,"
           "budget_valid\n";
    for (const auto& r : rows) {
        out << r.model_tag << ',' << r.dataset_tag << ',' << r.p << ',' << detail::format_double(r.mse) << ','
            << detail::format_double(r.mae) << ',' << r.n_windows << ',' << detail::format_double(r.runtime_seconds)
            << ',' << detail::format_double(r.mse_std) << ',' << detail::format_double(r.mae_std) << ',' << r.repeats
            << ',' << r.epoch_budget << ',' << (std::isfinite(r.alpha) ? detail::format_double(r.alpha) : "")
            << ',' << (r.budget_valid ? "true" : "false") << '\n';
    }
}

inline void emit_report(const std::vector<MetricReport>& reports, const std::filesystem::path& path,
                        ReportFormat format) {
    if (reports.empty()) throw std::invalid_argument("emit_report: no reports");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report " + path.string());
    write_reports(out, reports, format);
    if (!out) throw IoError("write failed for report " + path.string());
}

inline std::vector<MetricReport> read_json_reports(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const auto j = nlohmann::json::parse(in);
    std::vector<MetricReport> out;
    for (const auto& item : j) out.push_back(report_from_json(item));
    return out;
}

/// Plot-ready two-column file: axis value, mse.
inline void write_sweep_file(const SweepResult& sweep, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << sweep.axis_label << ",mse\n";
    for (std::size_t i = 0; i < sweep.reports.size(); ++i) {
        out << detail::format_double(sweep.axis_values[i]) << ',' << detail::format_double(sweep.reports[i].mse)
            << '\n';
    }
}

}  // namespace sffp
