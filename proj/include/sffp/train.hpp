#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sffp/data.hpp"
#include "sffp/errors.hpp"
#include "sffp/model.hpp"

namespace sffp {

struct TrainConfig {
    double learning_rate = 1e-3;
    double alpha_learning_rate = 1e-2;
    int batch_size = 32;
    int max_epochs = 50;
    int patience = 5;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int stride = 1;
    /// Parameter groups held fixed: alpha, filter_weights, lin_real, lin_imag,
    /// bias_real, bias_imag, revin_gamma, revin_beta.
    std::vector<std::string> frozen;
    /// Wall-clock columns are written as 0 unless set, so that identical
    /// runs produce identical files.
    bool record_timing = false;

    void validate() const {
        if (!(learning_rate > 0.0) || !(alpha_learning_rate > 0.0)) {
            throw ConfigError("train config: learning rates must be positive");
        }
        if (batch_size < 1 || max_epochs < 1 || patience < 1 || stride < 1) {
            throw ConfigError("train config: batch_size, max_epochs, patience, stride must be positive");
        }
        if (patience > max_epochs) throw ConfigError("train config: patience exceeds max_epochs");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
            !(adam_eps > 0.0)) {
            throw ConfigError("train config: invalid Adam constants");
        }
    }

    bool is_frozen(std::string_view group) const {
        const auto base = group_base_name(group);
        return std::find(frozen.begin(), frozen.end(), base) != frozen.end();
    }
};

/// Gradients of the mean batch loss, one slot per model parameter. Complex
/// parameters hold (dL/dRe, dL/dIm).
struct GradientTape {
    ModelParameters grads;

    static GradientTape zeros_like(const SffpModel& model) {
        GradientTape tape;
        tape.grads.alpha = 0.0;
        tape.grads.filter_weights = CVector::Zero(model.m);
        for (std::size_t h = 0; h < model.params.heads.size(); ++h) {
            tape.grads.heads.push_back(LinearHead::zeros(model.p, model.m));
        }
        tape.grads.revin_gamma = Eigen::VectorXd::Zero(model.f);
        tape.grads.revin_beta = Eigen::VectorXd::Zero(model.f);
        return tape;
    }

    bool all_finite() const {
        bool ok = true;
        for_each_group(grads, [&](std::string_view, std::span<const double> g) {
            for (double v : g) ok = ok && std::isfinite(v);
        });
        return ok;
    }
};

/// (1 / (P F)) * ||pred - truth||^2
inline double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
        throw ShapeError("mse_loss: prediction and truth shapes differ");
    }
    if (pred.size() == 0) throw ShapeError("mse_loss: empty input");
    return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

namespace detail {

inline void check_batch(const SffpModel& model, std::span<const Eigen::MatrixXd> inputs,
                        std::span<const Eigen::MatrixXd> targets) {
    if (inputs.empty()) throw ShapeError("batch is empty");
    if (inputs.size() != targets.size()) throw ShapeError("batch inputs and targets differ in count");
    for (const auto& y : targets) {
        if (y.rows() != model.p || y.cols() != model.f) throw ShapeError("target window must be p x f");
    }
}

inline Eigen::MatrixXd stack_targets(const PipelineTrace& t, std::span<const Eigen::MatrixXd> targets, int f) {
    Eigen::MatrixXd stacked(targets.front().rows(), static_cast<Eigen::Index>(targets.size()) * f);
    for (std::size_t w = 0; w < targets.size(); ++w) {
        for (int ch = 0; ch < f; ++ch) stacked.col(t.column(ch, static_cast<int>(w))) = targets[w].col(ch);
    }
    return stacked;
}

}  // namespace detail

/// Mean of the per-window MSE over a batch.
inline double batch_loss(const SffpModel& model, std::span<const Eigen::MatrixXd> inputs,
                         std::span<const Eigen::MatrixXd> targets) {
    detail::check_batch(model, inputs, targets);
    const PipelineTrace t = forward_trace(model, inputs);
    const Eigen::MatrixXd truth = detail::stack_targets(t, targets, model.f);
    return (t.outputs - truth).squaredNorm() / static_cast<double>(t.outputs.size());
}

/// Mean loss over a whole window set, evaluated in chunks.
inline double dataset_loss(const SffpModel& model, const WindowBatch& windows, std::size_t chunk = 256) {
    if (windows.empty()) throw InsufficientDataError("dataset_loss: no windows");
    double total = 0.0;
    for (std::size_t begin = 0; begin < windows.size(); begin += chunk) {
        const std::size_t n = std::min(chunk, windows.size() - begin);
        total += batch_loss(model, std::span(windows.inputs).subspan(begin, n),
                            std::span(windows.targets).subspan(begin, n)) *
                 static_cast<double>(n);
    }
    return total / static_cast<double>(windows.size());
}

/// Reverse pass through the fixed pipeline. Fills `tape` with the exact
/// gradient of the mean batch loss and returns that loss.
///
/// For a complex intermediate v the adjoint carried is g(v) = dL/dRe v + i dL/dIm v;
/// through a linear map w = M v it propagates as g(v) = M^H g(w).
inline double backward(const SffpModel& model, std::span<const Eigen::MatrixXd> inputs,
                       std::span<const Eigen::MatrixXd> targets, GradientTape& tape) {
    detail::check_batch(model, inputs, targets);
    const PipelineTrace t = forward_trace(model, inputs);
    const Eigen::MatrixXd residual = t.outputs - detail::stack_targets(t, targets, model.f);
    const double loss = residual.squaredNorm() / static_cast<double>(residual.size());

    tape = GradientTape::zeros_like(model);
    auto& g = tape.grads;
    const double scale = 2.0 / static_cast<double>(residual.size());
    const int cols = static_cast<int>(residual.cols());

    // Denormalisation: out = (r - beta) / gamma * std + mean.
    Eigen::MatrixXd g_restored(model.p, cols);
    for (int w = 0; w < t.batch; ++w) {
        const InstanceStats& s = t.stats[static_cast<std::size_t>(w)];
        for (int ch = 0; ch < model.f; ++ch) {
            const int c = t.column(ch, w);
            const double gamma = model.params.revin_gamma(ch);
            const double beta = model.params.revin_beta(ch);
            const double k = s.std(ch) / gamma;
            g_restored.col(c) = scale * k * residual.col(c);
            g.revin_beta(ch) -= g_restored.col(c).sum();
            g.revin_gamma(ch) -= (g_restored.col(c).array() * (t.restored.col(c).real().array() - beta)).sum() / gamma;
        }
    }

    // Inverse transform: r = K_p^H q.
    const CMatrix g_r = g_restored.cast<Complex>();
    const CMatrix g_q = t.output_op.kernel() * g_r;
    g.alpha += ((t.output_op.order_derivative() * g_r).conjugate().cwiseProduct(t.head_out)).real().sum();

    // Heads: q = A y + b.
    CMatrix g_y(model.m, cols);
    const int n_heads = static_cast<int>(model.params.heads.size());
    const int block = cols / n_heads;
    for (int h = 0; h < n_heads; ++h) {
        const auto gq = g_q.middleCols(h * block, block);
        const auto y = t.filtered.middleCols(h * block, block);
        LinearHead& gh = g.heads[static_cast<std::size_t>(h)];
        gh.bias_real += gq.real().rowwise().sum();
        gh.bias_imag += gq.imag().rowwise().sum();
        const CMatrix outer = gq * y.adjoint();
        gh.weight_real += outer.real();
        gh.weight_imag += outer.imag();
        g_y.middleCols(h * block, block) = model.params.heads[static_cast<std::size_t>(h)].weight().adjoint() * gq;
    }

    // Filter: y = mask * W * x.
    CMatrix g_x = CMatrix::Zero(model.m, cols);
    for (int i = 0; i < model.m; ++i) {
        if (!model.filter.keep_mask[static_cast<std::size_t>(i)]) continue;
        g.filter_weights(i) = (g_y.row(i).array() * t.transformed.row(i).array().conjugate()).sum();
        g_x.row(i) = std::conj(model.params.filter_weights(i)) * g_y.row(i);
    }

    // Forward transform: x = K_m z with z real.
    Eigen::MatrixXd z(model.m, cols);
    for (int c = 0; c < cols; ++c) {
        const int ch = c / t.batch;
        z.col(c) = model.params.revin_gamma(ch) * t.standardized.col(c).array() + model.params.revin_beta(ch);
    }
    const Eigen::MatrixXd g_z = (t.input_op.kernel().adjoint() * g_x).real();
    g.alpha += (g_x.conjugate().cwiseProduct(t.input_op.order_derivative() * z.cast<Complex>())).real().sum();

    // Normalisation: z = gamma * standardized + beta.
    for (int c = 0; c < cols; ++c) {
        const int ch = c / t.batch;
        g.revin_gamma(ch) += g_z.col(c).dot(t.standardized.col(c));
        g.revin_beta(ch) += g_z.col(c).sum();
    }

    if (!tape.all_finite()) throw DivergedError("backward: non-finite gradient");
    return loss;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
    long step = 0;
};

/// One bias-corrected Adam update. The alpha group uses alpha_learning_rate;
/// frozen groups are skipped.
inline void adam_step(SffpModel& model, const GradientTape& tape, AdamState& state, const TrainConfig& cfg) {
    std::vector<std::span<const double>> grads;
    for_each_group(tape.grads, [&](std::string_view, std::span<const double> g) { grads.push_back(g); });
    if (state.first.empty()) {
        for (const auto& g : grads) {
            state.first.emplace_back(g.size(), 0.0);
            state.second.emplace_back(g.size(), 0.0);
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
    std::size_t group = 0;
    for_each_group(model.params, [&](std::string_view name, std::span<double> values) {
        const std::size_t gi = group++;
        if (values.size() != grads[gi].size()) throw ShapeError("adam_step: tape does not match model");
        if (cfg.is_frozen(name)) return;
        const double lr = name == "alpha" ? cfg.alpha_learning_rate : cfg.learning_rate;
        auto& m1 = state.first[gi];
        auto& m2 = state.second[gi];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double gv = grads[gi][i];
            m1[i] = cfg.adam_beta1 * m1[i] + (1.0 - cfg.adam_beta1) * gv;
            m2[i] = cfg.adam_beta2 * m2[i] + (1.0 - cfg.adam_beta2) * gv * gv;
            values[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
        }
    });
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double alpha = 0.0;      // canonical
    double wall_time = 0.0;  // seconds since start; 0 unless timing is recorded
};

struct TrainResult {
    SffpModel model;  // best-validation parameters
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_mse = std::numeric_limits<double>::infinity();
    int epochs_run = 0;
};

/// Fisher-Yates driven by raw engine output.
inline void shuffle_indices(std::vector<std::size_t>& order, std::mt19937_64& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
}

/// Mini-batch Adam with early stopping on validation MSE.
inline TrainResult train_on_windows(SffpModel model, const WindowBatch& train_set, const WindowBatch& val_set,
                                    const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (train_set.empty() || val_set.empty()) throw InsufficientDataError("train: empty train or validation set");
    const auto start = std::chrono::steady_clock::now();

    TrainResult result{model};
    AdamState adam;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Eigen::MatrixXd> xs;
    std::vector<Eigen::MatrixXd> ys;
    GradientTape tape;
    int stale = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_indices(order, rng);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            xs.clear();
            ys.clear();
            for (std::size_t i = begin; i < end; ++i) {
                xs.push_back(train_set.inputs[order[i]]);
                ys.push_back(train_set.targets[order[i]]);
            }
            loss_sum += backward(model, xs, ys, tape) * static_cast<double>(end - begin);
            adam_step(model, tape, adam, cfg);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_mse = loss_sum / static_cast<double>(order.size());
        rec.val_mse = dataset_loss(model, val_set);
        rec.alpha = model.canonical_alpha();
        if (cfg.record_timing) {
            rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        result.history.push_back(rec);
        result.epochs_run = epoch;
        if (rec.val_mse < result.best_val_mse) {
            result.best_val_mse = rec.val_mse;
            result.best_epoch = epoch;
            result.model = model;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    return result;
}

/// Chronological 8:1:1 split of the panel, then train_on_windows.
inline TrainResult train(const SeriesPanel& panel, const ModelConfig& model_cfg, const TrainConfig& cfg) {
    if (model_cfg.f != panel.f()) throw ConfigError("train: model channel count does not match panel");
    const WindowBatch train_set = sliding_windows(panel, model_cfg.m, model_cfg.p, cfg.stride, Split::Train);
    const WindowBatch val_set = sliding_windows(panel, model_cfg.m, model_cfg.p, 1, Split::Val);
    sliding_windows(panel, model_cfg.m, model_cfg.p, 1, Split::Test);  // fail early if the test split is empty
    return train_on_windows(make_model(model_cfg), train_set, val_set, cfg);
}

inline void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,train_mse,val_mse,alpha,wall_time\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << detail::format_double(r.train_mse) << ',' << detail::format_double(r.val_mse) << ','
            << detail::format_double(r.alpha) << ',' << detail::format_double(r.wall_time) << '\n';
    }
}

inline void save_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_history_csv(out, history);
}

// ---------------------------------------------------------------------------
// Gradient check

struct GroupCheck {
    std::string group;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool pass = true;
};

struct GradientCheckReport {
    std::vector<GroupCheck> groups;
    double max_rel_error = 0.0;
    bool pass = true;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps scalars whose true
/// gradient is ~0 from turning rounding noise into a large ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences on every parameter scalar against the given tape.
inline GradientCheckReport compare_gradients(const SffpModel& model, std::span<const Eigen::MatrixXd> inputs,
                                             std::span<const Eigen::MatrixXd> targets, const GradientTape& tape,
                                             double h, double tol) {
    if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument("gradient_check: h must be in (0, 1e-3]");
    std::vector<std::span<const double>> analytic;
    for_each_group(tape.grads, [&](std::string_view, std::span<const double> g) { analytic.push_back(g); });

    GradientCheckReport report;
    SffpModel probe = model;
    std::size_t gi = 0;
    for_each_group(probe.params, [&](std::string_view name, std::span<double> values) {
        GroupCheck check{std::string(name)};
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = batch_loss(probe, inputs, targets);
            values[i] = saved - h;
            const double down = batch_loss(probe, inputs, targets);
            values[i] = saved;
            const double err = relative_error(analytic[gi][i], (up - down) / (2.0 * h));
            if (err > check.max_rel_error) {
                check.max_rel_error = err;
                check.worst_index = i;
            }
        }
        check.pass = check.max_rel_error < tol;
        report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
        report.pass = report.pass && check.pass;
        report.groups.push_back(std::move(check));
        ++gi;
    });
    return report;
}

inline GradientCheckReport gradient_check(const SffpModel& model, std::span<const Eigen::MatrixXd> inputs,
                                          std::span<const Eigen::MatrixXd> targets, double h, double tol) {
    GradientTape tape;
    backward(model, inputs, targets, tape);
    return compare_gradients(model, inputs, targets, tape, h, tol);
}

}  // namespace sffp
