#pragma once

// Forecasting pipeline, applied per channel:
//
//   RevIN normalise -> F^a (length M) -> keep-mask * W -> A y + b
//     -> F^{-a} (length P) -> real part -> RevIN denormalise
//
// A single learnable order `a` drives both transforms. Windows are processed
// in batches laid out as columns, channel-major: column = channel * B + window.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sffp/errors.hpp"
#include "sffp/fracfourier.hpp"

namespace sffp {

using frft::CMatrix;
using frft::Complex;
using frft::CVector;

/// Retained fractional-frequency bins: the `lowpass_cutoff` bins nearest
/// index 0 (two-sided, with wrap-around) plus `random_high_count` bins drawn
/// once from the remainder.
struct FilterConfig {
    int lowpass_cutoff = 0;
    int random_high_count = 0;
    std::uint64_t sampling_seed = 0;
    std::vector<bool> keep_mask;

    int kept() const { return static_cast<int>(std::count(keep_mask.begin(), keep_mask.end(), true)); }
};

/// Builds the retained-bin mask. The random count is clamped to the number of
/// bins left after the low-pass band, so the mask holds min(c + s, m) bins.
inline std::vector<bool> build_keep_mask(int m, int lowpass_cutoff, int random_high_count,
                                         std::uint64_t seed) {
    if (m < 1) throw ShapeError("build_keep_mask: length must be positive");
    if (lowpass_cutoff < 0 || random_high_count < 0) {
        throw std::invalid_argument("build_keep_mask: counts must be non-negative");
    }
    if (lowpass_cutoff > m) {
        throw std::invalid_argument("build_keep_mask: low-pass cutoff " +
                                    std::to_string(lowpass_cutoff) + " exceeds length " +
                                    std::to_string(m));
    }
    std::vector<bool> mask(static_cast<std::size_t>(m), false);
    const int head = (lowpass_cutoff + 1) / 2;
    const int tail = lowpass_cutoff / 2;
    for (int i = 0; i < head; ++i) mask[static_cast<std::size_t>(i)] = true;
    for (int i = m - tail; i < m; ++i) mask[static_cast<std::size_t>(i)] = true;

    std::vector<int> pool;
    for (int i = 0; i < m; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) pool.push_back(i);
    }
    const auto draws = std::min<std::size_t>(static_cast<std::size_t>(random_high_count), pool.size());
    // Partial Fisher-Yates on raw engine output keeps the draw independent of
    // the standard library's distribution implementations.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < draws; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
        std::swap(pool[i], pool[j]);
        mask[static_cast<std::size_t>(pool[i])] = true;
    }
    return mask;
}

inline FilterConfig make_filter_config(int m, int lowpass_cutoff, int random_high_count,
                                       std::uint64_t seed) {
    FilterConfig cfg;
    cfg.lowpass_cutoff = lowpass_cutoff;
    cfg.random_high_count = random_high_count;
    cfg.sampling_seed = seed;
    cfg.keep_mask = build_keep_mask(m, lowpass_cutoff, random_high_count, seed);
    return cfg;
}

/// Complex linear map y = (weight_real + i weight_imag) x + (bias_real + i bias_imag).
struct LinearHead {
    Eigen::MatrixXd weight_real;  // P x M
    Eigen::MatrixXd weight_imag;
    Eigen::VectorXd bias_real;    // P
    Eigen::VectorXd bias_imag;

    CMatrix weight() const {
        CMatrix a(weight_real.rows(), weight_real.cols());
        a.real() = weight_real;
        a.imag() = weight_imag;
        return a;
    }
    CVector bias() const {
        CVector b(bias_real.size());
        b.real() = bias_real;
        b.imag() = bias_imag;
        return b;
    }
    static LinearHead zeros(int p, int m) {
        return {Eigen::MatrixXd::Zero(p, m), Eigen::MatrixXd::Zero(p, m),
                Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p)};
    }
};

/// Every trainable quantity. GradientTape reuses this layout for gradients.
struct ModelParameters {
    double alpha = 0.5;  // unconstrained; see SffpModel::canonical_alpha
    CVector filter_weights;
    std::vector<LinearHead> heads;  // one shared head, or one per channel
    Eigen::VectorXd revin_gamma;
    Eigen::VectorXd revin_beta;
};

/// Calls fn(name, span) for each parameter group, in a fixed order. Complex
/// vectors are exposed as interleaved (real, imag) pairs.
template <class Params, class Fn>
void for_each_group(Params& params, Fn&& fn) {
    using Scalar = std::conditional_t<std::is_const_v<Params>, const double, double>;
    fn(std::string_view("alpha"), std::span<Scalar>(&params.alpha, 1));
    fn(std::string_view("filter_weights"),
       std::span<Scalar>(reinterpret_cast<Scalar*>(params.filter_weights.data()),
                         static_cast<std::size_t>(2 * params.filter_weights.size())));
    const bool many = params.heads.size() > 1;
    for (std::size_t h = 0; h < params.heads.size(); ++h) {
        auto& head = params.heads[h];
        const std::string prefix = many ? "head" + std::to_string(h) + "." : std::string();
        auto view = [](auto& dense) {
            return std::span<Scalar>(dense.data(), static_cast<std::size_t>(dense.size()));
        };
        fn(std::string_view(prefix + "lin_real"), view(head.weight_real));
        fn(std::string_view(prefix + "lin_imag"), view(head.weight_imag));
        fn(std::string_view(prefix + "bias_real"), view(head.bias_real));
        fn(std::string_view(prefix + "bias_imag"), view(head.bias_imag));
    }
    fn(std::string_view("revin_gamma"),
       std::span<Scalar>(params.revin_gamma.data(), static_cast<std::size_t>(params.revin_gamma.size())));
    fn(std::string_view("revin_beta"),
       std::span<Scalar>(params.revin_beta.data(), static_cast<std::size_t>(params.revin_beta.size())));
}

/// Strips a "headN." prefix so frozen-group rules apply to every head.
inline std::string_view group_base_name(std::string_view name) {
    if (auto dot = name.find('.'); dot != std::string_view::npos) return name.substr(dot + 1);
    return name;
}

struct ModelConfig {
    int m = 96;
    int p = 24;
    int f = 1;
    std::optional<int> lowpass_cutoff;      // default floor(m / 4)
    std::optional<int> random_high_count;   // default floor(m / 8)
    std::uint64_t sampling_seed = 0;
    std::uint64_t init_seed = 0;
    bool per_channel_heads = false;
    double alpha_init = 0.5;
    double revin_eps = 1e-5;
};

class SffpModel {
public:
    int m = 0;
    int p = 0;
    int f = 0;
    FilterConfig filter;
    double revin_eps = 1e-5;
    ModelParameters params;

    /// Order folded into [-2, 2); the raw value stays in params.alpha.
    double canonical_alpha() const { return frft::canonical_order(params.alpha); }
    bool per_channel_heads() const { return params.heads.size() > 1; }
    const LinearHead& head_for(int channel) const {
        return params.heads[per_channel_heads() ? static_cast<std::size_t>(channel) : 0];
    }

    void validate() const {
        if (m < 2 || p < 2 || f < 1) {
            throw ShapeError("SffpModel: need m >= 2, p >= 2, f >= 1");
        }
        if (static_cast<int>(filter.keep_mask.size()) != m || params.filter_weights.size() != m) {
            throw ShapeError("SffpModel: filter must have length m");
        }
        if (params.heads.size() != 1 && params.heads.size() != static_cast<std::size_t>(f)) {
            throw ShapeError("SffpModel: expected 1 or f heads");
        }
        for (const auto& h : params.heads) {
            if (h.weight_real.rows() != p || h.weight_real.cols() != m ||
                h.weight_imag.rows() != p || h.weight_imag.cols() != m ||
                h.bias_real.size() != p || h.bias_imag.size() != p) {
                throw ShapeError("SffpModel: head matrices must be p x m");
            }
        }
        if (params.revin_gamma.size() != f || params.revin_beta.size() != f) {
            throw ShapeError("SffpModel: RevIN affine must have length f");
        }
        if (!(revin_eps > 0.0)) throw std::invalid_argument("SffpModel: revin_eps must be positive");
        bool finite = std::isfinite(params.alpha);
        for_each_group(params, [&](std::string_view, std::span<const double> values) {
            for (double v : values) finite = finite && std::isfinite(v);
        });
        if (!finite) throw DivergedError("SffpModel: non-finite parameter");
    }
};

/// Default initialisation: W = 1, heads uniform in [-1/sqrt(m), 1/sqrt(m)],
/// zero biases, identity RevIN affine.
inline SffpModel make_model(const ModelConfig& cfg) {
    SffpModel model;
    model.m = cfg.m;
    model.p = cfg.p;
    model.f = cfg.f;
    model.revin_eps = cfg.revin_eps;
    if (cfg.m < 2 || cfg.p < 2 || cfg.f < 1) throw ShapeError("make_model: need m >= 2, p >= 2, f >= 1");
    model.filter = make_filter_config(cfg.m, cfg.lowpass_cutoff.value_or(cfg.m / 4),
                                      cfg.random_high_count.value_or(cfg.m / 8), cfg.sampling_seed);
    model.params.alpha = cfg.alpha_init;
    model.params.filter_weights = CVector::Constant(cfg.m, Complex(1.0, 0.0));

    std::mt19937_64 rng(cfg.init_seed);
    const double k = 1.0 / std::sqrt(static_cast<double>(cfg.m));
    std::uniform_real_distribution<double> uniform(-k, k);
    const int n_heads = cfg.per_channel_heads ? cfg.f : 1;
    for (int h = 0; h < n_heads; ++h) {
        LinearHead head = LinearHead::zeros(cfg.p, cfg.m);
        for (Eigen::Index i = 0; i < head.weight_real.size(); ++i) head.weight_real.data()[i] = uniform(rng);
        for (Eigen::Index i = 0; i < head.weight_imag.size(); ++i) head.weight_imag.data()[i] = uniform(rng);
        model.params.heads.push_back(std::move(head));
    }
    model.params.revin_gamma = Eigen::VectorXd::Ones(cfg.f);
    model.params.revin_beta = Eigen::VectorXd::Zero(cfg.f);
    return model;
}

// ---------------------------------------------------------------------------
// Stages

struct InstanceStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;  // already floored at revin_eps
};

inline InstanceStats instance_stats(const Eigen::MatrixXd& x, double eps) {
    InstanceStats stats;
    stats.mean = x.colwise().mean().transpose();
    stats.std.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - stats.mean(c)).square().mean();
        stats.std(c) = std::max(std::sqrt(var), eps);
    }
    return stats;
}

/// Normalises with statistics taken from elsewhere (e.g. the input window).
inline Eigen::MatrixXd revin_normalize_with(const Eigen::MatrixXd& x, const InstanceStats& stats,
                                            const SffpModel& model) {
    if (x.cols() != model.f || stats.mean.size() != model.f) {
        throw ShapeError("revin_normalize: channel count mismatch");
    }
    Eigen::MatrixXd z(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        z.col(c) = model.params.revin_gamma(c) * (x.col(c).array() - stats.mean(c)) / stats.std(c) +
                   model.params.revin_beta(c);
    }
    return z;
}

/// Per channel: gamma * (x - mean) / std + beta, statistics over the time axis.
inline std::pair<Eigen::MatrixXd, InstanceStats> revin_normalize(const Eigen::MatrixXd& x,
                                                                 const SffpModel& model) {
    if (x.cols() != model.f) throw ShapeError("revin_normalize: channel count mismatch");
    InstanceStats stats = instance_stats(x, model.revin_eps);
    return {revin_normalize_with(x, stats, model), stats};
}

inline Eigen::MatrixXd revin_denormalize(const Eigen::MatrixXd& y, const InstanceStats& stats,
                                         const SffpModel& model) {
    if (y.cols() != model.f || stats.mean.size() != model.f) {
        throw ShapeError("revin_denormalize: channel count mismatch");
    }
    Eigen::MatrixXd x(y.rows(), y.cols());
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
        const double gamma = model.params.revin_gamma(c);
        if (gamma == 0.0) {
            throw DegenerateAffineError("revin_denormalize: gamma is zero for channel " +
                                        std::to_string(c));
        }
        x.col(c) = (y.col(c).array() - model.params.revin_beta(c)) / gamma * stats.std(c) + stats.mean(c);
    }
    return x;
}

/// Masked bins are exactly zero; kept bins are scaled by W.
inline CVector apply_filter(const CVector& x, const SffpModel& model) {
    if (x.size() != model.m) throw ShapeError("apply_filter: expected length m");
    CVector out = CVector::Zero(model.m);
    for (int i = 0; i < model.m; ++i) {
        if (model.filter.keep_mask[static_cast<std::size_t>(i)]) out(i) = model.params.filter_weights(i) * x(i);
    }
    return out;
}

/// Standard complex product A x + b with A = L_real + i L_imag:
///   Re = L_real x_re - L_imag x_im + b_re,  Im = L_real x_im + L_imag x_re + b_im
inline CVector complex_linear(const CVector& x, const SffpModel& model, int channel = 0) {
    if (x.size() != model.m) throw ShapeError("complex_linear: expected length m");
    const LinearHead& head = model.head_for(channel);
    const Eigen::VectorXd re = x.real();
    const Eigen::VectorXd im = x.imag();
    CVector out(model.p);
    out.real() = head.weight_real * re - head.weight_imag * im + head.bias_real;
    out.imag() = head.weight_real * im + head.weight_imag * re + head.bias_imag;
    return out;
}

// ---------------------------------------------------------------------------
// Batched forward pass

/// Intermediates of one batched forward pass, kept for the backward pass.
struct PipelineTrace {
    frft::FrftOperator input_op;   // length m
    frft::FrftOperator output_op;  // length p
    int batch = 0;
    std::vector<InstanceStats> stats;  // per window
    Eigen::MatrixXd standardized;      // (x - mean) / std, m x C
    CMatrix transformed;               // F^a z, m x C
    CMatrix filtered;                  // m x C
    CMatrix head_out;                  // p x C
    CMatrix restored;                  // F^{-a} q, p x C
    Eigen::MatrixXd outputs;           // denormalised predictions, p x C

    int column(int channel, int window) const { return channel * batch + window; }
};

namespace detail {

inline void require_finite(const Eigen::MatrixXd& m, const char* stage) {
    if (!m.allFinite()) throw DivergedError(std::string("forward: non-finite values after ") + stage);
}
inline void require_finite(const CMatrix& m, const char* stage) {
    if (!m.allFinite()) throw DivergedError(std::string("forward: non-finite values after ") + stage);
}

}  // namespace detail

inline PipelineTrace forward_trace(const SffpModel& model, std::span<const Eigen::MatrixXd> windows) {
    if (windows.empty()) throw ShapeError("forward: empty batch");
    const int b = static_cast<int>(windows.size());
    const int cols = b * model.f;
    PipelineTrace t{frft::FrftOperator(model.m, model.params.alpha),
                    frft::FrftOperator(model.p, model.params.alpha), b};
    t.stats.reserve(windows.size());
    t.standardized.resize(model.m, cols);
    Eigen::MatrixXd z(model.m, cols);
    for (int w = 0; w < b; ++w) {
        const Eigen::MatrixXd& x = windows[static_cast<std::size_t>(w)];
        if (x.rows() != model.m || x.cols() != model.f) {
            throw ShapeError("forward: window is " + std::to_string(x.rows()) + "x" +
                             std::to_string(x.cols()) + ", model expects " + std::to_string(model.m) +
                             "x" + std::to_string(model.f));
        }
        InstanceStats s = instance_stats(x, model.revin_eps);
        for (int ch = 0; ch < model.f; ++ch) {
            const int c = t.column(ch, w);
            t.standardized.col(c) = (x.col(ch).array() - s.mean(ch)) / s.std(ch);
            z.col(c) = model.params.revin_gamma(ch) * t.standardized.col(c).array() +
                       model.params.revin_beta(ch);
        }
        t.stats.push_back(std::move(s));
    }
    detail::require_finite(z, "normalisation");

    t.transformed = t.input_op.kernel() * z.cast<Complex>();

    CVector gain = CVector::Zero(model.m);
    for (int i = 0; i < model.m; ++i) {
        if (model.filter.keep_mask[static_cast<std::size_t>(i)]) gain(i) = model.params.filter_weights(i);
    }
    t.filtered = gain.asDiagonal() * t.transformed;

    t.head_out.resize(model.p, cols);
    const int n_heads = static_cast<int>(model.params.heads.size());
    const int block = cols / n_heads;
    for (int h = 0; h < n_heads; ++h) {
        const LinearHead& head = model.params.heads[static_cast<std::size_t>(h)];
        t.head_out.middleCols(h * block, block) =
            (head.weight() * t.filtered.middleCols(h * block, block)).colwise() + head.bias();
    }

    t.restored = t.output_op.kernel().adjoint() * t.head_out;
    detail::require_finite(t.restored, "inverse transform");

    t.outputs.resize(model.p, cols);
    for (int w = 0; w < b; ++w) {
        const InstanceStats& s = t.stats[static_cast<std::size_t>(w)];
        for (int ch = 0; ch < model.f; ++ch) {
            const int c = t.column(ch, w);
            const double gamma = model.params.revin_gamma(ch);
            if (gamma == 0.0) throw DegenerateAffineError("forward: gamma is zero");
            t.outputs.col(c) = (t.restored.col(c).real().array() - model.params.revin_beta(ch)) / gamma *
                                   s.std(ch) + s.mean(ch);
        }
    }
    detail::require_finite(t.outputs, "denormalisation");
    return t;
}

/// Prediction of window `w` as a p x f matrix.
inline Eigen::MatrixXd window_prediction(const PipelineTrace& t, int p, int f, int w) {
    Eigen::MatrixXd out(p, f);
    for (int ch = 0; ch < f; ++ch) out.col(ch) = t.outputs.col(t.column(ch, w));
    return out;
}

struct ForwardDiagnostics {
    double max_imag_residual = 0.0;  // largest |Im| dropped at the final stage
    double canonical_alpha = 0.0;
};

struct Forecast {
    Eigen::MatrixXd values;  // p x f
    ForwardDiagnostics diagnostics;
};

inline Forecast forward(const Eigen::MatrixXd& x, const SffpModel& model) {
    const std::span<const Eigen::MatrixXd> one(&x, 1);
    const PipelineTrace t = forward_trace(model, one);
    return {window_prediction(t, model.p, model.f, 0),
            {t.restored.imag().cwiseAbs().maxCoeff(), model.canonical_alpha()}};
}

}  // namespace sffp
