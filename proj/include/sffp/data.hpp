#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sffp/errors.hpp"
#include "sffp/fracfourier.hpp"

namespace sffp {

enum class TimestampFormat { Integer, Iso8601 };

/// T x F measurements with strictly increasing timestamps (seconds).
struct SeriesPanel {
    Eigen::MatrixXd values;
    std::vector<std::int64_t> timestamps;
    std::vector<std::string> band_labels;
    std::int64_t sample_interval = 1;
    TimestampFormat timestamp_format = TimestampFormat::Integer;
    std::string timestamp_header = "timestamp";

    int t() const { return static_cast<int>(values.rows()); }
    int f() const { return static_cast<int>(values.cols()); }
};

struct ParseReport {
    std::size_t rows = 0;
    std::size_t repaired_cells = 0;
};

struct LoadResult {
    SeriesPanel panel;
    ParseReport report;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline bool is_missing(std::string_view cell) {
    return cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA" || cell == "null";
}

inline std::optional<double> parse_double(std::string_view cell) {
    // strtod accepts forms from_chars rejects (leading '+'); copy to be safe.
    const std::string copy(cell);
    char* end = nullptr;
    const double v = std::strtod(copy.c_str(), &end);
    if (end != copy.c_str() + copy.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

template <class Int>
inline std::optional<Int> parse_int(std::string_view s) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// YYYY-MM-DD[T| ]HH:MM:SS[Z]
inline std::optional<std::int64_t> parse_iso8601(std::string_view s) {
    if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
    if (s.size() != 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
        s[13] != ':' || s[16] != ':') {
        return std::nullopt;
    }
    const auto y = parse_int<int>(s.substr(0, 4));
    const auto mo = parse_int<unsigned>(s.substr(5, 2));
    const auto d = parse_int<unsigned>(s.substr(8, 2));
    const auto hh = parse_int<int>(s.substr(11, 2));
    const auto mm = parse_int<int>(s.substr(14, 2));
    const auto ss = parse_int<int>(s.substr(17, 2));
    if (!y || !mo || !d || !hh || !mm || !ss) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{*mo},
                                          std::chrono::day{*d}};
    if (!ymd.ok() || *hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;
    const auto days = std::chrono::sys_days(ymd).time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + *hh * 3600 + *mm * 60 + *ss;
}

inline std::string format_iso8601(std::int64_t seconds) {
    const std::int64_t day = (seconds >= 0 ? seconds : seconds - 86399) / 86400;
    const std::int64_t rem = seconds - day * 86400;
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
    return buf;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string format_timestamp(std::int64_t ts, TimestampFormat format) {
    return format == TimestampFormat::Iso8601 ? detail::format_iso8601(ts) : std::to_string(ts);
}

/// Reads a panel: mandatory header, first column a timestamp (integer epoch
/// or ISO-8601), one column per band. Missing cells are forward-filled; a
/// leading gap takes the first observed value of its column.
inline LoadResult parse_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("csv: missing header row", 1);
    ++line_no;
    const auto header = detail::split_row(line);
    if (header.size() < 2) throw ParseError("csv: header needs a timestamp column and at least one band", 1);

    LoadResult result;
    SeriesPanel& panel = result.panel;
    panel.timestamp_header = std::string(header[0]);
    for (std::size_t i = 1; i < header.size(); ++i) panel.band_labels.emplace_back(header[i]);
    const std::size_t f = panel.band_labels.size();

    std::vector<std::vector<std::optional<double>>> rows;
    std::optional<TimestampFormat> format;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_row(line);
        if (cells.size() != f + 1) {
            throw ParseError("csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                 " cells, expected " + std::to_string(f + 1),
                             line_no);
        }
        std::optional<std::int64_t> ts;
        if (!format || *format == TimestampFormat::Integer) {
            ts = detail::parse_int<std::int64_t>(cells[0]);
            if (ts && !format) format = TimestampFormat::Integer;
        }
        if (!ts && (!format || *format == TimestampFormat::Iso8601)) {
            ts = detail::parse_iso8601(cells[0]);
            if (ts && !format) format = TimestampFormat::Iso8601;
        }
        if (!ts) {
            throw ParseError("csv: line " + std::to_string(line_no) + " has an unreadable timestamp '" +
                                 std::string(cells[0]) + "'",
                             line_no);
        }
        if (!panel.timestamps.empty() && *ts <= panel.timestamps.back()) {
            throw OrderingError("csv: timestamps not strictly increasing at line " + std::to_string(line_no),
                                line_no);
        }
        panel.timestamps.push_back(*ts);
        std::vector<std::optional<double>> row(f);
        for (std::size_t j = 0; j < f; ++j) {
            if (detail::is_missing(cells[j + 1])) continue;
            row[j] = detail::parse_double(cells[j + 1]);
            if (!row[j]) {
                throw ParseError("csv: line " + std::to_string(line_no) + " column " + std::to_string(j + 2) +
                                     " is not a number: '" + std::string(cells[j + 1]) + "'",
                                 line_no);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("csv: no data rows", line_no);
    panel.timestamp_format = format.value_or(TimestampFormat::Integer);

    const auto t = static_cast<Eigen::Index>(rows.size());
    panel.values.resize(t, static_cast<Eigen::Index>(f));
    for (std::size_t j = 0; j < f; ++j) {
        std::optional<double> last;
        for (const auto& row : rows) {
            if (row[j]) { last = row[j]; break; }
        }
        if (!last) {
            throw ParseError("csv: column '" + panel.band_labels[j] + "' has no observed values", 1);
        }
        for (Eigen::Index i = 0; i < t; ++i) {
            const auto& cell = rows[static_cast<std::size_t>(i)][j];
            if (cell) {
                last = cell;
            } else {
                ++result.report.repaired_cells;
            }
            panel.values(i, static_cast<Eigen::Index>(j)) = *last;
        }
    }
    result.report.rows = rows.size();
    panel.sample_interval = panel.timestamps.size() > 1 ? panel.timestamps[1] - panel.timestamps[0] : 1;
    return result;
}

inline LoadResult load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_csv(in);
}

inline void write_csv(std::ostream& out, const SeriesPanel& panel) {
    out << panel.timestamp_header;
    for (const auto& label : panel.band_labels) out << ',' << label;
    out << '\n';
    for (int i = 0; i < panel.t(); ++i) {
        out << format_timestamp(panel.timestamps[static_cast<std::size_t>(i)], panel.timestamp_format);
        for (int j = 0; j < panel.f(); ++j) out << ',' << detail::format_double(panel.values(i, j));
        out << '\n';
    }
}

inline void save_csv(const SeriesPanel& panel, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_csv(out, panel);
    if (!out) throw IoError("write failed for " + path.string());
}

/// Builds a panel with integer timestamps 0, 1, 2, ... and labels band0..
inline SeriesPanel make_panel(Eigen::MatrixXd values) {
    SeriesPanel panel;
    panel.timestamps.resize(static_cast<std::size_t>(values.rows()));
    for (std::size_t i = 0; i < panel.timestamps.size(); ++i) panel.timestamps[i] = static_cast<std::int64_t>(i);
    for (Eigen::Index j = 0; j < values.cols(); ++j) panel.band_labels.push_back("band" + std::to_string(j));
    panel.values = std::move(values);
    return panel;
}

// ---------------------------------------------------------------------------
// Windowing

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

/// Chronological 8:1:1 row ranges [begin, end).
inline std::pair<int, int> split_bounds(int t, Split split) {
    const int train_end = static_cast<int>(std::floor(0.8 * t));
    const int val_end = static_cast<int>(std::floor(0.9 * t));
    switch (split) {
        case Split::Train: return {0, train_end};
        case Split::Val: return {train_end, val_end};
        case Split::Test: return {val_end, t};
    }
    return {0, 0};
}

struct WindowBatch {
    std::vector<Eigen::MatrixXd> inputs;   // m x f
    std::vector<Eigen::MatrixXd> targets;  // p x f, rows right after the input
    std::vector<int> origin_indices;       // panel row of each input's first row

    std::size_t size() const { return inputs.size(); }
    bool empty() const { return inputs.empty(); }
};

inline int window_count(int split_len, int m, int p, int stride) {
    if (split_len < m + p) return 0;
    return (split_len - m - p) / stride + 1;
}

inline WindowBatch sliding_windows(const SeriesPanel& panel, int m, int p, int stride, Split split) {
    if (m < 1 || p < 1 || stride < 1) throw std::invalid_argument("sliding_windows: m, p, stride must be positive");
    const auto [begin, end] = split_bounds(panel.t(), split);
    const int count = window_count(end - begin, m, p, stride);
    if (count == 0) {
        throw InsufficientDataError(std::string("sliding_windows: ") + split_name(split) + " split has " +
                                    std::to_string(end - begin) + " rows, need at least m + p = " +
                                    std::to_string(m + p));
    }
    WindowBatch batch;
    batch.inputs.reserve(static_cast<std::size_t>(count));
    batch.targets.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        const int origin = begin + k * stride;
        batch.inputs.push_back(panel.values.middleRows(origin, m));
        batch.targets.push_back(panel.values.middleRows(origin + m, p));
        batch.origin_indices.push_back(origin);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Synthetic generators

struct ChirpSpec {
    int t_len = 2048;
    int f_bands = 2;
    double chirp_rate = 0.0;  // cycles / sample^2, phase pi * c * t^2
    double f0 = 0.0;          // cycles / sample
    double noise_sigma = 0.0;
    double trend_slope = 0.0;
    std::uint64_t seed = 0;
    int oracle_window = 0;    // samples used for the oracle sweep; 0 = t_len
};

struct ChirpPanel {
    SeriesPanel panel;
    double oracle_order = 0.0;
};

/// Band b: cos(pi c t^2 + 2 pi f0 t + 2 pi b / F) + slope t + N(0, sigma^2).
inline double chirp_phase_offset(int band, int f_bands) {
    return 2.0 * std::numbers::pi * band / f_bands;
}

/// The oracle is the dense (step 0.01) concentration sweep over [0, 2) of the
/// noiseless, trend-free band-0 chirp. The entropy profile has period 2 in
/// the order (F^{a+2} = parity * F^a), so one period covers every domain.
inline ChirpPanel synth_chirp(const ChirpSpec& spec) {
    if (spec.t_len < 32) throw InvalidLengthError("synth_chirp: t_len must be >= 32");
    if (spec.f_bands < 1) throw std::invalid_argument("synth_chirp: need at least one band");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd values(spec.t_len, spec.f_bands);
    auto chirp = [&](int t, int band) {
        const double td = t;
        return std::cos(std::numbers::pi * spec.chirp_rate * td * td + 2.0 * std::numbers::pi * spec.f0 * td +
                        chirp_phase_offset(band, spec.f_bands));
    };
    for (int t = 0; t < spec.t_len; ++t) {
        for (int b = 0; b < spec.f_bands; ++b) {
            const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * gauss(rng) : 0.0;
            values(t, b) = chirp(t, b) + spec.trend_slope * t + noise;
        }
    }
    const int window = spec.oracle_window > 0 ? std::min(spec.oracle_window, spec.t_len) : spec.t_len;
    frft::CVector clean(window);
    for (int t = 0; t < window; ++t) clean(t) = chirp(t, 0);
    const auto grid = frft::order_grid(0.0, 1.99, 0.01);
    return {make_panel(std::move(values)), frft::most_concentrated_order(clean, grid)};
}

enum class TrendKind { Linear, Quadratic };

struct TrendNoiseSpec {
    int t_len = 2048;
    int f_bands = 2;
    TrendKind trend_kind = TrendKind::Linear;
    double ar1_phi = 0.0;
    double noise_sigma = 1.0;
    double slope = 1.0;
    std::uint64_t seed = 0;
};

/// Trend plus stationary AR(1) noise per band. Band b is offset by 10 b.
/// Linear: slope * t. Quadratic: slope * t^2 / t_len.
inline SeriesPanel synth_trend_noise(const TrendNoiseSpec& spec) {
    if (!(std::abs(spec.ar1_phi) < 1.0)) throw std::invalid_argument("synth_trend_noise: |ar1_phi| must be < 1");
    if (spec.t_len < 2 || spec.f_bands < 1) throw InvalidLengthError("synth_trend_noise: empty panel");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd values(spec.t_len, spec.f_bands);
    for (int b = 0; b < spec.f_bands; ++b) {
        double e = spec.noise_sigma > 0.0 ? spec.noise_sigma * gauss(rng) / std::sqrt(1.0 - spec.ar1_phi * spec.ar1_phi)
                                          : 0.0;
        for (int t = 0; t < spec.t_len; ++t) {
            if (t > 0) e = spec.ar1_phi * e + (spec.noise_sigma > 0.0 ? spec.noise_sigma * gauss(rng) : 0.0);
            const double td = t;
            const double trend = spec.trend_kind == TrendKind::Linear ? spec.slope * td
                                                                      : spec.slope * td * td / spec.t_len;
            values(t, b) = 10.0 * b + trend + e;
        }
    }
    return make_panel(std::move(values));
}

// ---------------------------------------------------------------------------
// Frequency analysis

struct Periodogram {
    std::vector<double> frequency;  // cycles per second (per sample_interval)
    std::vector<double> power;      // |DFT|^2 / T, bins 0..T/2
};

inline Periodogram periodogram(const SeriesPanel& panel, int band) {
    if (band < 0 || band >= panel.f()) {
        throw std::out_of_range("periodogram: band " + std::to_string(band) + " out of range [0, " +
                                std::to_string(panel.f()) + ")");
    }
    const int t = panel.t();
    std::vector<double> series(static_cast<std::size_t>(t));
    const double mean = panel.values.col(band).mean();
    for (int i = 0; i < t; ++i) series[static_cast<std::size_t>(i)] = panel.values(i, band) - mean;
    std::vector<std::complex<double>> spectrum;
    Eigen::FFT<double> fft;
    fft.fwd(spectrum, series);
    Periodogram out;
    const double interval = panel.sample_interval > 0 ? static_cast<double>(panel.sample_interval) : 1.0;
    for (int k = 0; k <= t / 2; ++k) {
        out.frequency.push_back(k / (t * interval));
        out.power.push_back(std::norm(spectrum[static_cast<std::size_t>(k)]) / t);
    }
    return out;
}

}  // namespace sffp
