#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "sffp/data.hpp"

namespace {

sffp::LoadResult parse(const std::string& text) {
    std::istringstream in(text);
    return sffp::parse_csv(in);
}

TEST(Csv, WellFormedFile) {
    const auto r = parse("timestamp,a,b\n0,1.5,2\n60,3,4\n120,5,6\n");
    EXPECT_EQ(r.panel.t(), 3);
    EXPECT_EQ(r.panel.f(), 2);
    EXPECT_EQ(r.panel.band_labels, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(r.panel.sample_interval, 60);
    EXPECT_EQ(r.report.rows, 3u);
    EXPECT_EQ(r.report.repaired_cells, 0u);
    EXPECT_DOUBLE_EQ(r.panel.values(2, 1), 6.0);
}

TEST(Csv, EmptyCellIsForwardFilled) {
    const auto r = parse("t,a,b\n0,1,2\n1,,4\n2,5,6\n");
    EXPECT_DOUBLE_EQ(r.panel.values(1, 0), 1.0);
    EXPECT_EQ(r.report.repaired_cells, 1u);
}

TEST(Csv, LeadingGapTakesFirstObservedValue) {
    const auto r = parse("t,a\n0,NaN\n1,null\n2,7\n3,NA\n");
    EXPECT_DOUBLE_EQ(r.panel.values(0, 0), 7.0);
    EXPECT_DOUBLE_EQ(r.panel.values(1, 0), 7.0);
    EXPECT_DOUBLE_EQ(r.panel.values(3, 0), 7.0);
    EXPECT_EQ(r.report.repaired_cells, 3u);
    EXPECT_TRUE(r.panel.values.allFinite());
}

TEST(Csv, OrderingErrorNamesFirstOffendingLine) {
    try {
        parse("t,a\n0,1\n2,1\n1,1\n3,1\n");
        FAIL() << "expected an ordering error";
    } catch (const sffp::OrderingError& e) {
        EXPECT_EQ(e.line(), 4u);
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
    }
    EXPECT_THROW(parse("t,a\n0,1\n0,2\n"), sffp::OrderingError);
}

TEST(Csv, MalformedRowsReportLineNumbers) {
    try {
        parse("t,a,b\n0,1,2\n1,2\n");
        FAIL() << "expected a parse error";
    } catch (const sffp::ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(parse("t,a\n0,abc\n"), sffp::ParseError);
    EXPECT_THROW(parse("t,a\nyesterday,1\n"), sffp::ParseError);
    EXPECT_THROW(parse(""), sffp::ParseError);
    EXPECT_THROW(parse("t,a\n"), sffp::ParseError);
    EXPECT_THROW(parse("t,a\n0,\n1,\n"), sffp::ParseError);
}

TEST(Csv, IsoTimestamps) {
    const auto r = parse("time,rss\n2024-03-01T00:00:00Z,-90\n2024-03-01 00:01:00,-91\n2024-03-01T00:02:00,-92\n");
    EXPECT_EQ(r.panel.timestamp_format, sffp::TimestampFormat::Iso8601);
    EXPECT_EQ(r.panel.sample_interval, 60);
    EXPECT_EQ(r.panel.timestamps[0], 1709251200);  // date -u -d 2024-03-01 +%s
    std::ostringstream out;
    sffp::write_csv(out, r.panel);
    EXPECT_NE(out.str().find("2024-03-01T00:02:00Z"), std::string::npos);
}

TEST(Csv, SaveLoadRoundTripIsBitExact) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(-80.0, 7.0);
    Eigen::MatrixXd v(50, 3);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = g(rng);
    const auto panel = sffp::make_panel(v);
    const auto path = std::filesystem::temp_directory_path() / "sffp_roundtrip.csv";
    sffp::save_csv(panel, path);
    const auto back = sffp::load_csv(path).panel;
    std::filesystem::remove(path);
    EXPECT_EQ(back.timestamps, panel.timestamps);
    EXPECT_EQ(back.band_labels, panel.band_labels);
    for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_EQ(back.values.data()[i], v.data()[i]);
}

TEST(Csv, MissingFileNamesPath) {
    try {
        sffp::load_csv("/nonexistent/panel.csv");
        FAIL();
    } catch (const sffp::IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/panel.csv"), std::string::npos);
    }
}

sffp::SeriesPanel ramp_panel(int t, int f = 1) {
    Eigen::MatrixXd v(t, f);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < f; ++j) v(i, j) = 100.0 * j + i;
    return sffp::make_panel(v);
}

TEST(Windows, CountForStrideOne) {
    const auto w = sffp::sliding_windows(ramp_panel(100), 8, 4, 1, sffp::Split::Train);
    EXPECT_EQ(w.size(), 69u);  // 80 - 8 - 4 + 1
}

TEST(Windows, TooShortSplitThrows) {
    EXPECT_THROW(sffp::sliding_windows(ramp_panel(12), 8, 4, 1, sffp::Split::Train), sffp::InsufficientDataError);
}

TEST(Windows, StrideEqualToHorizonGivesDisjointTargets) {
    const auto panel = ramp_panel(200);
    const auto w = sffp::sliding_windows(panel, 8, 4, 4, sffp::Split::Train);
    EXPECT_EQ(static_cast<int>(w.size()), (160 - 8 - 4) / 4 + 1);
    for (std::size_t k = 1; k < w.size(); ++k) {
        EXPECT_EQ(w.origin_indices[k] - w.origin_indices[k - 1], 4);
    }
}

TEST(Windows, TargetsFollowInputsAndStayInsideSplit) {
    const auto panel = ramp_panel(157, 2);
    for (int stride : {1, 2, 3, 5, 7}) {
        for (auto split : {sffp::Split::Train, sffp::Split::Val, sffp::Split::Test}) {
            int m = 5, p = 3;
            const auto [lo, hi] = sffp::split_bounds(panel.t(), split);
            const auto w = sffp::sliding_windows(panel, m, p, stride, split);
            for (std::size_t k = 0; k < w.size(); ++k) {
                const int o = w.origin_indices[k];
                EXPECT_GE(o, lo);
                EXPECT_LE(o + m + p, hi);
                EXPECT_EQ(w.inputs[k](m - 1, 1) + 1.0, w.targets[k](0, 1));
                EXPECT_EQ(w.inputs[k](0, 0), static_cast<double>(o));
            }
        }
    }
}

TEST(Windows, SplitBoundaries) {
    EXPECT_EQ(sffp::split_bounds(1000, sffp::Split::Train), std::make_pair(0, 800));
    EXPECT_EQ(sffp::split_bounds(1000, sffp::Split::Val), std::make_pair(800, 900));
    EXPECT_EQ(sffp::split_bounds(1005, sffp::Split::Test), std::make_pair(904, 1005));
}

TEST(Chirp, PureSinusoidOracleNearOne) {
    sffp::ChirpSpec spec;
    spec.t_len = 128;
    spec.f0 = 0.1;
    const auto cp = sffp::synth_chirp(spec);
    EXPECT_NEAR(cp.oracle_order, 1.0, 0.02);
}

TEST(Chirp, NoiselessOracleIsSweepArgmin) {
    sffp::ChirpSpec spec;
    spec.t_len = 64;
    spec.chirp_rate = 1.0 / 96.0;
    const auto cp = sffp::synth_chirp(spec);
    const auto grid = sffp::frft::order_grid(0.0, 1.99, 0.01);
    const sffp::frft::CVector x = cp.panel.values.col(0).cast<std::complex<double>>();
    const auto profile = sffp::frft::concentration_profile(x, grid);
    const auto best = std::min_element(profile.begin(), profile.end()) - profile.begin();
    EXPECT_DOUBLE_EQ(cp.oracle_order, grid[static_cast<std::size_t>(best)]);
    EXPECT_GT(std::abs(cp.oracle_order - 1.0), 0.05);
}

TEST(Chirp, SameSeedSamePanel) {
    sffp::ChirpSpec spec;
    spec.t_len = 256;
    spec.chirp_rate = 1e-3;
    spec.noise_sigma = 0.5;
    spec.trend_slope = 0.01;
    spec.seed = 5;
    spec.oracle_window = 64;
    const auto a = sffp::synth_chirp(spec);
    const auto b = sffp::synth_chirp(spec);
    EXPECT_TRUE(a.panel.values == b.panel.values);
    spec.seed = 6;
    EXPECT_FALSE(sffp::synth_chirp(spec).panel.values == a.panel.values);
}

TEST(Chirp, BandsCarryPhaseOffsets) {
    sffp::ChirpSpec spec;
    spec.t_len = 64;
    spec.f_bands = 4;
    spec.f0 = 0.05;
    const auto cp = sffp::synth_chirp(spec);
    for (int b = 0; b < 4; ++b) EXPECT_NEAR(cp.panel.values(0, b), std::cos(std::numbers::pi * b / 2.0), 1e-12);
    EXPECT_THROW(sffp::synth_chirp({.t_len = 16}), sffp::InvalidLengthError);
}

TEST(TrendNoise, NoiselessLinearTrendHasUnitSteps) {
    sffp::TrendNoiseSpec spec;
    spec.t_len = 300;
    spec.noise_sigma = 0.0;
    const auto panel = sffp::synth_trend_noise(spec);
    for (int t = 1; t < spec.t_len; ++t) EXPECT_EQ(panel.values(t, 0) - panel.values(t - 1, 0), 1.0);
}

TEST(TrendNoise, WhiteNoiseHasSmallLagOneAutocorrelation) {
    sffp::TrendNoiseSpec spec;
    spec.t_len = 4096;
    spec.f_bands = 1;
    spec.seed = 3;
    const auto panel = sffp::synth_trend_noise(spec);
    Eigen::VectorXd e(spec.t_len);
    for (int t = 0; t < spec.t_len; ++t) e(t) = panel.values(t, 0) - t;
    e.array() -= e.mean();
    const double lag1 = e.head(spec.t_len - 1).dot(e.tail(spec.t_len - 1)) / e.squaredNorm();
    EXPECT_LT(std::abs(lag1), 0.1);
}

TEST(TrendNoise, DeterministicAndValidated) {
    sffp::TrendNoiseSpec spec;
    spec.trend_kind = sffp::TrendKind::Quadratic;
    spec.ar1_phi = 0.7;
    spec.seed = 9;
    EXPECT_TRUE(sffp::synth_trend_noise(spec).values == sffp::synth_trend_noise(spec).values);
    spec.ar1_phi = 1.0;
    EXPECT_THROW(sffp::synth_trend_noise(spec), std::invalid_argument);
}

TEST(Periodogram, SinusoidHasOneDominantBin) {
    const int t = 512, k = 37;
    Eigen::MatrixXd v(t, 1);
    for (int i = 0; i < t; ++i) v(i, 0) = 3.0 + std::sin(2.0 * std::numbers::pi * k * i / t);
    const auto pg = sffp::periodogram(sffp::make_panel(v), 0);
    ASSERT_EQ(pg.power.size(), static_cast<std::size_t>(t / 2 + 1));
    const auto peak = std::max_element(pg.power.begin(), pg.power.end()) - pg.power.begin();
    EXPECT_EQ(peak, k);
    auto sorted = pg.power;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    EXPECT_GE(pg.power[k], 100.0 * sorted[sorted.size() / 2]);
    EXPECT_DOUBLE_EQ(pg.frequency[k], static_cast<double>(k) / t);
}

TEST(Periodogram, WhiteNoiseHasNoOutlierBin) {
    sffp::TrendNoiseSpec spec;
    spec.t_len = 4096;
    spec.f_bands = 1;
    spec.slope = 0.0;
    spec.seed = 21;
    const auto pg = sffp::periodogram(sffp::synth_trend_noise(spec), 0);
    auto sorted = pg.power;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    EXPECT_LT(*std::max_element(pg.power.begin(), pg.power.end()), 20.0 * median);
}

TEST(Periodogram, ConstantSeriesIsZeroAndBandIsChecked) {
    const auto panel = sffp::make_panel(Eigen::MatrixXd::Constant(64, 2, -70.0));
    const auto pg = sffp::periodogram(panel, 1);
    for (double p : pg.power) EXPECT_NEAR(p, 0.0, 1e-20);
    EXPECT_THROW(sffp::periodogram(panel, 2), std::out_of_range);
    EXPECT_THROW(sffp::periodogram(panel, -1), std::out_of_range);
}

}  // namespace
