#include <gtest/gtest.h>

#include <random>

#include "reference_pipeline.hpp"
#include "sffp/model.hpp"

namespace {

using sffp::CVector;
using sffp::Complex;
using sffp::SffpModel;

SffpModel identity_model(int m, int p, int f) {
    sffp::ModelConfig cfg;
    cfg.m = m;
    cfg.p = p;
    cfg.f = f;
    cfg.lowpass_cutoff = m;
    cfg.random_high_count = 0;
    cfg.alpha_init = 0.0;
    SffpModel model = sffp::make_model(cfg);
    auto& head = model.params.heads[0];
    head.weight_real = Eigen::MatrixXd::Identity(p, m);
    head.weight_imag.setZero();
    return model;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    return x;
}

TEST(Defaults, MatchDocumentedInitialisation) {
    sffp::ModelConfig cfg;
    cfg.m = 96;
    cfg.p = 24;
    cfg.f = 3;
    const SffpModel model = sffp::make_model(cfg);
    EXPECT_EQ(model.filter.lowpass_cutoff, 24);
    EXPECT_EQ(model.filter.random_high_count, 12);
    EXPECT_EQ(model.filter.kept(), 36);
    EXPECT_DOUBLE_EQ(model.params.alpha, 0.5);
    EXPECT_DOUBLE_EQ(model.revin_eps, 1e-5);
    EXPECT_TRUE(model.params.filter_weights.isApprox(CVector::Constant(96, Complex(1.0, 0.0))));
    const double k = 1.0 / std::sqrt(96.0);
    EXPECT_LE(model.params.heads[0].weight_real.cwiseAbs().maxCoeff(), k);
    EXPECT_LE(model.params.heads[0].weight_imag.cwiseAbs().maxCoeff(), k);
    EXPECT_TRUE(model.params.heads[0].bias_real.isZero());
    EXPECT_TRUE(model.params.revin_gamma.isOnes());
    EXPECT_TRUE(model.params.revin_beta.isZero());
    EXPECT_NO_THROW(model.validate());
}

TEST(Defaults, CanonicalAlphaFoldsRawValue) {
    SffpModel model = identity_model(8, 4, 1);
    model.params.alpha = 5.25;
    EXPECT_NEAR(model.canonical_alpha(), 1.25, 1e-12);
    model.params.alpha = -2.75;
    EXPECT_NEAR(model.canonical_alpha(), 1.25, 1e-12);
}

TEST(Revin, ConstantChannelNormalisesToZero) {
    const SffpModel model = identity_model(6, 3, 2);
    Eigen::MatrixXd x(6, 2);
    x.col(0).setConstant(5.0);
    x.col(1) << 1, 2, 3, 4, 5, 6;
    const auto [z, stats] = sffp::revin_normalize(x, model);
    EXPECT_TRUE(z.col(0).isZero(0.0));
    EXPECT_DOUBLE_EQ(stats.mean(0), 5.0);
    EXPECT_DOUBLE_EQ(stats.std(0), model.revin_eps);
}

TEST(Revin, StandardisesNonConstantChannels) {
    std::mt19937_64 rng(1);
    const SffpModel model = identity_model(16, 4, 3);
    const Eigen::MatrixXd x = 3.0 * random_matrix(rng, 16, 3).array() + 7.0;
    const auto [z, stats] = sffp::revin_normalize(x, model);
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-9);
        EXPECT_NEAR(std::sqrt(z.col(c).array().square().mean()), 1.0, 1e-9);
    }
    EXPECT_LT((sffp::revin_denormalize(z, stats, model) - x).norm(), 1e-10);
}

TEST(Revin, DenormaliseZeroGivesMean) {
    std::mt19937_64 rng(2);
    const SffpModel model = identity_model(10, 4, 2);
    const Eigen::MatrixXd x = random_matrix(rng, 10, 2);
    const auto [z, stats] = sffp::revin_normalize(x, model);
    const Eigen::MatrixXd y = sffp::revin_denormalize(Eigen::MatrixXd::Zero(4, 2), stats, model);
    for (int c = 0; c < 2; ++c) EXPECT_TRUE((y.col(c).array() == stats.mean(c)).all());
    const Eigen::MatrixXd head = sffp::revin_denormalize(z.topRows(4), stats, model);
    EXPECT_LT((head - x.topRows(4)).norm(), 1e-10);
}

TEST(Revin, AffineRoundTripWithSharedStats) {
    std::mt19937_64 rng(3);
    SffpModel model = identity_model(12, 5, 3);
    model.params.revin_gamma << 0.7, -1.3, 2.1;
    model.params.revin_beta << 0.4, -0.2, 1.5;
    const auto [z, stats] = sffp::revin_normalize(random_matrix(rng, 12, 3), model);
    const Eigen::MatrixXd y = random_matrix(rng, 5, 3);
    const Eigen::MatrixXd back = sffp::revin_normalize_with(sffp::revin_denormalize(y, stats, model), stats, model);
    EXPECT_LT((back - y).norm(), 1e-10);
}

TEST(Revin, ZeroGammaIsDegenerate) {
    std::mt19937_64 rng(4);
    SffpModel model = identity_model(8, 4, 1);
    const auto [z, stats] = sffp::revin_normalize(random_matrix(rng, 8, 1), model);
    model.params.revin_gamma(0) = 0.0;
    EXPECT_THROW(sffp::revin_denormalize(Eigen::MatrixXd::Zero(4, 1), stats, model), sffp::DegenerateAffineError);
}

TEST(Filter, MaskFollowsLowBandRule) {
    const auto mask = sffp::build_keep_mask(4, 2, 0, 0);
    EXPECT_EQ(mask, (std::vector<bool>{true, false, false, true}));
    const auto odd = sffp::build_keep_mask(10, 3, 0, 0);
    EXPECT_EQ(odd, (std::vector<bool>{true, true, false, false, false, false, false, false, false, true}));
}

TEST(Filter, RandomBinsAreDisjointDeterministicAndClamped) {
    const auto a = sffp::build_keep_mask(32, 8, 6, 42);
    const auto b = sffp::build_keep_mask(32, 8, 6, 42);
    const auto c = sffp::build_keep_mask(32, 8, 6, 43);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_EQ(std::count(a.begin(), a.end(), true), 14);
    const auto full = sffp::build_keep_mask(32, 30, 10, 1);
    EXPECT_EQ(std::count(full.begin(), full.end(), true), 32);
    EXPECT_THROW(sffp::build_keep_mask(8, 9, 0, 0), std::invalid_argument);
}

TEST(Filter, AllPassEmptyAndPartial) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    SffpModel model = identity_model(4, 2, 1);
    CVector x(4);
    for (int i = 0; i < 4; ++i) x(i) = Complex(g(rng), g(rng));
    EXPECT_EQ(sffp::apply_filter(x, model), x);

    model.filter = sffp::make_filter_config(4, 0, 0, 0);
    EXPECT_TRUE(sffp::apply_filter(x, model).isZero(0.0));

    model.filter = sffp::make_filter_config(4, 2, 0, 0);
    const CVector y = sffp::apply_filter(x, model);
    EXPECT_EQ(y(0), x(0));
    EXPECT_EQ(y(3), x(3));
    EXPECT_EQ(y(1), Complex(0.0));
    EXPECT_EQ(y(2), Complex(0.0));
    EXPECT_THROW(sffp::apply_filter(CVector::Zero(5), model), sffp::ShapeError);
}

TEST(Filter, MaskedBinsNeverReachTheOutput) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    SffpModel model = sffp::testing::random_tiny_model(9, 16, 6, 1);
    CVector x(16);
    for (int i = 0; i < 16; ++i) x(i) = Complex(g(rng), g(rng));
    CVector perturbed = x;
    for (int i = 0; i < 16; ++i) {
        if (!model.filter.keep_mask[i]) perturbed(i) += Complex(g(rng) * 100.0, g(rng));
    }
    EXPECT_EQ(sffp::apply_filter(x, model), sffp::apply_filter(perturbed, model));
}

TEST(ComplexLinear, IdentityAndRealPreservation) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    SffpModel model = identity_model(6, 6, 1);
    CVector x(6);
    for (int i = 0; i < 6; ++i) x(i) = Complex(g(rng), g(rng));
    EXPECT_EQ(sffp::complex_linear(x, model), x);

    model.params.heads[0].weight_real = random_matrix(rng, 6, 6);
    const CVector real_in = x.real().cast<Complex>();
    EXPECT_TRUE(sffp::complex_linear(real_in, model).imag().isZero(0.0));
    EXPECT_THROW(sffp::complex_linear(CVector::Zero(5), model), sffp::ShapeError);
}

TEST(ComplexLinear, MatchesBruteForceComplexProduct) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        SffpModel model = sffp::testing::random_tiny_model(trial, 7, 3, 1);
        auto& head = model.params.heads[0];
        head.weight_real = random_matrix(rng, 3, 7);
        head.weight_imag = random_matrix(rng, 3, 7);
        CVector x(7);
        for (int i = 0; i < 7; ++i) x(i) = Complex(g(rng), g(rng));
        const CVector got = sffp::complex_linear(x, model);
        for (int r = 0; r < 3; ++r) {
            Complex acc(head.bias_real(r), head.bias_imag(r));
            for (int c = 0; c < 7; ++c) acc += Complex(head.weight_real(r, c), head.weight_imag(r, c)) * x(c);
            EXPECT_LT(std::abs(got(r) - acc), 1e-12);
        }
    }
}

TEST(Forward, IdentityPathCopiesFirstRows) {
    std::mt19937_64 rng(10);
    const SffpModel model = identity_model(12, 5, 3);
    const Eigen::MatrixXd x = 4.0 * random_matrix(rng, 12, 3).array() - 1.0;
    const auto forecast = sffp::forward(x, model);
    EXPECT_LT((forecast.values - x.topRows(5)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(forecast.diagnostics.max_imag_residual, 0.0);
    EXPECT_EQ(forecast.diagnostics.canonical_alpha, 0.0);
}

TEST(Forward, ZeroHeadPredictsChannelMean) {
    std::mt19937_64 rng(11);
    SffpModel model = sffp::testing::random_tiny_model(3, 10, 4, 2);
    model.params.revin_gamma.setOnes();
    model.params.revin_beta.setZero();
    auto& head = model.params.heads[0];
    head.weight_real.setZero();
    head.weight_imag.setZero();
    head.bias_real.setZero();
    head.bias_imag.setZero();
    const Eigen::MatrixXd x = random_matrix(rng, 10, 2);
    const auto forecast = sffp::forward(x, model);
    for (int c = 0; c < 2; ++c) {
        EXPECT_LT((forecast.values.col(c).array() - x.col(c).mean()).abs().maxCoeff(), 1e-12);
    }
}

TEST(Forward, MatchesStageByStageReference) {
    std::mt19937_64 rng(12);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const SffpModel model = sffp::testing::random_tiny_model(seed, 12, 5, 3, seed % 2 == 1);
        const Eigen::MatrixXd x = random_matrix(rng, 12, 3);
        const Eigen::MatrixXd expected = sffp::testing::reference_forward(model, x);
        EXPECT_LT((sffp::forward(x, model).values - expected).cwiseAbs().maxCoeff(), 1e-10) << "seed " << seed;
    }
}

TEST(Forward, AffineEquivariantThroughRevin) {
    std::mt19937_64 rng(13);
    SffpModel model = sffp::testing::random_tiny_model(4, 16, 6, 2);
    model.params.revin_gamma.setOnes();
    model.params.revin_beta.setZero();
    const Eigen::MatrixXd x = random_matrix(rng, 16, 2);
    const Eigen::MatrixXd base = sffp::forward(x, model).values;
    Eigen::MatrixXd shifted = x;
    shifted.col(0) = 3.5 * x.col(0).array() - 2.0;
    shifted.col(1) = 0.25 * x.col(1).array() + 9.0;
    const Eigen::MatrixXd moved = sffp::forward(shifted, model).values;
    EXPECT_LT((moved.col(0) - (3.5 * base.col(0).array() - 2.0).matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((moved.col(1) - (0.25 * base.col(1).array() + 9.0).matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Forward, ImaginaryResidualReportedAndZeroForRealPath) {
    std::mt19937_64 rng(14);
    SffpModel model = sffp::testing::random_tiny_model(5, 10, 4, 1);
    const Eigen::MatrixXd x = random_matrix(rng, 10, 1);
    const auto complex_path = sffp::forward(x, model);
    EXPECT_TRUE(std::isfinite(complex_path.diagnostics.max_imag_residual));
    EXPECT_GT(complex_path.diagnostics.max_imag_residual, 0.0);

    model.params.alpha = 0.0;
    model.params.filter_weights = model.params.filter_weights.real().cast<Complex>();
    model.params.heads[0].weight_imag.setZero();
    model.params.heads[0].bias_imag.setZero();
    EXPECT_EQ(sffp::forward(x, model).diagnostics.max_imag_residual, 0.0);
}

TEST(Forward, ShapeMismatchIsReported) {
    const SffpModel model = identity_model(8, 4, 2);
    EXPECT_THROW(sffp::forward(Eigen::MatrixXd::Zero(7, 2), model), sffp::ShapeError);
    EXPECT_THROW(sffp::forward(Eigen::MatrixXd::Zero(8, 3), model), sffp::ShapeError);
}

TEST(Forward, NonFiniteInputDiverges) {
    SffpModel model = identity_model(8, 4, 1);
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(8, 1);
    x(3, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(sffp::forward(x, model), sffp::DivergedError);
}

TEST(Forward, BatchedTraceMatchesSingleWindowCalls) {
    std::mt19937_64 rng(15);
    const SffpModel model = sffp::testing::random_tiny_model(6, 8, 4, 2, true);
    const auto windows = sffp::testing::random_windows(rng, 5, 8, 2);
    const auto trace = sffp::forward_trace(model, windows);
    for (int w = 0; w < 5; ++w) {
        const Eigen::MatrixXd single = sffp::forward(windows[w], model).values;
        EXPECT_LT((sffp::window_prediction(trace, 4, 2, w) - single).cwiseAbs().maxCoeff(), 1e-12);
    }
}

}  // namespace
