#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "reference_pipeline.hpp"
#include "sffp/checkpoint.hpp"

namespace {

namespace fs = std::filesystem;

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

void expect_identical(const sffp::SffpModel& a, const sffp::SffpModel& b) {
    EXPECT_EQ(a.m, b.m);
    EXPECT_EQ(a.p, b.p);
    EXPECT_EQ(a.f, b.f);
    EXPECT_TRUE(bit_equal(a.revin_eps, b.revin_eps));
    EXPECT_EQ(a.filter.keep_mask, b.filter.keep_mask);
    EXPECT_EQ(a.filter.lowpass_cutoff, b.filter.lowpass_cutoff);
    EXPECT_EQ(a.filter.random_high_count, b.filter.random_high_count);
    EXPECT_EQ(a.filter.sampling_seed, b.filter.sampling_seed);
    std::vector<double> flat_a, flat_b;
    sffp::for_each_group(a.params, [&](std::string_view, std::span<const double> v) {
        flat_a.insert(flat_a.end(), v.begin(), v.end());
    });
    sffp::for_each_group(b.params, [&](std::string_view, std::span<const double> v) {
        flat_b.insert(flat_b.end(), v.begin(), v.end());
    });
    ASSERT_EQ(flat_a.size(), flat_b.size());
    for (std::size_t i = 0; i < flat_a.size(); ++i) EXPECT_TRUE(bit_equal(flat_a[i], flat_b[i])) << "slot " << i;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / name; }

TEST(Checkpoint, RoundTripIsBitExact) {
    for (bool per_channel : {false, true}) {
        auto model = sffp::testing::random_tiny_model(17, 12, 5, 3, per_channel);
        model.params.alpha = 7.123456789012345;  // outside the canonical range
        model.filter = sffp::make_filter_config(12, 3, 4, 0xfeedfacecafebeefULL);
        const auto path = temp_file("sffp_ckpt.json");
        sffp::save_checkpoint(model, path);
        const auto back = sffp::load_checkpoint(path);
        fs::remove(path);
        expect_identical(model, back);
        EXPECT_EQ(back.per_channel_heads(), per_channel);
        EXPECT_EQ(back.params.alpha, 7.123456789012345);
        EXPECT_NEAR(back.canonical_alpha(), -0.876543210987655, 1e-12);
    }
}

TEST(Checkpoint, DocumentCarriesVersionAndCanonicalOrder) {
    const auto j = sffp::checkpoint_to_json(sffp::testing::random_tiny_model(3));
    EXPECT_EQ(j["format_version"], sffp::kCheckpointVersion);
    EXPECT_EQ(j["format"], "sffp-checkpoint");
    EXPECT_LE(j["params"]["alpha_canonical"].get<double>(), 2.0);
    EXPECT_GE(j["params"]["alpha_canonical"].get<double>(), -2.0);
}

TEST(Checkpoint, RejectsMalformedDocuments) {
    auto j = sffp::checkpoint_to_json(sffp::testing::random_tiny_model(4));
    auto bad_version = j;
    bad_version["format_version"] = 99;
    EXPECT_THROW(sffp::checkpoint_from_json(bad_version), sffp::ConfigError);
    auto bad_shape = j;
    bad_shape["params"]["revin_beta"].push_back(0.0);
    EXPECT_THROW(sffp::checkpoint_from_json(bad_shape), sffp::ConfigError);
    auto missing = j;
    missing["params"].erase("heads");
    EXPECT_THROW(sffp::checkpoint_from_json(missing), sffp::ConfigError);

    const auto path = temp_file("sffp_garbage.json");
    std::ofstream(path) << "{not json";
    EXPECT_THROW(sffp::load_checkpoint(path), sffp::ConfigError);
    fs::remove(path);
}

TEST(Checkpoint, MissingFileNamesPath) {
    try {
        sffp::load_checkpoint("/nonexistent/model.json");
        FAIL();
    } catch (const sffp::IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/model.json"), std::string::npos);
    }
}

}  // namespace
