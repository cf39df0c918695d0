#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "uar/checks.hpp"
#include "uar/config.hpp"
#include "uar/io.hpp"

using namespace uar;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("uar-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Uarl, RoundTripAndCrc) {
    const std::vector<io::NamedArray> arrays{{"a", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"scalar", {}, {-0.5}}};
    const auto bytes = io::encode(arrays);
    EXPECT_EQ(io::decode(bytes), arrays);
    EXPECT_EQ(io::crc32(std::vector<std::uint8_t>{'1', '2', '3', '4', '5', '6', '7', '8', '9'}), 0xCBF43926u);
    auto bad = bytes;
    bad[bad.size() / 2] ^= 1;
    EXPECT_THROW(io::decode(bad), io::FormatError);
    EXPECT_THROW(io::decode(std::span(bytes).first(bytes.size() - 1)), io::FormatError);
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_THROW(io::decode(extra), io::FormatError);
}

TEST(Checkpoint, RoundTripIsBitExact) { EXPECT_EQ(checks::checkpoint_roundtrip(), ""); }

TEST(Checkpoint, EveryByteFlipIsRejected) { EXPECT_TRUE(checks::checkpoint_corruption_detected()); }

TEST(Checkpoint, GeometryMismatchIsRejected) {
    const auto g = tomo::Geometry::parallel(16, 8, 23);
    io::Checkpoint c{g, model::make_generator({1, 2, 3, 0.1, 0.01}, 1), model::make_critic({2, 2, 3, 4, 0.2}, 1),
                     std::nullopt, std::nullopt, 3, 0};
    EXPECT_NO_THROW(io::require_geometry(c, g));
    EXPECT_THROW(io::require_geometry(c, tomo::Geometry::parallel(16, 9, 23)), io::FormatError);
    const auto dir = scratch("ckpt");
    io::save_checkpoint(dir / "m.uarl", c);
    const auto back = io::load_checkpoint(dir / "m.uarl");
    EXPECT_EQ(back.geometry, g);
    EXPECT_EQ(back.gen.config.layers, 1u);
    EXPECT_TRUE(back.gen.params.same_layout(c.gen.params));
}

TEST(Dataset, SaveLoadRoundTrip) {
    const auto g = tomo::Geometry::parallel(16, 8, 23);
    const auto pools = data::make_pools({3, 2, 2}, g, {0.5}, 9);
    const auto dir = scratch("data");
    io::save_dataset(dir, pools);
    EXPECT_TRUE(fs::exists(dir / "train_x" / (io::sample_name('x', 2) + ".uarl")));
    const auto back = io::load_dataset(dir, g);
    EXPECT_EQ(back.train_x, pools.train_x);
    EXPECT_EQ(back.train_y, pools.train_y);
    EXPECT_EQ(back.test_x, pools.test_x);
    EXPECT_EQ(back.test_y, pools.test_y);
}

TEST(Pgm, QuantizedRoundTrip) {
    tomo::Image x(5);
    for (std::size_t i = 0; i < x.size(); ++i) x.values[i] = static_cast<double>(i) / 24.0;
    x.values[0] = -0.3;
    x.values[1] = 1.7;
    const auto bytes = io::encode_pgm(x);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 2), "P5");
    const auto back = io::decode_pgm(bytes);
    EXPECT_EQ(back.values[0], 0.0);
    EXPECT_EQ(back.values[1], 1.0);
    for (std::size_t i = 2; i < x.size(); ++i) EXPECT_NEAR(back.values[i], x.values[i], 0.5 / 65535.0);
    EXPECT_EQ(io::encode_pgm(back), bytes);
    EXPECT_THROW(io::decode_pgm(std::vector<std::uint8_t>{'P', '2'}), io::FormatError);
}

TEST(Csv, ShortestRoundTripDoubles) {
    EXPECT_EQ(io::format_double(0.1), "0.1");
    EXPECT_EQ(io::format_double(1e-3), "0.001");
    EXPECT_EQ(io::format_double(-INFINITY), "-inf");
    const double v = 1.0 / 3.0;
    EXPECT_EQ(std::stod(io::format_double(v)), v);
}

TEST(Config, DefaultsRoundTrip) {
    const config::RunConfig c;
    const auto text = config::to_json(c);
    EXPECT_EQ(config::to_json(config::parse(text)), text);
    EXPECT_EQ(c.train.epochs[2], 25u);
    EXPECT_EQ(c.data.counts.x, 400u);
    EXPECT_EQ(c.geometry.build(), tomo::Geometry::desk_default());
}

TEST(Config, PartialDocumentsKeepDefaults) {
    const auto c = config::parse(R"({"train": {"lambda": 0.5, "fidelity": "sum"}, "data": {"test": 8}})");
    EXPECT_EQ(c.train.lambda, 0.5);
    EXPECT_EQ(c.train.fidelity, model::FidelityScale::sum);
    EXPECT_EQ(c.train.lambda_gp, 10.0);
    EXPECT_EQ(c.data.counts.test, 8u);
    EXPECT_EQ(c.data.counts.x, 400u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(config::parse(R"({"train": {"lamda": 0.5}})"), config::ConfigError);
    EXPECT_THROW(config::parse(R"({"trian": {}})"), config::ConfigError);
    EXPECT_THROW(config::parse(R"({"train": {"lambda": "x"}})"), config::ConfigError);
    EXPECT_THROW(config::parse(R"({"train": {"batch_size": -1}})"), config::ConfigError);
    EXPECT_THROW(config::parse(R"({"train": {"gp_mode": "magic"}})"), config::ConfigError);
    EXPECT_THROW(config::parse(R"({"train": {"fidelity": "median"}})"), config::ConfigError);
    EXPECT_THROW(config::parse(R"({"geometry": {"n_det": 20}})"), config::ConfigError);
    EXPECT_THROW(config::parse(R"({"eval": {"sweep_lambdas": [1, 0.1]}})"), config::ConfigError);
    EXPECT_THROW(config::parse("{"), config::ConfigError);
}

TEST(Config, ShippedDefaultMatchesBuiltIn) {
    const fs::path shipped = fs::path(UAR_SOURCE_DIR) / "configs" / "default.json";
    ASSERT_TRUE(fs::exists(shipped));
    EXPECT_EQ(config::to_json(config::load(shipped)), config::to_json(config::RunConfig{}));
}
