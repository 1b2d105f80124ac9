#include "sosmc/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace sosmc;

namespace {

std::filesystem::path scratch_dir() {
    const auto d = std::filesystem::temp_directory_path() / "sosmc_test_io";
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
    Rng rng(1);
    std::normal_distribution<double> n(0.0, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const double v = n(rng) * std::pow(10.0, (i % 21) - 10);
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
    EXPECT_EQ(format_double(std::nan("")), "");
    EXPECT_EQ(format_optional(std::nullopt), "");
    EXPECT_EQ(format_optional(0.5), "0.5");
}

TEST(ModelJson, GaussianRoundTrip) {
    Matrix s(2, 2);
    s << 1.0, 0.3, 0.3, 0.5;
    const GaussianLocation g(Vector{{0.1, -2.0 / 3.0}}, s);
    const auto back = std::get<GaussianLocation>(model_from_json(model_to_json(AnyModel{g})));
    EXPECT_EQ(back.params(), g.params());
    EXPECT_EQ(back.covariance(), g.covariance());
}

TEST(ModelJson, MixtureRoundTrip) {
    Matrix mu(2, 2);
    mu << 1.0, 2.0, -1.0, 0.25;
    const MixturePotential m(Vector{{0.3, -0.7}}, mu, 0.5);
    const auto back = std::get<MixturePotential>(model_from_json(model_to_json(AnyModel{m})));
    EXPECT_EQ(back.params(), m.params());
    EXPECT_EQ(back.means(), m.means());
    EXPECT_EQ(back.sigma_sq(), 0.5);
}

TEST(ModelJson, MlpFileRoundTripIsBitExact) {
    Rng rng(2);
    const MlpEnergy m = MlpEnergy::initialised({2, 8, 3}, rng, 0.3);
    const auto path = scratch_dir() / "nested" / "mlp.json";
    save_model(path, m);
    const auto back = std::get<MlpEnergy>(load_model(path));
    EXPECT_EQ(back.architecture(), m.architecture());
    EXPECT_EQ(back.params(), m.params());
    const json j = json::parse(read_text(path));
    EXPECT_EQ(j.at("family"), "mlp_energy");
    EXPECT_EQ(j.at("architecture").at("hidden_width"), 8);
}

TEST(ModelJson, Errors) {
    EXPECT_THROW(model_from_json(json{{"family", "vae"}, {"params", {1.0}}}), IoError);
    EXPECT_THROW(model_from_json(json{{"params", {1.0}}}), IoError);
    EXPECT_THROW(load_model(scratch_dir() / "does_not_exist.json"), IoError);
    write_text(scratch_dir() / "garbage.json", "{not json");
    EXPECT_THROW(load_model(scratch_dir() / "garbage.json"), IoError);
}

TEST(TraceCsv, HeaderAndEmptyColumns) {
    TuningTrace t;
    TraceRow a;
    a.k = 0;
    a.particle_reward = 0.25;
    a.ess = 99.5;
    a.gamma = 0.1;
    a.grad_norm = 2.0;
    TraceRow b = a;
    b.k = 1;
    b.resampled = true;
    b.fresh_reward = 0.5;
    b.kl_quadrature = 0.125;
    t.rows = {a, b};
    const std::string csv = trace_to_csv(t);
    EXPECT_EQ(csv,
              "k,particle_reward,ess,gamma,grad_norm,resampled,wall_clock_s,fresh_reward,kl_quadrature\n"
              "0,0.25,99.5,0.10000000000000001,2,0,,,\n"
              "1,0.25,99.5,0.10000000000000001,2,1,,0.5,0.125\n");
}

TEST(PositionsCsv, RoundTrip) {
    Rng rng(3);
    const Positions x = standard_normal(25, 2, rng);
    const std::string csv = positions_to_csv(x);
    EXPECT_EQ(csv.substr(0, 6), "x1,x2\n");
    EXPECT_EQ(positions_from_csv(csv), x);
}

TEST(PositionsCsv, Errors) {
    EXPECT_THROW(positions_from_csv(""), IoError);
    EXPECT_THROW(positions_from_csv("x1,x2\n"), IoError);
    EXPECT_THROW(positions_from_csv("x1,x2\n1,2\n3\n"), IoError);
    EXPECT_THROW(positions_from_csv("x1,x2\n1,abc\n"), IoError);
}

TEST(ContentHash, StableAndSensitive) {
    EXPECT_EQ(content_hash(""), "cbf29ce484222325");
    EXPECT_EQ(content_hash("abc"), content_hash("abc"));
    EXPECT_NE(content_hash("abc"), content_hash("abd"));
    EXPECT_EQ(content_hash("abc").size(), 16u);
}
