#include <catch2/catch_amalgamated.hpp>

#include "envlink/predict.hpp"

using namespace envlink;
using namespace envlink::predict;

namespace {

wei::WeiFeatureVector feat(double d3d, int blocked = 0, double d2d = -1.0) {
    wei::WeiFeatureVector f;
    f.d3d = d3d;
    f.d2d = d2d < 0 ? d3d : d2d;
    f.los_blocked = blocked;
    return f;
}

channel::Cfr one_antenna_cfr(const std::vector<std::pair<double, cplx>>& paths,
                             const channel::OfdmConfig& ofdm) {
    channel::Cir cir;
    for (const auto& [delay, gain] : paths)
        cir.paths.push_back({channel::PathKind::WallReflection, 0, 0, delay, gain, 0.0, 0.0});
    scene::TxSite one;
    one.n_elements = 1;
    return channel::cir_to_cfr(cir, ofdm, one);
}

}  // namespace

TEST_CASE("stat tier reproduces the closed-form baseline") {
    const auto m = fit(PredictorTier::StatModel, {{feat(10.0), 70.0}});
    const double expected = 28.0 + 22.0 * std::log10(100.0) + 20.0 * std::log10(6.775);
    CHECK(predict_path_loss(m, feat(100.0, 0)) == Catch::Approx(expected).margin(1e-9));
    // Blocked links switch to the NLoS branch.
    const double expected_nlos =
        13.54 + 39.08 * std::log10(100.0) + 20.0 * std::log10(6.775) - 0.6 * 0.5;
    CHECK(predict_path_loss(m, feat(100.0, 1)) == Catch::Approx(expected_nlos).margin(1e-9));
}

TEST_CASE("simple tier recovers an exact log-linear law") {
    std::vector<PlRow> train;
    for (double d : {10.0, 20.0, 50.0, 120.0, 300.0})
        train.push_back({feat(d), 30.0 + 25.0 * std::log10(d)});
    const auto m = fit(PredictorTier::SimpleFeature, train);
    for (double d : {15.0, 75.0, 200.0})
        CHECK(predict_path_loss(m, feat(d)) ==
              Catch::Approx(30.0 + 25.0 * std::log10(d)).margin(1e-9));
}

TEST_CASE("knn: one-row training set predicts its own target everywhere") {
    FitHyper hyper;
    hyper.knn_k = 1;
    const auto m = fit(PredictorTier::WeiRegressor, {{feat(42.0), 97.5}}, hyper);
    CHECK(predict_path_loss(m, feat(10.0)) == 97.5);
    CHECK(predict_path_loss(m, feat(400.0)) == 97.5);
}

TEST_CASE("knn interpolates exactly at a training knot") {
    FitHyper hyper;
    hyper.knn_k = 3;
    std::vector<PlRow> train;
    for (double d : {10.0, 30.0, 60.0, 90.0, 150.0}) train.push_back({feat(d), d + 50.0});
    const auto m = fit(PredictorTier::WeiRegressor, train, hyper);
    CHECK(predict_path_loss(m, feat(60.0)) == Catch::Approx(110.0).margin(1e-12));
}

TEST_CASE("knn averages two equidistant neighbours") {
    FitHyper hyper;
    hyper.knn_k = 2;
    const auto m =
        fit(PredictorTier::WeiRegressor, {{feat(50.0), 80.0}, {feat(150.0), 90.0}}, hyper);
    CHECK(predict_path_loss(m, feat(100.0)) == Catch::Approx(85.0).margin(1e-9));
}

TEST_CASE("knn with identical targets is a constant field") {
    FitHyper hyper;
    hyper.knn_k = 2;
    const auto m =
        fit(PredictorTier::WeiRegressor, {{feat(10.0), 77.0}, {feat(90.0), 77.0}}, hyper);
    for (double d : {5.0, 55.0, 300.0}) CHECK(predict_path_loss(m, feat(d)) == Catch::Approx(77.0));
}

TEST_CASE("fit rejects k above the training size and empty training sets") {
    FitHyper hyper;
    hyper.knn_k = 5;
    CHECK_THROWS_AS(fit(PredictorTier::WeiRegressor, {{feat(1.0), 1.0}}, hyper),
                    std::invalid_argument);
    CHECK_THROWS_AS(fit(PredictorTier::SimpleFeature, {}), std::invalid_argument);
}

TEST_CASE("knn prediction is invariant to affine rescaling of a raw column") {
    std::vector<PlRow> train;
    for (int i = 0; i < 12; ++i) {
        auto f = feat(20.0 + 11.0 * i, i % 3 == 0);
        f.n_first_order_reflectors = i % 4;
        f.rx_bearing = 0.3 * i - 1.0;
        train.push_back({f, 60.0 + 3.0 * i});
    }
    FitHyper hyper;
    hyper.knn_k = 4;
    const auto m = fit(PredictorTier::WeiRegressor, train, hyper);

    auto rescaled = train;
    for (auto& r : rescaled) r.feature.d2d *= 3280.84;  // meters -> arbitrary raw unit
    const auto m2 = fit(PredictorTier::WeiRegressor, rescaled, hyper);

    for (double d : {25.0, 77.0, 140.0}) {
        auto q = feat(d, 0);
        auto q2 = q;
        q2.d2d *= 3280.84;
        CHECK(predict_path_loss(m2, q2) == Catch::Approx(predict_path_loss(m, q)).epsilon(1e-9));
    }
}

TEST_CASE("nmse: identity, zero prediction, and scale diagnostics") {
    const std::vector<cplx> h = {{1, 2}, {0.5, -1}, {3, 0.25}};
    std::vector<cplx> same = h;
    CHECK(nmse(std::span<const cplx>(h), std::span<const cplx>(same)) == 0.0);

    const std::vector<cplx> zero(h.size(), cplx(0, 0));
    CHECK(nmse(std::span<const cplx>(h), std::span<const cplx>(zero)) == Catch::Approx(1.0));

    for (double alpha : {2.0, 0.3, 1.7}) {
        std::vector<cplx> scaled;
        for (const auto& v : h) scaled.push_back(alpha * v);
        CHECK(nmse(std::span<const cplx>(h), std::span<const cplx>(scaled)) ==
              Catch::Approx((alpha - 1) * (alpha - 1)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(nmse(std::span<const cplx>(zero), std::span<const cplx>(h)),
                    std::invalid_argument);
    const std::vector<cplx> short_vec = {{1, 0}};
    CHECK_THROWS_AS(nmse(std::span<const cplx>(h), std::span<const cplx>(short_vec)),
                    std::invalid_argument);
}

TEST_CASE("cdf_points sorts and ranks") {
    const auto cdf = cdf_points({3, 1, 2});
    REQUIRE(cdf.size() == 3);
    CHECK(cdf[0] == std::pair(1.0, 1.0 / 3));
    CHECK(cdf[1] == std::pair(2.0, 2.0 / 3));
    CHECK(cdf[2] == std::pair(3.0, 1.0));

    const auto flat = cdf_points({5, 5, 5});
    CHECK(flat.back() == std::pair(5.0, 1.0));

    const auto single = cdf_points({4.2});
    REQUIRE(single.size() == 1);
    CHECK(single[0] == std::pair(4.2, 1.0));

    CHECK_THROWS_AS(cdf_points({}), std::invalid_argument);
}

TEST_CASE("noiseless pilots with exact delays reconstruct exactly") {
    channel::OfdmConfig ofdm;
    const std::vector<std::pair<double, cplx>> paths = {{0.3e-6, {1.0, 0.2}},
                                                        {0.9e-6, {-0.4, 0.5}},
                                                        {1.4e-6, {0.1, -0.7}},
                                                        {2.2e-6, {0.05, 0.02}}};
    const auto truth = one_antenna_cfr(paths, ofdm);
    const auto obs = sample_pilots(truth);
    REQUIRE(obs.subcarrier_indices.size() == 9);  // 69 subcarriers, stride 8
    std::vector<double> delays;
    for (const auto& [d, g] : paths) delays.push_back(d);
    const auto rec = reconstruct_cfr_from_pilots(obs, delays, ofdm);
    CHECK(nmse(truth, rec) < 1e-10);
}

TEST_CASE("single short-delay path: interpolation and basis fit agree on a flat channel") {
    channel::OfdmConfig ofdm;
    const auto truth = one_antenna_cfr({{1e-10, {0.8, -0.6}}}, ofdm);
    const auto obs = sample_pilots(truth);
    const auto rec_basis = reconstruct_cfr_from_pilots(obs, {1e-10}, ofdm);
    const auto rec_interp = interpolate_pilots(obs, ofdm);
    for (int k = 0; k < truth.n_subcarriers; ++k)
        CHECK(std::abs(rec_interp.at(k, 0, 0)) ==
              Catch::Approx(std::abs(rec_basis.at(k, 0, 0))).epsilon(1e-6));
}

TEST_CASE("aliased two-path channel favours the delay basis over interpolation") {
    channel::OfdmConfig ofdm;
    // Delta-tau of 2 us puts the 0.5 MHz fringe under the 0.96 MHz pilot spacing.
    const std::vector<std::pair<double, cplx>> paths = {{0.5e-6, {1.0, 0.0}},
                                                        {2.5e-6, {0.9, 0.1}}};
    const auto truth = one_antenna_cfr(paths, ofdm);
    const auto obs = sample_pilots(truth);
    const auto rec_basis = reconstruct_cfr_from_pilots(obs, {0.5e-6, 2.5e-6}, ofdm);
    const auto rec_interp = interpolate_pilots(obs, ofdm);
    const double nb = nmse(truth, rec_basis);
    const double ni = nmse(truth, rec_interp);
    CHECK(nb < ni);
    CHECK(nb < 1e-10);
    CHECK(ni > 0.05);
}

TEST_CASE("duplicate delays are merged before the solve") {
    channel::OfdmConfig ofdm;
    const auto truth = one_antenna_cfr({{0.5e-6, {1.0, 0.0}}, {1.5e-6, {0.2, 0.4}}}, ofdm);
    const auto obs = sample_pilots(truth);
    const auto rec = reconstruct_cfr_from_pilots(obs, {0.5e-6, 0.5e-6 + 5e-14, 1.5e-6}, ofdm);
    CHECK(nmse(truth, rec) < 1e-10);
}

TEST_CASE("pilot fit validates its preconditions") {
    channel::OfdmConfig ofdm;
    const auto truth = one_antenna_cfr({{0.5e-6, {1.0, 0.0}}}, ofdm);
    auto obs = sample_pilots(truth);

    std::vector<double> too_many;
    for (int i = 0; i < 12; ++i) too_many.push_back(1e-7 * (i + 1));
    CHECK_THROWS_AS(reconstruct_cfr_from_pilots(obs, too_many, ofdm), std::invalid_argument);

    auto bad = obs;
    bad.subcarrier_indices[1] = 3;  // not on the stride-8 comb
    CHECK_THROWS_AS(reconstruct_cfr_from_pilots(bad, {0.5e-6}, ofdm), std::invalid_argument);

    CHECK_THROWS_AS(reconstruct_cfr_from_pilots(obs, {}, ofdm), std::invalid_argument);
}
