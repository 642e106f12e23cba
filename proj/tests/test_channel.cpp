#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "envlink/channel.hpp"
#include "envlink/rng.hpp"
#include "envlink/scene.hpp"

using namespace envlink;
using namespace envlink::channel;

namespace {

scene::Scene open_scene(const Vec3& tx_pos, std::vector<scene::Scatterer> scatterers = {}) {
    scene::Scene sc;
    sc.bounds = {{-500, -500, 0}, {500, 500, 200}};
    sc.tx = scene::TxSite{tx_pos, 128, 0.5, 0.0, -8.0};
    sc.scatterers = std::move(scatterers);
    return sc;
}

scene::Scatterer box(int id, const Aabb& b,
                     scene::Material m = scene::Material::Concrete) {
    return {id, b, m, scene::MobilityClass::statics(), 0, 6, true};
}

}  // namespace

TEST_CASE("path_gain reproduces the free-space formula") {
    const double fc = 6.775e9;
    const double lambda = kSpeedOfLight / fc;
    const double expected_db = 20.0 * std::log10(4.0 * kPi * 1.0 / lambda);
    CHECK(path_loss_db(path_gain(1.0, fc)) == Catch::Approx(expected_db).margin(1e-9));
    CHECK(expected_db == Catch::Approx(49.06).margin(0.005));

    // Doubling the length halves the amplitude.
    const double step_db = path_loss_db(path_gain(2.0, fc)) - path_loss_db(path_gain(1.0, fc));
    CHECK(step_db == Catch::Approx(20.0 * std::log10(2.0)).margin(1e-9));

    // Reflection multiplies by -amplitude: metal is 0.9 with a pi phase flip.
    const cplx plain = path_gain(10.0, fc);
    const cplx metal = path_gain(10.0, fc, scene::Material::Metal);
    CHECK(std::abs(metal - (-0.9) * plain) < 1e-15);

    CHECK_THROWS_AS(path_gain(0.0, fc), std::invalid_argument);
}

TEST_CASE("empty scene traces exactly direct + ground bounce") {
    const auto sc = open_scene({0, 0, 10});
    const auto cir = trace_paths(sc, {100, 0, 2});
    REQUIRE(cir.paths.size() == 2);
    CHECK(cir.paths[0].kind == PathKind::Direct);
    CHECK(cir.paths[1].kind == PathKind::GroundReflection);

    // Image method by hand: specular point x = 100 * 10/12 = 83.33,
    // reflected length sqrt(100^2 + 12^2).
    const double reflected = std::sqrt(100.0 * 100.0 + 12.0 * 12.0);
    CHECK(cir.paths[1].delay * kSpeedOfLight == Catch::Approx(reflected).epsilon(1e-9));
    CHECK(cir.paths[0].delay * kSpeedOfLight ==
          Catch::Approx(std::sqrt(100.0 * 100.0 + 8.0 * 8.0)).epsilon(1e-9));
    // Ground coefficient 0.7 with sign flip.
    const cplx expected = path_gain(reflected, 6.775e9) * (-0.7);
    CHECK(std::abs(cir.paths[1].gain - expected) < 1e-15);
}

TEST_CASE("a corridor-spanning cube removes the direct path") {
    const auto sc = open_scene({0, 0, 10}, {box(0, {{40, -50, 0}, {60, 50, 50}})});
    const auto cir = trace_paths(sc, {100, 0, 2});
    CHECK(cir.direct() == nullptr);
    CHECK(cir.paths.empty());  // ground bounce is shadowed too, no aligned walls
}

TEST_CASE("paths come out in deterministic order: direct, ground, then sorted walls") {
    // One wall north of the corridor and one south; both specular points sit
    // at x=50 by symmetry and neither wall shadows the other's bounce.
    const auto sc = open_scene({0, 0, 10}, {box(4, {{30, 20, 0}, {70, 30, 30}}),
                                            box(1, {{20, -30, 0}, {80, -20, 30}})});
    const auto cir = trace_paths(sc, {100, 0, 2});
    REQUIRE(cir.paths.size() == 4);
    CHECK(cir.paths[0].kind == PathKind::Direct);
    CHECK(cir.paths[1].kind == PathKind::GroundReflection);
    CHECK(cir.paths[2].kind == PathKind::WallReflection);
    CHECK(cir.paths[2].scatterer_id == 1);
    CHECK(cir.paths[3].scatterer_id == 4);
    CHECK(cir.paths[2].face_id == 3);  // reflected off the y=hi face
    CHECK(cir.paths[3].face_id == 2);  // reflected off the y=lo face
}

TEST_CASE("rx inside a scatterer is rejected") {
    const auto sc = open_scene({0, 0, 10}, {box(0, {{40, -5, 0}, {60, 5, 20}})});
    CHECK_THROWS_AS(trace_paths(sc, {50, 0, 2}), std::invalid_argument);
}

TEST_CASE("wall reflections obey the reflection law and image-length identity") {
    Rng rng(77);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<scene::Scatterer> boxes;
        const int n = 3 + static_cast<int>(rng.uniform_int(0, 3));
        for (int i = 0; i < n; ++i) {
            const Vec3 lo{rng.uniform(-150, 120), rng.uniform(-150, 120), 0.0};
            boxes.push_back(box(i, {lo, lo + Vec3{rng.uniform(5, 30), rng.uniform(5, 30),
                                                  rng.uniform(5, 40)}}));
        }
        const auto sc = open_scene({rng.uniform(-200, 200), rng.uniform(-200, 200),
                                    rng.uniform(5, 30)}, boxes);
        Vec3 rx{rng.uniform(-200, 200), rng.uniform(-200, 200), 2.0};
        bool inside = false;
        for (const auto& s : sc.scatterers) {
            if (s.box.contains(rx)) inside = true;
            if (s.box.contains(sc.tx.position)) inside = true;
        }
        if (inside) continue;
        const auto cir = trace_paths(sc, rx);
        for (const auto& p : cir.paths) {
            if (p.kind != PathKind::WallReflection) continue;
            ++checked;
            const auto& s = sc.scatterers[static_cast<std::size_t>(p.scatterer_id)];
            const double plane = p.face_id == 0   ? s.box.lo.x
                                 : p.face_id == 1 ? s.box.hi.x
                                 : p.face_id == 2 ? s.box.lo.y
                                                  : s.box.hi.y;
            const int axis = p.face_id < 2 ? 0 : 1;
            Vec3 tx_img = sc.tx.position;
            (axis == 0 ? tx_img.x : tx_img.y) = 2 * plane - (axis == 0 ? tx_img.x : tx_img.y);
            // delay * c equals |tx_image - rx|
            CHECK(p.delay * kSpeedOfLight ==
                  Catch::Approx(distance(tx_img, rx)).epsilon(1e-9));
            // reflection point from the image construction
            const double denom =
                (axis == 0 ? rx.x - tx_img.x : rx.y - tx_img.y);
            const double t = (plane - (axis == 0 ? tx_img.x : tx_img.y)) / denom;
            const Vec3 pt = tx_img + (rx - tx_img) * t;
            Vec3 nrm{0, 0, 0};
            (axis == 0 ? nrm.x : nrm.y) = 1.0;
            const Vec3 in = pt - sc.tx.position;
            const Vec3 out = rx - pt;
            const double cos_in = std::abs(dot(in, nrm)) / norm(in);
            const double cos_out = std::abs(dot(out, nrm)) / norm(out);
            CHECK(std::acos(std::clamp(cos_in, -1.0, 1.0)) ==
                  Catch::Approx(std::acos(std::clamp(cos_out, -1.0, 1.0))).margin(1e-9));
        }
    }
    CHECK(checked > 20);
}

TEST_CASE("direct-path presence agrees with a brute-force sampling oracle") {
    Rng rng(2024);
    int blocked_count = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<scene::Scatterer> boxes;
        const int n = 5 + static_cast<int>(rng.uniform_int(0, 15));
        for (int i = 0; i < n; ++i) {
            const Vec3 lo{rng.uniform(-90, 60), rng.uniform(-90, 60), 0.0};
            boxes.push_back(box(i, {lo, lo + Vec3{rng.uniform(2, 35), rng.uniform(2, 35),
                                                  rng.uniform(2, 45)}}));
        }
        auto sc = open_scene({rng.uniform(-100, 100), rng.uniform(-100, 100),
                              rng.uniform(5, 40)}, boxes);
        Vec3 rx{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(1, 3)};
        bool bad = false;
        for (const auto& s : sc.scatterers)
            if (s.box.contains(rx) || s.box.contains(sc.tx.position)) bad = true;
        if (bad) continue;

        const auto cir = trace_paths(sc, rx);
        bool brute_blocked = false;
        for (int i = 0; i < 10000 && !brute_blocked; ++i) {
            const double t = (i + 0.5) / 10000;
            const Vec3 p = sc.tx.position + (rx - sc.tx.position) * t;
            for (const auto& s : sc.scatterers)
                if (s.box.contains(p)) {
                    brute_blocked = true;
                    break;
                }
        }
        CHECK((cir.direct() == nullptr) == brute_blocked);
        if (brute_blocked) ++blocked_count;
    }
    CHECK(blocked_count > 10);
}

TEST_CASE("los test is reciprocal under tx/rx swap") {
    Rng rng(5150);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<scene::Scatterer> boxes;
        for (int i = 0; i < 8; ++i) {
            const Vec3 lo{rng.uniform(-90, 60), rng.uniform(-90, 60), 0.0};
            boxes.push_back(box(i, {lo, lo + Vec3{rng.uniform(5, 30), rng.uniform(5, 30),
                                                  rng.uniform(5, 40)}}));
        }
        const Vec3 a{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(2, 40)};
        const Vec3 b{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(2, 40)};
        bool bad = false;
        for (const auto& s : boxes)
            if (s.box.contains(a) || s.box.contains(b)) bad = true;
        if (bad) continue;
        const auto fwd = trace_paths(open_scene(a, boxes), b);
        const auto rev = trace_paths(open_scene(b, boxes), a);
        CHECK((fwd.direct() != nullptr) == (rev.direct() != nullptr));
    }
}

TEST_CASE("cfr of a single path has flat magnitude") {
    Cir cir;
    cir.paths.push_back({PathKind::Direct, -1, -1, 350e-9, cplx(0.3, -0.4), 0.2, 0.0});
    OfdmConfig ofdm;
    scene::TxSite tx;
    tx.n_elements = 4;
    const auto cfr = cir_to_cfr(cir, ofdm, tx);
    REQUIRE(cfr.n_subcarriers == 69);
    const double mag = std::abs(cfr.at(0, 0, 0));
    for (int k = 0; k < cfr.n_subcarriers; ++k)
        for (int s = 0; s < cfr.n_symbols; ++s)
            CHECK(std::abs(cfr.at(k, s, 0)) == Catch::Approx(mag).epsilon(1e-12));
}

TEST_CASE("two equal paths produce a 1/delta-tau magnitude period") {
    // Fringe period = 23 subcarriers: delta_tau = 1/(23 * 120 kHz).
    const double dtau = 1.0 / (23.0 * 120e3);
    Cir cir;
    cir.paths.push_back({PathKind::Direct, -1, -1, 1e-6, cplx(1.0, 0.0), 0.0, 0.0});
    cir.paths.push_back({PathKind::WallReflection, 0, 0, 1e-6 + dtau, cplx(1.0, 0.0), 0.0, 0.0});
    OfdmConfig ofdm;
    scene::TxSite tx;
    tx.n_elements = 1;
    const auto cfr = cir_to_cfr(cir, ofdm, tx);
    for (int k = 0; k + 23 < cfr.n_subcarriers; ++k)
        CHECK(std::abs(cfr.at(k, 0, 0)) == Catch::Approx(std::abs(cfr.at(k + 23, 0, 0))).margin(1e-9));
}

TEST_CASE("empty cir yields the all-zero tensor") {
    const auto cfr = cir_to_cfr(Cir{}, OfdmConfig{}, scene::TxSite{});
    for (const auto& v : cfr.h) CHECK(v == cplx(0.0, 0.0));
}

TEST_CASE("doppler and array terms enter with the declared conventions") {
    Cir cir;
    cir.paths.push_back({PathKind::Direct, -1, -1, 0.5e-6, cplx(1.0, 0.0), 0.3, 40.0});
    OfdmConfig ofdm;
    scene::TxSite tx;
    tx.n_elements = 8;
    const auto cfr = cir_to_cfr(cir, ofdm, tx);
    const cplx sym_ratio = cfr.at(0, 1, 0) / cfr.at(0, 0, 0);
    CHECK(std::abs(sym_ratio - std::polar(1.0, 2.0 * kPi * 40.0 / ofdm.scs_hz)) < 1e-9);
    const cplx elem_ratio = cfr.at(0, 0, 5) / cfr.at(0, 0, 4);
    CHECK(std::abs(elem_ratio - std::polar(1.0, kPi * std::sin(0.3))) < 1e-9);
}

TEST_CASE("statistical path loss reproduces the urban-macro formulas") {
    const double fc_ghz = 6.775;
    const double expected_los = 28.0 + 22.0 * std::log10(100.0) + 20.0 * std::log10(fc_ghz);
    const double expected_nlos = 13.54 + 39.08 * std::log10(100.0) +
                                 20.0 * std::log10(fc_ghz) - 0.6 * (2.0 - 1.5);
    CHECK(stat_path_loss(100, 100, fc_ghz, 2.0, true) ==
          Catch::Approx(expected_los).margin(1e-9));
    CHECK(stat_path_loss(100, 100, fc_ghz, 2.0, false) ==
          Catch::Approx(expected_nlos).margin(1e-9));
    CHECK(expected_los == Catch::Approx(88.62).margin(0.005));
    CHECK(expected_nlos == Catch::Approx(108.02).margin(0.005));

    // NLoS is a max construction, so it never undercuts LoS.
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double d = rng.uniform(1.0, 500.0);
        CHECK(stat_path_loss(d, d, fc_ghz, 2.0, false) >= stat_path_loss(d, d, fc_ghz, 2.0, true));
    }
    CHECK_THROWS_AS(stat_path_loss(0.5, 0.5, fc_ghz, 2.0, true), std::invalid_argument);

    // Seeded shadowing is reproducible and distinct between LoS and NLoS sigmas.
    Rng s1(9), s2(9);
    CHECK(stat_path_loss(100, 100, fc_ghz, 2.0, true, &s1) ==
          stat_path_loss(100, 100, fc_ghz, 2.0, true, &s2));
    CHECK(stat_path_loss(100, 100, fc_ghz, 2.0, true, &s1) !=
          stat_path_loss(100, 100, fc_ghz, 2.0, true, &s1));
}

TEST_CASE("received power: floor, coherent array gain, and total tx power") {
    OfdmConfig ofdm;
    scene::TxSite tx;

    // Zero channel floors at -300 dBm.
    Cfr zero(69, 3, 4);
    std::vector<cplx> w4(4, cplx(0.5, 0.0));
    CHECK(received_power(zero, w4, -8.0) == -300.0);

    // Matched broadside beam on a 128-element flat channel gains 10log10(128)
    // over a single element at equal total tx power.
    Cir cir;
    cir.paths.push_back({PathKind::Direct, -1, -1, 1e-6, cplx(1e-4, 0.0), 0.0, 0.0});
    scene::TxSite tx128 = tx;
    tx128.n_elements = 128;
    const auto cfr128 = cir_to_cfr(cir, ofdm, tx128);
    std::vector<cplx> matched(128, cplx(1.0 / std::sqrt(128.0), 0.0));
    scene::TxSite tx1 = tx;
    tx1.n_elements = 1;
    const auto cfr1 = cir_to_cfr(cir, ofdm, tx1);
    std::vector<cplx> single{cplx(1.0, 0.0)};
    const double p128 = received_power(cfr128, matched, -linear_to_db(128.0));
    const double p1 = received_power(cfr1, single, 0.0);
    CHECK(p128 - p1 == Catch::Approx(linear_to_db(128.0)).margin(1e-9));

    // Default budget: -8 dBm per element over 128 elements.
    scene::TxSite budget;
    budget.per_element_power_dbm = -8.0;
    budget.n_elements = 128;
    CHECK(budget.total_power_dbm() == Catch::Approx(13.0721).margin(2e-4));

    // Unit-norm weights are a hard precondition.
    std::vector<cplx> bad(128, cplx(1.0, 0.0));
    CHECK_THROWS_AS(received_power(cfr128, bad, -8.0), std::invalid_argument);
}

TEST_CASE("total received wideband power ignores path relabeling") {
    Rng rng(88);
    Cir cir;
    for (int i = 0; i < 6; ++i)
        cir.paths.push_back({PathKind::WallReflection, i, 0, rng.uniform(0.1e-6, 2e-6),
                             std::polar(rng.uniform(1e-6, 1e-4), rng.uniform(0.0, 2 * kPi)),
                             rng.uniform(-1.0, 1.0), 0.0});
    OfdmConfig ofdm;
    scene::TxSite tx;
    tx.n_elements = 8;
    std::vector<cplx> w(8, cplx(1.0 / std::sqrt(8.0), 0.0));

    const double base = received_power(cir_to_cfr(cir, ofdm, tx), w, -8.0);
    Cir shuffled = cir;
    std::reverse(shuffled.paths.begin(), shuffled.paths.end());
    CHECK(received_power(cir_to_cfr(shuffled, ofdm, tx), w, -8.0) ==
          Catch::Approx(base).epsilon(1e-12));
    std::rotate(shuffled.paths.begin(), shuffled.paths.begin() + 2, shuffled.paths.end());
    CHECK(received_power(cir_to_cfr(shuffled, ofdm, tx), w, -8.0) ==
          Catch::Approx(base).epsilon(1e-12));
}

TEST_CASE("empty-scene cfr matches the analytic two-ray field") {
    Rng rng(314);
    OfdmConfig ofdm;
    scene::TxSite one;
    one.n_elements = 1;
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3 tx{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(3, 40)};
        const Vec3 rx{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(1, 10)};
        if (horizontal_distance(tx, rx) < 1.0) continue;
        auto sc = open_scene(tx);
        sc.tx.n_elements = 1;
        const auto cfr = cir_to_cfr(trace_paths(sc, rx), ofdm, one);

        const double d_dir = distance(tx, rx);
        const double d_gnd = distance(Vec3{tx.x, tx.y, -tx.z}, rx);
        const double lambda = kSpeedOfLight / ofdm.fc_hz;
        for (int k = 0; k < cfr.n_subcarriers; k += 17) {
            const double fk = ofdm.subcarrier_freq(k);
            const cplx direct = std::polar(lambda / (4 * kPi * d_dir),
                                           -2 * kPi * d_dir / lambda - 2 * kPi * fk * d_dir / kSpeedOfLight);
            const cplx ground = -0.7 * std::polar(lambda / (4 * kPi * d_gnd),
                                                  -2 * kPi * d_gnd / lambda - 2 * kPi * fk * d_gnd / kSpeedOfLight);
            const cplx expected = direct + ground;
            CHECK(std::abs(cfr.at(k, 0, 0) - expected) <= 1e-6 * std::abs(expected) + 1e-18);
        }
    }
}
