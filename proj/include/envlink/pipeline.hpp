#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "envlink/alloc.hpp"
#include "envlink/beam.hpp"
#include "envlink/channel.hpp"
#include "envlink/csv.hpp"
#include "envlink/predict.hpp"
#include "envlink/scene.hpp"
#include "envlink/scene_io.hpp"
#include "envlink/wei.hpp"

// End-to-end orchestration of the sensing -> feature extraction -> prediction
// -> proactive decision -> applied strategy loop, plus the four benchmark
// tasks (coverage, CSI prediction, beam selection, max-min allocation).

namespace envlink::pipeline {

struct RunConfig {
    scene::SceneGenConfig scene_config;
    std::string scene_file;  // when set, the scene is loaded instead of generated
    channel::OfdmConfig ofdm;
    predict::PredictorTier tier = predict::PredictorTier::WeiRegressor;
    std::vector<int> tasks{1, 2, 3, 4};
    std::uint64_t master_seed = 0;
    std::string out_dir = "out";
    double exact_alloc_limit = 1e7;
    int n_users = 10;
    bool proactive = true;
    double train_fraction = 0.8;
    int knn_k = 5;
    double pilot_snr_db = 20.0;
    double noise_figure_db = 7.0;
    int beam_eval_max_links = 500;  // deterministic cap on beam-task samples
    int n_user_candidates = 384;    // road positions probed when picking served users
    double serving_margin_db = 2.0; // candidates within this much beamformed power of the best
};

struct TaskRecord {
    int task_id = 0;
    std::vector<std::pair<std::string, double>> metrics;

    double metric(const std::string& name) const {
        for (const auto& [k, v] : metrics)
            if (k == name) return v;
        throw std::out_of_range("no metric named " + name);
    }
};

struct RunReport {
    std::vector<TaskRecord> tasks;
    std::vector<std::pair<std::string, double>> stage_ms;  // not written to CSV outputs
    std::vector<std::string> config_echo;
};

// Stage indices for child-seed derivation; one stream per stochastic stage.
enum Stage : std::uint64_t {
    kStageScene = 1,
    kStageSplit = 2,
    kStagePilotNoise = 3,
    kStageApply = 5,
    kStageSceneB = 6,
    kStageUsers = 7,
};

inline std::vector<std::string> config_echo(const RunConfig& c) {
    std::string tasks;
    for (std::size_t i = 0; i < c.tasks.size(); ++i)
        tasks += (i ? "," : "") + std::to_string(c.tasks[i]);
    const auto& s = c.scene_config;
    std::vector<std::string> lines;
    lines.push_back("seed=" + fmt(c.master_seed) + " tier=" + predict::tier_name(c.tier) +
                    " tasks=" + tasks);
    if (c.scene_file.empty()) {
        lines.push_back("scene: side_m=" + fmt(s.side_m) + " grid_gap_m=" + fmt(s.rx_grid_gap_m) +
                        " rx_height_m=" + fmt(s.rx_height_m) +
                        " building_groups=" + fmt(s.building_groups) +
                        " buildings_per_group=" + fmt(s.buildings_per_group) + " vehicles=[" +
                        fmt(s.vehicle_count_min) + "," + fmt(s.vehicle_count_max) + "] tx=[" +
                        fmt(s.tx_position.x) + "," + fmt(s.tx_position.y) + "," +
                        fmt(s.tx_position.z) + "]");
    } else {
        lines.push_back("scene: file=" + c.scene_file);
    }
    lines.push_back("ofdm: fc_hz=" + fmt(c.ofdm.fc_hz) + " bandwidth_hz=" + fmt(c.ofdm.bandwidth_hz) +
                    " scs_hz=" + fmt(c.ofdm.scs_hz) + " n_symbols=" + fmt(c.ofdm.n_symbols));
    lines.push_back("run: n_users=" + fmt(c.n_users) + " noise_figure_db=" + fmt(c.noise_figure_db) +
                    " pilot_snr_db=" + fmt(c.pilot_snr_db) + " train_fraction=" +
                    fmt(c.train_fraction) + " knn_k=" + fmt(c.knn_k) + " proactive=" +
                    fmt(c.proactive ? 1 : 0));
    return lines;
}

// ---- link dataset construction ----

struct Link {
    Vec3 rx;
    channel::Cir cir;
    wei::WeiFeatureVector feature;
    double pl_true_db = 0.0;  // wideband single-element loss; 300 dB cap = deep shadow
};

inline std::vector<Link> build_links(const scene::Scene& sc, const channel::OfdmConfig& ofdm) {
    std::vector<Link> links;
    links.reserve(sc.rx_points.size());
    for (const auto& rx : sc.rx_points) {
        Link l;
        l.rx = rx;
        l.cir = channel::trace_paths(sc, rx, ofdm.fc_hz);
        l.feature = wei::extract_link_features(sc, rx, l.cir);
        l.pl_true_db = channel::wideband_path_loss_db(l.cir, ofdm);
        links.push_back(std::move(l));
    }
    return links;
}

// 80/20 split over dataset-eligible links (finite true loss), seeded shuffle.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline Split split_links(const std::vector<Link>& links, double train_fraction,
                         std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < links.size(); ++i)
        if (links[i].pl_true_db < 300.0) eligible.push_back(i);
    if (eligible.size() < 2) throw std::runtime_error("split: not enough usable links");
    Rng rng(seed);
    for (std::size_t i = eligible.size(); i > 1; --i)
        std::swap(eligible[i - 1], eligible[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    auto n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(eligible.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, eligible.size() - 1);
    Split sp;
    sp.train.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n_train));
    sp.test.assign(eligible.begin() + static_cast<std::ptrdiff_t>(n_train), eligible.end());
    return sp;
}

inline std::vector<predict::PlRow> rows_for(const std::vector<Link>& links,
                                            const std::vector<std::size_t>& idx) {
    std::vector<predict::PlRow> rows;
    rows.reserve(idx.size());
    for (auto i : idx) rows.push_back({links[i].feature, links[i].pl_true_db});
    return rows;
}

struct FittedTiers {
    predict::PathLossModel stat;
    predict::PathLossModel simple;
    predict::PathLossModel wei;

    const predict::PathLossModel& by(predict::PredictorTier t) const {
        switch (t) {
            case predict::PredictorTier::StatModel: return stat;
            case predict::PredictorTier::SimpleFeature: return simple;
            case predict::PredictorTier::WeiRegressor: return wei;
        }
        return stat;
    }
};

inline FittedTiers fit_tiers(const std::vector<predict::PlRow>& train, const RunConfig& cfg) {
    predict::FitHyper hyper;
    hyper.knn_k = cfg.knn_k;
    hyper.fc_ghz = cfg.ofdm.fc_hz / 1e9;
    hyper.h_ut_m = cfg.scene_config.rx_height_m;
    return {predict::fit(predict::PredictorTier::StatModel, train, hyper),
            predict::fit(predict::PredictorTier::SimpleFeature, train, hyper),
            predict::fit(predict::PredictorTier::WeiRegressor, train, hyper)};
}

inline double tier_nmse(const predict::PathLossModel& model, const std::vector<Link>& links,
                        const std::vector<std::size_t>& test) {
    std::vector<double> truth;
    std::vector<double> pred;
    truth.reserve(test.size());
    pred.reserve(test.size());
    for (auto i : test) {
        truth.push_back(links[i].pl_true_db);
        pred.push_back(model.predict(links[i].feature));
    }
    return predict::nmse(truth, pred);
}

inline scene::Scene acquire_scene(const RunConfig& cfg) {
    scene::Scene sc = cfg.scene_file.empty()
                          ? scene::generate_scene(cfg.scene_config,
                                                  child_seed(cfg.master_seed, kStageScene))
                          : scene::load_scene(cfg.scene_file);
    sc = wei::preprocess(sc);
    const auto violations = scene::validate_scene(sc);
    if (!violations.empty())
        throw std::runtime_error("scene validation failed: " + violations.front());
    return sc;
}

// Beamformed single-antenna view of a CFR; used for pilot reconstruction and
// predicted-CSI rates. Transmit power accounting stays with the full array.
inline channel::Cfr effective_cfr(const channel::Cfr& cfr, std::span<const cplx> w) {
    channel::Cfr out(cfr.n_subcarriers, cfr.n_symbols, 1);
    for (int k = 0; k < cfr.n_subcarriers; ++k)
        for (int s = 0; s < cfr.n_symbols; ++s) {
            cplx acc = 0.0;
            for (int n = 0; n < cfr.n_tx; ++n) acc += std::conj(w[static_cast<std::size_t>(n)]) * cfr.at(k, s, n);
            out.at(k, s, 0) = acc;
        }
    return out;
}

inline predict::PilotObservations noisy_pilots(const channel::Cfr& one_antenna, double snr_db,
                                               Rng& rng) {
    auto obs = predict::sample_pilots(one_antenna);
    double mean_power = 0.0;
    int count = 0;
    for (const auto& row : obs.values)
        for (const auto& v : row) {
            mean_power += std::norm(v);
            ++count;
        }
    mean_power /= std::max(count, 1);
    const double sigma = std::sqrt(mean_power / db_to_linear(snr_db) / 2.0);
    for (auto& row : obs.values)
        for (auto& v : row) v += cplx(rng.normal(0.0, sigma), rng.normal(0.0, sigma));
    return obs;
}

// Strongest traced delays, capped at the pilot budget.
inline std::vector<double> traced_delays(const channel::Cir& cir, std::size_t max_count) {
    std::vector<const channel::PathComponent*> ps;
    for (const auto& p : cir.paths) ps.push_back(&p);
    std::sort(ps.begin(), ps.end(), [](auto* a, auto* b) {
        if (std::abs(a->gain) != std::abs(b->gain)) return std::abs(a->gain) > std::abs(b->gain);
        if (a->delay != b->delay) return a->delay < b->delay;
        return std::pair(a->scatterer_id, a->face_id) < std::pair(b->scatterer_id, b->face_id);
    });
    std::vector<double> out;
    for (std::size_t i = 0; i < ps.size() && i < max_count; ++i) out.push_back(ps[i]->delay);
    return out;
}

// ---- task runners ----

inline TaskRecord run_task_coverage(const RunConfig& cfg, const scene::Scene& sc,
                                    const std::vector<Link>& links, bool emit) {
    const auto split = split_links(links, cfg.train_fraction, child_seed(cfg.master_seed, kStageSplit));
    const auto tiers = fit_tiers(rows_for(links, split.train), cfg);

    TaskRecord rec;
    rec.task_id = 1;
    rec.metrics.emplace_back("nmse_stat", tier_nmse(tiers.stat, links, split.test));
    rec.metrics.emplace_back("nmse_simple", tier_nmse(tiers.simple, links, split.test));
    rec.metrics.emplace_back("nmse_wei", tier_nmse(tiers.wei, links, split.test));
    rec.metrics.emplace_back("n_links", static_cast<double>(links.size()));

    if (emit) {
        CsvWriter csv(cfg.out_dir + "/coverage.csv", config_echo(cfg),
                      "x,y,pl_true_db,pl_stat_db,pl_simple_db,pl_wei_db,los_flag");
        for (const auto& l : links) {
            csv.row(l.rx.x, l.rx.y, l.pl_true_db, tiers.stat.predict(l.feature),
                    tiers.simple.predict(l.feature), tiers.wei.predict(l.feature),
                    l.feature.los_blocked ? 0 : 1);
        }
    }
    (void)sc;
    return rec;
}

inline TaskRecord run_task_csi(const RunConfig& cfg, const scene::Scene& sc,
                               const std::vector<Link>& links, bool emit) {
    const auto split = split_links(links, cfg.train_fraction, child_seed(cfg.master_seed, kStageSplit));
    const auto tiers = fit_tiers(rows_for(links, split.train), cfg);

    TaskRecord rec;
    rec.task_id = 2;

    // Large-scale: held-out path-loss NMSE per tier.
    struct TierStat {
        const char* name;
        const predict::PathLossModel* model;
    };
    const TierStat tphases[3] = {{"stat", &tiers.stat}, {"simple", &tiers.simple}, {"wei", &tiers.wei}};
    std::optional<CsvWriter> metrics_csv;
    std::optional<CsvWriter> cdf_csv;
    if (emit) {
        metrics_csv.emplace(cfg.out_dir + "/metrics.csv", config_echo(cfg),
                            "task,tier,seed,nmse_mean,nmse_median");
        cdf_csv.emplace(cfg.out_dir + "/cdf_pathloss.csv", config_echo(cfg),
                        "tier,value_db,cumulative_fraction");
        std::vector<double> truth;
        for (auto i : split.test) truth.push_back(links[i].pl_true_db);
        for (const auto& [v, f] : predict::cdf_points(truth)) cdf_csv->row("true", v, f);
    }
    for (const auto& ts : tphases) {
        std::vector<double> errs;
        std::vector<double> preds;
        std::vector<double> truth;
        for (auto i : split.test) {
            const double p = ts.model->predict(links[i].feature);
            preds.push_back(p);
            truth.push_back(links[i].pl_true_db);
            const double e = p - links[i].pl_true_db;
            errs.push_back(e * e);
        }
        const double n = predict::nmse(truth, preds);
        std::vector<double> errs_sorted = errs;
        std::sort(errs_sorted.begin(), errs_sorted.end());
        double energy = 0.0;
        for (double t : truth) energy += t * t;
        const double median_nmse =
            errs_sorted[errs_sorted.size() / 2] * static_cast<double>(errs.size()) / energy;
        rec.metrics.emplace_back(std::string("nmse_") + ts.name, n);
        if (metrics_csv) metrics_csv->row(2, ts.name, cfg.master_seed, n, median_nmse);
        if (cdf_csv)
            for (const auto& [v, f] : predict::cdf_points(preds)) cdf_csv->row(ts.name, v, f);
    }
    rec.metrics.emplace_back("nmse_selected", tier_nmse(tiers.by(cfg.tier), links, split.test));

    // Small-scale: pilot-based CFR reconstruction on held-out links.
    Rng noise_rng(child_seed(cfg.master_seed, kStagePilotNoise));
    scene::TxSite one_element = sc.tx;
    one_element.n_elements = 1;
    std::optional<CsvWriter> pilot_csv;
    if (emit)
        pilot_csv.emplace(cfg.out_dir + "/pilot_reconstruction.csv", config_echo(cfg),
                          "link_id,n_paths,nmse_basis,nmse_interp");
    double basis_sum = 0.0, interp_sum = 0.0;
    double basis_sum_mp = 0.0, interp_sum_mp = 0.0;
    int count = 0, count_mp = 0;
    for (auto i : split.test) {
        const auto& cir = links[i].cir;
        if (cir.paths.empty()) continue;
        const auto truth = channel::cir_to_cfr(cir, cfg.ofdm, one_element);
        const auto obs = noisy_pilots(truth, cfg.pilot_snr_db, noise_rng);
        const auto delays = traced_delays(cir, obs.subcarrier_indices.size());
        const auto rec_basis = predict::reconstruct_cfr_from_pilots(obs, delays, cfg.ofdm);
        const auto rec_interp = predict::interpolate_pilots(obs, cfg.ofdm);
        const double nb = predict::nmse(truth, rec_basis);
        const double ni = predict::nmse(truth, rec_interp);
        basis_sum += nb;
        interp_sum += ni;
        ++count;
        if (cir.paths.size() >= 2) {
            basis_sum_mp += nb;
            interp_sum_mp += ni;
            ++count_mp;
        }
        if (pilot_csv) pilot_csv->row(static_cast<int>(i), static_cast<int>(cir.paths.size()), nb, ni);
    }
    rec.metrics.emplace_back("pilot_basis_nmse_mean", count ? basis_sum / count : 0.0);
    rec.metrics.emplace_back("pilot_interp_nmse_mean", count ? interp_sum / count : 0.0);
    rec.metrics.emplace_back("pilot_basis_nmse_mean_multipath", count_mp ? basis_sum_mp / count_mp : 0.0);
    rec.metrics.emplace_back("pilot_interp_nmse_mean_multipath", count_mp ? interp_sum_mp / count_mp : 0.0);
    rec.metrics.emplace_back("pilot_gain_pct_multipath",
                             count_mp && interp_sum_mp > 0.0
                                 ? 100.0 * (1.0 - basis_sum_mp / interp_sum_mp)
                                 : 0.0);
    rec.metrics.emplace_back("pilot_links", static_cast<double>(count));
    rec.metrics.emplace_back("pilot_links_multipath", static_cast<double>(count_mp));

    // Feature export (the sensing interface) rides with this task.
    if (emit) {
        CsvWriter feat(cfg.out_dir + "/features.csv", config_echo(cfg),
                       std::string("x,y,") + wei::WeiFeatureVector::csv_header());
        for (const auto& l : links) {
            const auto a = l.feature.as_array();
            feat.row(l.rx.x, l.rx.y, a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]);
        }
    }
    return rec;
}

inline TaskRecord run_task_beam(const RunConfig& cfg, const scene::Scene& sc,
                                const std::vector<Link>& links, bool emit) {
    const auto split = split_links(links, cfg.train_fraction, child_seed(cfg.master_seed, kStageSplit));
    const auto cb = beam::build_codebook(32, sc.tx.n_elements);

    std::vector<std::size_t> samples;
    for (auto i : split.test) {
        if (links[i].cir.paths.empty()) continue;  // no measurable truth beam
        samples.push_back(i);
        if (static_cast<int>(samples.size()) >= cfg.beam_eval_max_links) break;
    }

    std::vector<int> pred_wei, pred_base, truth_best;
    std::vector<std::vector<double>> truth_powers;
    int n_nlos = 0;
    std::optional<CsvWriter> csv;
    if (emit)
        csv.emplace(cfg.out_dir + "/beam_results.csv", config_echo(cfg),
                    "sample_id,true_best,pred_wei,pred_base,rank_of_pred_in_truth");
    for (auto i : samples) {
        const auto cfr = channel::cir_to_cfr(links[i].cir, cfg.ofdm, sc.tx);
        std::vector<double> powers(static_cast<std::size_t>(cb.n_beams));
        for (int m = 0; m < cb.n_beams; ++m)
            powers[static_cast<std::size_t>(m)] =
                channel::received_power(cfr, cb.row(m), sc.tx.per_element_power_dbm);
        const int best = static_cast<int>(std::max_element(powers.begin(), powers.end()) - powers.begin());
        const int pw = beam::predict_beam(links[i].feature, cb, true);
        const int pb = beam::predict_beam(links[i].feature, cb, false);
        if (links[i].feature.los_blocked) ++n_nlos;
        truth_best.push_back(best);
        truth_powers.push_back(std::move(powers));
        pred_wei.push_back(pw);
        pred_base.push_back(pb);
        if (csv)
            csv->row(static_cast<int>(i), best, pw, pb,
                     beam::rank_in_truth(pw, truth_powers.back()));
    }

    TaskRecord rec;
    rec.task_id = 3;
    rec.metrics.emplace_back("n_samples", static_cast<double>(samples.size()));
    rec.metrics.emplace_back("nlos_fraction",
                             samples.empty() ? 0.0 : static_cast<double>(n_nlos) / samples.size());
    for (int k : {1, 3, 5}) {
        rec.metrics.emplace_back("top" + std::to_string(k) + "_wei",
                                 beam::topk_accuracy(pred_wei, truth_powers, k));
        rec.metrics.emplace_back("top" + std::to_string(k) + "_base",
                                 beam::topk_accuracy(pred_base, truth_powers, k));
    }
    if (emit) {
        CsvWriter acc(cfg.out_dir + "/beam_accuracy.csv", config_echo(cfg),
                      "k,accuracy_wei,accuracy_base");
        for (int k : {1, 3, 5})
            acc.row(k, rec.metric("top" + std::to_string(k) + "_wei"),
                    rec.metric("top" + std::to_string(k) + "_base"));
    }
    return rec;
}

struct AllocationContext {
    scene::Scene scene_b;
    std::vector<Vec3> users;
    std::vector<channel::Cir> cirs;
    std::vector<wei::WeiFeatureVector> features;
    std::vector<channel::Cfr> cfrs;
    alloc::RateTensor rates_true;
    alloc::RateTensor rates_pred;
};

// Served users sit on the four road lanes of a freshly generated scene
// (unseen by any fitted model). Road positions are probed first and the users
// are drawn from the serving set: candidates whose best-beam received power is
// within serving_margin_db of the strongest probe, mirroring a base station
// scheduling the users its codebook actually covers.
inline AllocationContext build_allocation_context(const RunConfig& cfg) {
    AllocationContext ctx;
    scene::SceneGenConfig gen = cfg.scene_config;
    gen.rx_grid_gap_m = std::max(gen.rx_grid_gap_m, 10.0);  // grid unused here
    ctx.scene_b = wei::preprocess(scene::generate_scene(gen, child_seed(cfg.master_seed, kStageSceneB)));
    const auto cb = beam::build_codebook(32, ctx.scene_b.tx.n_elements);

    Rng user_rng(child_seed(cfg.master_seed, kStageUsers));
    const double hw = gen.road_half_width_m;
    const double lanes[4] = {-0.75 * hw, -0.25 * hw, 0.25 * hw, 0.75 * hw};
    const double x_lo = -0.45 * gen.side_m;
    const double x_hi = 0.45 * gen.side_m;
    // Probing uses a coarse subcarrier grid and one symbol; plenty for ranking.
    channel::OfdmConfig probe = cfg.ofdm;
    probe.scs_hz = cfg.ofdm.scs_hz * 4.0;
    probe.n_symbols = 1;
    const int n_cand = std::max(cfg.n_user_candidates, cfg.n_users);
    std::vector<Vec3> candidates;
    std::vector<double> cand_power;
    double best_power = -300.0;
    for (int c = 0; c < n_cand; ++c) {
        const double frac = n_cand == 1 ? 0.5 : static_cast<double>(c) / (n_cand - 1);
        const Vec3 p{x_lo + frac * (x_hi - x_lo) + user_rng.uniform(-1.5, 1.5),
                     lanes[c % 4], gen.rx_height_m};
        candidates.push_back(p);
        const auto cfr = channel::cir_to_cfr(channel::trace_paths(ctx.scene_b, p, cfg.ofdm.fc_hz),
                                             probe, ctx.scene_b.tx);
        const double power =
            beam::best_beam(cfr, cb, ctx.scene_b.tx.per_element_power_dbm).second;
        cand_power.push_back(power);
        best_power = std::max(best_power, power);
    }
    // Serving set: everything within the margin of the strongest probe; the
    // n_users strongest members become the scheduled users (road order).
    std::vector<std::size_t> served;
    for (double margin = cfg.serving_margin_db;
         static_cast<int>(served.size()) < cfg.n_users; margin *= 1.5) {
        served.clear();
        for (std::size_t c = 0; c < candidates.size(); ++c)
            if (cand_power[c] >= best_power - margin) served.push_back(c);
        if (margin > 1e4) throw std::runtime_error("allocation: not enough served road users");
    }
    std::sort(served.begin(), served.end(), [&](std::size_t a, std::size_t b) {
        if (cand_power[a] != cand_power[b]) return cand_power[a] > cand_power[b];
        return a < b;
    });
    served.resize(static_cast<std::size_t>(cfg.n_users));
    std::sort(served.begin(), served.end());
    for (std::size_t c : served) ctx.users.push_back(candidates[c]);
    std::vector<channel::Cfr> eff_true;
    std::vector<channel::Cfr> eff_pred;
    Rng noise_rng(child_seed(cfg.master_seed, kStagePilotNoise) ^ 0x9E37ULL);
    for (const auto& p : ctx.users) {
        auto cir = channel::trace_paths(ctx.scene_b, p, cfg.ofdm.fc_hz);
        auto feature = wei::extract_link_features(ctx.scene_b, p, cir);
        auto cfr = channel::cir_to_cfr(cir, cfg.ofdm, ctx.scene_b.tx);

        // True mode: exhaustive best beam on the engine CFR.
        const auto [best, power] = beam::best_beam(cfr, cb, ctx.scene_b.tx.per_element_power_dbm);
        (void)power;
        std::vector<cplx> wbest(cb.row(best).begin(), cb.row(best).end());
        eff_true.push_back(effective_cfr(cfr, wbest));

        // Predicted mode: geometric beam choice, pilot-reconstructed channel.
        const int pred = beam::predict_beam(feature, cb, true);
        auto eff = effective_cfr(cfr, cb.row(pred));
        if (cir.paths.empty()) {
            eff_pred.push_back(std::move(eff));  // all zero stays all zero
        } else {
            const auto obs = noisy_pilots(eff, cfg.pilot_snr_db, noise_rng);
            const auto delays = traced_delays(cir, obs.subcarrier_indices.size());
            eff_pred.push_back(predict::reconstruct_cfr_from_pilots(obs, delays, cfg.ofdm));
        }

        ctx.cirs.push_back(std::move(cir));
        ctx.features.push_back(feature);
        ctx.cfrs.push_back(std::move(cfr));
    }

    // Effective channels are single-antenna views that already carry the
    // beamforming gain; the total array transmit power rides in the power
    // argument so P_tx_total matches the full-array received_power convention.
    std::vector<std::vector<cplx>> unit(static_cast<std::size_t>(cfg.n_users),
                                        std::vector<cplx>{cplx(1.0, 0.0)});
    alloc::NoiseConfig noise{cfg.noise_figure_db, -174.0};
    ctx.rates_true = alloc::compute_rates(eff_true, unit, cfg.ofdm, noise,
                                          ctx.scene_b.tx.total_power_dbm());
    ctx.rates_pred = alloc::compute_rates(eff_pred, unit, cfg.ofdm, noise,
                                          ctx.scene_b.tx.total_power_dbm());
    return ctx;
}

inline void write_fairness_csv(const RunConfig& cfg, const std::string& name,
                               const alloc::FairnessReport& rep) {
    CsvWriter csv(cfg.out_dir + "/" + name, config_echo(cfg), "user,throughput");
    for (std::size_t u = 0; u < rep.per_user_throughput.size(); ++u)
        csv.row(static_cast<int>(u) + 1, rep.per_user_throughput[u]);
    csv.row("t_min", rep.t_min);
    csv.row("gap", rep.gap);
    csv.row("variance", rep.variance);
    csv.row("total", rep.total);
}

inline void write_allocation_csv(const RunConfig& cfg, const std::string& name,
                                 const alloc::AllocationMatrix& x) {
    CsvWriter csv(cfg.out_dir + "/" + name, config_echo(cfg), "t,r,owner");
    for (int t = 0; t < x.n_t; ++t)
        for (int r = 0; r < x.n_r; ++r) csv.row(t + 1, r + 1, x.at(t, r) + 1);
}

inline TaskRecord run_task_alloc(const RunConfig& cfg, bool emit) {
    AllocationContext ctx = build_allocation_context(cfg);
    const auto& dt = ctx.rates_true;

    const auto [x_true, tmin_true] = alloc::solve_heuristic(dt);
    const auto rep_true = alloc::evaluate(x_true, dt);
    const auto [x_pred, tmin_pred_nominal] = alloc::solve_heuristic(ctx.rates_pred);
    (void)tmin_pred_nominal;
    const auto rep_pred = alloc::evaluate(x_pred, dt);  // realized on the true channel
    const auto [x_base, tmin_base] = alloc::solve_max_total(dt);
    (void)tmin_base;
    const auto rep_base = alloc::evaluate(x_base, dt);

    TaskRecord rec;
    rec.task_id = 4;
    auto put = [&rec](const std::string& prefix, const alloc::FairnessReport& r) {
        rec.metrics.emplace_back(prefix + "_t_min", r.t_min);
        rec.metrics.emplace_back(prefix + "_gap", r.gap);
        rec.metrics.emplace_back(prefix + "_variance", r.variance);
        rec.metrics.emplace_back(prefix + "_total", r.total);
    };
    put("maxmin_true", rep_true);
    put("maxmin_pred", rep_pred);
    put("maxtotal", rep_base);

    // The exact solver hard-caps at 1e7 states; the flag can only lower that.
    const double leaves = std::pow(static_cast<double>(dt.n_users), dt.n_blocks());
    if (leaves <= std::min(cfg.exact_alloc_limit, 1e7)) {
        const auto [x_exact, tmin_exact] = alloc::solve_exact(dt);
        rec.metrics.emplace_back("exact_t_min", tmin_exact);
        if (emit) {
            write_allocation_csv(cfg, "allocation_exact.csv", x_exact);
            write_fairness_csv(cfg, "fairness_exact.csv", alloc::evaluate(x_exact, dt));
        }
    }

    if (emit) {
        write_allocation_csv(cfg, "allocation_true.csv", x_true);
        write_allocation_csv(cfg, "allocation_pred.csv", x_pred);
        write_fairness_csv(cfg, "fairness_true.csv", rep_true);
        write_fairness_csv(cfg, "fairness_pred.csv", rep_pred);
        write_fairness_csv(cfg, "fairness_baseline.csv", rep_base);
    }
    return rec;
}

inline TaskRecord run_task(const RunConfig& cfg, int task_id) {
    std::filesystem::create_directories(cfg.out_dir);
    if (task_id == 4) return run_task_alloc(cfg, true);
    const scene::Scene sc = acquire_scene(cfg);
    const auto links = build_links(sc, cfg.ofdm);
    switch (task_id) {
        case 1: return run_task_coverage(cfg, sc, links, true);
        case 2: return run_task_csi(cfg, sc, links, true);
        case 3: return run_task_beam(cfg, sc, links, true);
        default: throw std::invalid_argument("run_task: unknown task id " + std::to_string(task_id));
    }
}

// ---- proactive decision (steps 4 and 5) ----

struct BranchStrategy {
    std::string branch;
    Vec3 position;
    int beam = 0;
    double t_min = 0.0;
    alloc::AllocationMatrix allocation;
};

// Evaluates beam + allocation for each candidate next position of user 0 and
// caches the best strategy per branch.
inline std::vector<BranchStrategy> plan_branches(const RunConfig& cfg, AllocationContext& ctx) {
    const auto cb = beam::build_codebook(32, ctx.scene_b.tx.n_elements);
    const Vec3 base = ctx.users.front();
    const struct {
        const char* name;
        Vec3 offset;
    } branches[3] = {{"straight", {10, 0, 0}}, {"left", {0, 10, 0}}, {"right", {0, -10, 0}}};

    std::vector<BranchStrategy> plans;
    for (const auto& br : branches) {
        Vec3 p = base + br.offset;
        p.x = std::clamp(p.x, ctx.scene_b.bounds.lo.x + 1.0, ctx.scene_b.bounds.hi.x - 1.0);
        p.y = std::clamp(p.y, ctx.scene_b.bounds.lo.y + 1.0, ctx.scene_b.bounds.hi.y - 1.0);
        for (int tries = 0; tries < 50; ++tries) {
            bool inside = false;
            for (const auto& s : ctx.scene_b.scatterers)
                if (s.present && s.box.contains(p)) {
                    inside = true;
                    break;
                }
            if (!inside) break;
            p.x += 1.0;
        }
        auto cir = channel::trace_paths(ctx.scene_b, p, cfg.ofdm.fc_hz);
        auto feature = wei::extract_link_features(ctx.scene_b, p, cir);
        auto cfr = channel::cir_to_cfr(cir, cfg.ofdm, ctx.scene_b.tx);
        const int pb = beam::predict_beam(feature, cb, true);
        auto eff = effective_cfr(cfr, cb.row(pb));

        // Rebuild only user 0's rate rows for this branch.
        alloc::RateTensor rates = ctx.rates_true;
        alloc::NoiseConfig noise{cfg.noise_figure_db, -174.0};
        std::vector<channel::Cfr> one{std::move(eff)};
        std::vector<std::vector<cplx>> unit{std::vector<cplx>{cplx(1.0, 0.0)}};
        const auto user0 = alloc::compute_rates(one, unit, cfg.ofdm, noise,
                                                ctx.scene_b.tx.total_power_dbm());
        for (int t = 0; t < rates.n_t; ++t)
            for (int r = 0; r < rates.n_r; ++r) rates.at(0, t, r) = user0.at(0, t, r);

        const auto [x, tmin] = alloc::solve_heuristic(rates);
        plans.push_back({br.name, p, pb, tmin, x});
    }
    return plans;
}

inline RunReport run_loop(const RunConfig& cfg) {
    if (cfg.tasks.empty()) throw std::invalid_argument("run_loop: task list must not be empty");
    for (int t : cfg.tasks)
        if (t < 1 || t > 4)
            throw std::invalid_argument("run_loop: unknown task id " + std::to_string(t));
    std::filesystem::create_directories(cfg.out_dir);

    RunReport report;
    report.config_echo = config_echo(cfg);
    using clock = std::chrono::steady_clock;
    // Module failures surface with the stage label attached.
    auto timed = [&report](const std::string& label, auto&& fn) {
        const auto t0 = clock::now();
        try {
            fn();
        } catch (const std::exception& e) {
            throw std::runtime_error(label + ": " + e.what());
        }
        const auto t1 = clock::now();
        report.stage_ms.emplace_back(
            label, std::chrono::duration<double, std::milli>(t1 - t0).count());
    };

    auto wants = [&cfg](int id) {
        return std::find(cfg.tasks.begin(), cfg.tasks.end(), id) != cfg.tasks.end();
    };

    // Steps 1-2: sensing + knowledge mapping, shared by tasks 1-3.
    scene::Scene sc;
    std::vector<Link> links;
    const bool needs_links = wants(1) || wants(2) || wants(3);
    if (needs_links) {
        timed("sensing", [&] { sc = acquire_scene(cfg); });
        timed("knowledge_mapping", [&] { links = build_links(sc, cfg.ofdm); });
    }

    // Step 3: prediction-driven tasks.
    if (wants(1))
        timed("task1_coverage",
              [&] { report.tasks.push_back(run_task_coverage(cfg, sc, links, true)); });
    if (wants(2))
        timed("task2_csi", [&] { report.tasks.push_back(run_task_csi(cfg, sc, links, true)); });
    if (wants(3))
        timed("task3_beam", [&] { report.tasks.push_back(run_task_beam(cfg, sc, links, true)); });

    // Task 4 plus the proactive loop (steps 4 and 5) on the generalization scene.
    if (wants(4)) {
        timed("task4_alloc", [&] { report.tasks.push_back(run_task_alloc(cfg, true)); });
        if (cfg.proactive) {
            timed("proactive", [&] {
                AllocationContext ctx = build_allocation_context(cfg);
                const auto plans = plan_branches(cfg, ctx);
                Rng pick(child_seed(cfg.master_seed, kStageApply));
                const auto realized = static_cast<std::size_t>(pick.uniform_int(0, 2));
                CsvWriter csv(cfg.out_dir + "/proactive.csv", config_echo(cfg),
                              "branch,beam,t_min,realized");
                for (std::size_t b = 0; b < plans.size(); ++b)
                    csv.row(plans[b].branch, plans[b].beam, plans[b].t_min,
                            b == realized ? 1 : 0);
                TaskRecord rec;
                rec.task_id = 5;
                rec.metrics.emplace_back("realized_branch", static_cast<double>(realized));
                rec.metrics.emplace_back("realized_t_min", plans[realized].t_min);
                report.tasks.push_back(std::move(rec));
            });
        }
    }
    return report;
}

}  // namespace envlink::pipeline
