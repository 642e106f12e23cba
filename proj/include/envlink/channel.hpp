#pragma once

#include <algorithm>
#include <complex>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "envlink/core.hpp"
#include "envlink/geometry.hpp"
#include "envlink/rng.hpp"
#include "envlink/scene.hpp"

namespace envlink::channel {

struct OfdmConfig {
    double fc_hz = 6.775e9;
    double bandwidth_hz = 8.28e6;
    double scs_hz = 120e3;
    int n_symbols = 3;

    int n_subcarriers() const { return static_cast<int>(bandwidth_hz / scs_hz); }

    // Subcarriers are centered in the band: f_k = fc - bw/2 + (k + 0.5)*scs.
    double subcarrier_freq(int k) const {
        return fc_hz - bandwidth_hz / 2.0 + (k + 0.5) * scs_hz;
    }
    double symbol_time(int s) const { return s / scs_hz; }
    double wavelength() const { return kSpeedOfLight / fc_hz; }
};

enum class PathKind { Direct, GroundReflection, WallReflection };

struct PathComponent {
    PathKind kind = PathKind::Direct;
    int scatterer_id = -1;  // WallReflection only
    int face_id = -1;       // 0: x=lo, 1: x=hi, 2: y=lo, 3: y=hi
    double delay = 0.0;     // seconds
    cplx gain;              // linear amplitude with propagation + reflection phase
    double aod_azimuth = 0.0;
    double doppler_hz = 0.0;
};

// Traced multipath set for one Tx-Rx link. Endpoints are recorded so that
// downstream consumers can detect a scene/path mismatch.
struct Cir {
    Vec3 tx;
    Vec3 rx;
    std::vector<PathComponent> paths;

    const PathComponent* direct() const {
        for (const auto& p : paths)
            if (p.kind == PathKind::Direct) return &p;
        return nullptr;
    }
};

// Complex frequency response over subcarrier x symbol x tx-element.
struct Cfr {
    int n_subcarriers = 0;
    int n_symbols = 0;
    int n_tx = 0;
    std::vector<cplx> h;

    Cfr() = default;
    Cfr(int k, int s, int n) : n_subcarriers(k), n_symbols(s), n_tx(n), h(static_cast<std::size_t>(k) * s * n) {}

    cplx& at(int k, int s, int n) {
        return h[(static_cast<std::size_t>(k) * n_symbols + s) * n_tx + n];
    }
    const cplx& at(int k, int s, int n) const {
        return h[(static_cast<std::size_t>(k) * n_symbols + s) * n_tx + n];
    }
};

// Free-space amplitude lambda/(4*pi*d) with propagation phase -2*pi*d/lambda,
// times (-reflection_amplitude) per reflection event.
inline cplx path_gain(double path_length_m, double fc_hz,
                      std::optional<scene::Material> reflection = std::nullopt) {
    if (!(path_length_m > 0)) throw std::invalid_argument("path_gain: length must be positive");
    const double lambda = kSpeedOfLight / fc_hz;
    const double amp = lambda / (4.0 * kPi * path_length_m);
    const double phase = -2.0 * kPi * path_length_m / lambda;
    cplx g = std::polar(amp, phase);
    if (reflection) g *= -scene::reflection_amplitude(*reflection);
    return g;
}

inline double path_loss_db(const cplx& gain) { return -20.0 * std::log10(std::abs(gain)); }

namespace detail {

inline bool blocked(const scene::Scene& sc, const Vec3& a, const Vec3& b, int skip_id) {
    for (const auto& s : sc.scatterers) {
        if (!s.present || s.id == skip_id) continue;
        if (segment_intersects_box(a, b, s.box)) return true;
    }
    return false;
}

}  // namespace detail

// Image-method tracer: direct ray, ground bounce via the Tx image in z=0, and
// one bounce per unobstructed vertical scatterer face. First order only; deep
// shadow points can legitimately come back with an empty path list.
// Path order is deterministic: Direct, GroundReflection, then WallReflection
// sorted by (scatterer_id, face_id).
inline Cir trace_paths(const scene::Scene& sc, const Vec3& rx, double fc_hz = 6.775e9) {
    for (const auto& s : sc.scatterers)
        if (s.present && s.box.contains(rx))
            throw std::invalid_argument("trace_paths: rx inside scatterer " + std::to_string(s.id));

    Cir cir;
    cir.tx = sc.tx.position;
    cir.rx = rx;
    const Vec3 tx = sc.tx.position;

    if (!detail::blocked(sc, tx, rx, -1)) {
        const double len = distance(tx, rx);
        cir.paths.push_back({PathKind::Direct, -1, -1, len / kSpeedOfLight,
                             path_gain(len, fc_hz), scene::azimuth_from(sc.tx, rx), 0.0});
    }

    // Ground bounce: mirror the Tx through z=0 and find the specular point.
    if (tx.z > 0 && rx.z > 0) {
        const Vec3 tx_img{tx.x, tx.y, -tx.z};
        const double t = tx.z / (tx.z + rx.z);
        Vec3 ground_pt = tx_img + (rx - tx_img) * t;
        ground_pt.z = 0.0;  // pin the plane coordinate against roundoff
        if (sc.bounds.contains(ground_pt) && !detail::blocked(sc, tx, ground_pt, -1) &&
            !detail::blocked(sc, ground_pt, rx, -1)) {
            const double len = distance(tx_img, rx);
            cir.paths.push_back({PathKind::GroundReflection, -1, -1, len / kSpeedOfLight,
                                 path_gain(len, fc_hz, scene::Material::Ground),
                                 scene::azimuth_from(sc.tx, ground_pt), 0.0});
        }
    }

    // Single wall bounces via the image method on each vertical face.
    std::vector<PathComponent> walls;
    for (const auto& s : sc.scatterers) {
        if (!s.present) continue;
        // face planes: {coordinate axis, plane value, required side sign}
        struct Face {
            int axis;       // 0=x, 1=y
            double plane;
            double side;    // reflection happens on side*coord < side*plane
        };
        const Face faces[4] = {{0, s.box.lo.x, +1.0},
                               {0, s.box.hi.x, -1.0},
                               {1, s.box.lo.y, +1.0},
                               {1, s.box.hi.y, -1.0}};
        for (int f = 0; f < 4; ++f) {
            const Face& face = faces[f];
            const double txc = face.axis == 0 ? tx.x : tx.y;
            const double rxc = face.axis == 0 ? rx.x : rx.y;
            // Both endpoints strictly on the reflective (outer) side.
            if (!(face.side * (face.plane - txc) > 0 && face.side * (face.plane - rxc) > 0))
                continue;
            Vec3 tx_img = tx;
            if (face.axis == 0)
                tx_img.x = 2 * face.plane - tx.x;
            else
                tx_img.y = 2 * face.plane - tx.y;
            const double denom = (face.axis == 0 ? rx.x - tx_img.x : rx.y - tx_img.y);
            if (denom == 0) continue;
            const double t = (face.plane - (face.axis == 0 ? tx_img.x : tx_img.y)) / denom;
            if (t <= 0 || t >= 1) continue;
            Vec3 p = tx_img + (rx - tx_img) * t;
            (face.axis == 0 ? p.x : p.y) = face.plane;  // pin against roundoff
            const bool on_face = face.axis == 0
                                     ? (p.y >= s.box.lo.y && p.y <= s.box.hi.y)
                                     : (p.x >= s.box.lo.x && p.x <= s.box.hi.x);
            if (!on_face || p.z < s.box.lo.z || p.z > s.box.hi.z) continue;
            if (detail::blocked(sc, tx, p, s.id) || detail::blocked(sc, p, rx, s.id)) continue;
            const double len = distance(tx_img, rx);
            walls.push_back({PathKind::WallReflection, s.id, f, len / kSpeedOfLight,
                             path_gain(len, fc_hz, s.material), scene::azimuth_from(sc.tx, p),
                             0.0});
        }
    }
    std::sort(walls.begin(), walls.end(), [](const PathComponent& a, const PathComponent& b) {
        return std::pair(a.scatterer_id, a.face_id) < std::pair(b.scatterer_id, b.face_id);
    });
    cir.paths.insert(cir.paths.end(), walls.begin(), walls.end());
    return cir;
}

// CFR synthesis over the OFDM grid and the half-wavelength linear array:
//   h[k,s,n] = sum_p g_p * exp(-j2pi f_k tau_p) * exp(j2pi nu_p t_s)
//                  * exp(j2pi spacing n sin(aod_p))
inline Cfr cir_to_cfr(const Cir& cir, const OfdmConfig& ofdm, const scene::TxSite& array) {
    const int nk = ofdm.n_subcarriers();
    const int ns = ofdm.n_symbols;
    const int nn = array.n_elements;
    Cfr cfr(nk, ns, nn);
    for (const auto& p : cir.paths) {
        // Geometric phase ladders along each axis avoid per-entry exp calls.
        const cplx f0 = std::polar(1.0, -2.0 * kPi * ofdm.subcarrier_freq(0) * p.delay);
        const cplx fstep = std::polar(1.0, -2.0 * kPi * ofdm.scs_hz * p.delay);
        const cplx sstep = std::polar(1.0, 2.0 * kPi * p.doppler_hz / ofdm.scs_hz);
        const cplx nstep =
            std::polar(1.0, 2.0 * kPi * array.element_spacing_wavelengths * std::sin(p.aod_azimuth));
        cplx fk = p.gain * f0;
        for (int k = 0; k < nk; ++k) {
            cplx fs = fk;
            for (int s = 0; s < ns; ++s) {
                cplx fn = fs;
                for (int n = 0; n < nn; ++n) {
                    cfr.at(k, s, n) += fn;
                    fn *= nstep;
                }
                fs *= sstep;
            }
            fk *= fstep;
        }
    }
    return cfr;
}

// Urban-macro empirical baseline with distinct LoS/NLoS formulas. Shadowing is
// log-normal (4 dB LoS / 6 dB NLoS) and only drawn when a generator is given.
inline double stat_path_loss(double d2d, double d3d, double fc_ghz, double h_ut_m, bool los,
                             Rng* shadow_rng = nullptr) {
    (void)d2d;
    if (!(d3d >= 1.0)) throw std::invalid_argument("stat_path_loss: d3d must be >= 1 m");
    const double pl_los = 28.0 + 22.0 * std::log10(d3d) + 20.0 * std::log10(fc_ghz);
    double pl = pl_los;
    if (!los) {
        const double pl_nlos =
            13.54 + 39.08 * std::log10(d3d) + 20.0 * std::log10(fc_ghz) - 0.6 * (h_ut_m - 1.5);
        pl = std::max(pl_los, pl_nlos);
    }
    if (shadow_rng) pl += shadow_rng->normal(0.0, los ? 4.0 : 6.0);
    return pl;
}

// Wideband received power under a unit-norm beamforming vector:
//   P_rx = P_tx_total + 10 log10( mean_{k,s} |sum_n w_n^* h[k,s,n]|^2 )
// floored at -300 dBm for an all-zero response.
inline double received_power(const Cfr& cfr, std::span<const cplx> weights,
                             double per_element_power_dbm) {
    if (static_cast<int>(weights.size()) != cfr.n_tx)
        throw std::invalid_argument("received_power: weight length != n_tx");
    double wnorm = 0.0;
    for (const auto& w : weights) wnorm += std::norm(w);
    if (std::abs(wnorm - 1.0) > 1e-9)
        throw std::invalid_argument("received_power: weights must be unit-norm");

    double acc = 0.0;
    for (int k = 0; k < cfr.n_subcarriers; ++k)
        for (int s = 0; s < cfr.n_symbols; ++s) {
            cplx sum = 0.0;
            for (int n = 0; n < cfr.n_tx; ++n) sum += std::conj(weights[n]) * cfr.at(k, s, n);
            acc += std::norm(sum);
        }
    const double mean = acc / (static_cast<double>(cfr.n_subcarriers) * cfr.n_symbols);
    const double tx_total =
        per_element_power_dbm + linear_to_db(static_cast<double>(cfr.n_tx));
    if (mean <= 0.0) return -300.0;
    return std::max(tx_total + linear_to_db(mean), -300.0);
}

// Wideband single-element path loss for coverage maps; empty responses cap at 300 dB.
inline double wideband_path_loss_db(const Cir& cir, const OfdmConfig& ofdm) {
    const int nk = ofdm.n_subcarriers();
    double acc = 0.0;
    for (int k = 0; k < nk; ++k) {
        cplx h = 0.0;
        for (const auto& p : cir.paths)
            h += p.gain * std::polar(1.0, -2.0 * kPi * ofdm.subcarrier_freq(k) * p.delay);
        acc += std::norm(h);
    }
    const double mean = acc / nk;
    if (mean < 1e-30) return 300.0;
    return std::min(-linear_to_db(mean), 300.0);
}

}  // namespace envlink::channel
