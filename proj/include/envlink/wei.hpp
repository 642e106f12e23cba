#pragma once

#include <array>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "envlink/channel.hpp"
#include "envlink/scene.hpp"

// Wireless environmental information (WEI): quantified physical properties of
// scene objects that reduce channel uncertainty. This module covers the data
// model (classification + quantity accounting) and the geometric per-link
// "sensing" features consumed by the predictors.

namespace envlink::wei {

enum class WeiCategory { Static, Dynamic, Random };

enum class WeiKind { Position, Size, Material, Velocity, BlockageFlag, ReflectorBearing };

struct WeiItem {
    WeiCategory category = WeiCategory::Static;
    WeiKind kind = WeiKind::Position;
    int dimension_d = 0;
    double quantity_theta = 0.0;
    std::vector<double> values;
};

// xi = d * theta.
inline double compute_wei_quantity(const WeiItem& item) {
    if (item.dimension_d < 0 || item.quantity_theta < 0)
        throw std::invalid_argument("wei item: dimension and quantity must be non-negative");
    if (static_cast<int>(item.values.size()) != item.dimension_d)
        throw std::invalid_argument("wei item: values length != dimension");
    return item.dimension_d * item.quantity_theta;
}

inline double total_quantity(const std::vector<WeiItem>& items) {
    double sum = 0.0;
    for (const auto& it : items) sum += compute_wei_quantity(it);
    return sum;
}

// Aggregate bookkeeping for a building complex of M buildings, N scatterers
// each, K surfaces each: total = M*N*K*sum(xi_i).
struct ComplexAccount {
    int buildings_m = 0;
    int scatterers_n = 0;
    int surfaces_k = 0;
    std::vector<double> xi_per_surface;
};

inline double account_complex(const ComplexAccount& a) {
    if (a.buildings_m < 0 || a.scatterers_n < 0 || a.surfaces_k < 0)
        throw std::invalid_argument("complex account: counts must be non-negative");
    double sum = 0.0;
    for (double xi : a.xi_per_surface) sum += xi;
    return static_cast<double>(a.buildings_m) * a.scatterers_n * a.surfaces_k * sum;
}

inline WeiCategory classify(const scene::Scatterer& s) {
    switch (s.mobility.tag) {
        case scene::MobilityClass::Tag::Static: return WeiCategory::Static;
        case scene::MobilityClass::Tag::Dynamic: return WeiCategory::Dynamic;
        case scene::MobilityClass::Tag::Random: return WeiCategory::Random;
    }
    return WeiCategory::Static;
}

// Recorded items for one scatterer; theta is fixed at 1 per item
// (measurement-precision scaling is kept as metadata, unused downstream).
inline std::vector<WeiItem> scatterer_items(const scene::Scatterer& s) {
    const WeiCategory cat = classify(s);
    const Vec3 c = s.box.center();
    const Vec3 sz = s.box.size();
    std::vector<WeiItem> items;
    items.push_back({cat, WeiKind::Position, 3, 1.0, {c.x, c.y, c.z}});
    items.push_back({cat, WeiKind::Size, 3, 1.0, {sz.x, sz.y, sz.z}});
    items.push_back({cat, WeiKind::Material, 1, 1.0, {scene::reflection_amplitude(s.material)}});
    if (s.mobility.tag == scene::MobilityClass::Tag::Dynamic) {
        const Vec3& v = s.mobility.velocity;
        items.push_back({cat, WeiKind::Velocity, 3, 1.0, {v.x, v.y, v.z}});
    }
    return items;
}

// Per-link geometric feature vector; the artifact's stand-in for image-based
// sensing. Column order is fixed and mirrored by csv_header().
struct WeiFeatureVector {
    double d2d = 0.0;
    double d3d = 0.0;
    int los_blocked = 0;
    int n_first_order_reflectors = 0;
    double nearest_blocker_height_margin = 0.0;  // blocker top minus ray height at crossing
    double strongest_reflector_bearing = 0.0;    // azimuth from tx; 0 when no wall reflector
    int dynamic_blocker_flag = 0;
    double rx_bearing = 0.0;

    static constexpr int kDims = 8;

    std::array<double, kDims> as_array() const {
        return {d2d,
                d3d,
                static_cast<double>(los_blocked),
                static_cast<double>(n_first_order_reflectors),
                nearest_blocker_height_margin,
                strongest_reflector_bearing,
                static_cast<double>(dynamic_blocker_flag),
                rx_bearing};
    }

    static const char* csv_header() {
        return "d2d,d3d,los_blocked,n_first_order_reflectors,nearest_blocker_height_margin,"
               "strongest_reflector_bearing,dynamic_blocker_flag,rx_bearing";
    }
};

// Extracts the link features from a traced path set. The paths must belong to
// this (scene, rx) pair; mismatched endpoints are rejected.
inline WeiFeatureVector extract_link_features(const scene::Scene& sc, const Vec3& rx,
                                              const channel::Cir& cir) {
    if (!(cir.tx == sc.tx.position) || !(cir.rx == rx))
        throw std::invalid_argument("extract_link_features: cir does not match this scene/rx link");

    WeiFeatureVector f;
    const Vec3 tx = sc.tx.position;
    f.d2d = horizontal_distance(tx, rx);
    f.d3d = distance(tx, rx);
    f.rx_bearing = scene::azimuth_from(sc.tx, rx);
    f.los_blocked = cir.direct() ? 0 : 1;

    double best_gain = -1.0;
    for (const auto& p : cir.paths) {
        if (p.kind != channel::PathKind::WallReflection) continue;
        ++f.n_first_order_reflectors;
        const double g = std::abs(p.gain);
        if (g > best_gain) {
            best_gain = g;
            f.strongest_reflector_bearing = p.aod_azimuth;
        }
    }

    if (f.los_blocked) {
        // Earliest box hit along the direct segment decides the blockage features.
        double best_t = std::numeric_limits<double>::infinity();
        const scene::Scatterer* blocker = nullptr;
        for (const auto& s : sc.scatterers) {
            if (!s.present) continue;
            const auto t = segment_box_entry(tx, rx, s.box);
            if (t && *t < best_t) {
                best_t = *t;
                blocker = &s;
            }
        }
        if (blocker) {
            const Vec3 crossing = tx + (rx - tx) * best_t;
            f.nearest_blocker_height_margin = blocker->box.hi.z - crossing.z;
            f.dynamic_blocker_flag =
                blocker->mobility.tag == scene::MobilityClass::Tag::Dynamic ? 1 : 0;
        }
    }
    return f;
}

// Denoising pass: drops sub-resolution clutter (every side below 0.5 m).
// Idempotent.
inline scene::Scene preprocess(const scene::Scene& in) {
    scene::Scene out = in;
    out.scatterers.clear();
    for (const auto& s : in.scatterers) {
        const Vec3 sz = s.box.size();
        const bool clutter = sz.x < 0.5 && sz.y < 0.5 && sz.z < 0.5;
        if (!clutter) out.scatterers.push_back(s);
    }
    return out;
}

}  // namespace envlink::wei
