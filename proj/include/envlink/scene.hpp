#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "envlink/core.hpp"
#include "envlink/geometry.hpp"
#include "envlink/rng.hpp"

namespace envlink::scene {

enum class Material { Concrete, Metal, Ground };

// Fixed real reflection coefficients; every reflection also flips the phase by pi.
inline double reflection_amplitude(Material m) {
    switch (m) {
        case Material::Concrete: return 0.6;
        case Material::Metal: return 0.9;
        case Material::Ground: return 0.7;
    }
    return 0.0;
}

inline const char* material_name(Material m) {
    switch (m) {
        case Material::Concrete: return "concrete";
        case Material::Metal: return "metal";
        case Material::Ground: return "ground";
    }
    return "?";
}

struct MobilityClass {
    enum class Tag { Static, Dynamic, Random };

    Tag tag = Tag::Static;
    Vec3 velocity;                   // m/s, Dynamic only
    double toggle_probability = 0.0; // per advance step, Random only

    static MobilityClass statics() { return {}; }
    static MobilityClass dynamic(const Vec3& v) { return {Tag::Dynamic, v, 0.0}; }
    static MobilityClass random(double p) { return {Tag::Random, {}, p}; }

    friend bool operator==(const MobilityClass&, const MobilityClass&) = default;
};

struct Scatterer {
    int id = 0;
    Aabb box;
    Material material = Material::Concrete;
    MobilityClass mobility;
    int group_id = 0;       // building-complex index
    int surface_count = 6;  // cubes expose six surfaces
    bool present = true;    // Random-class scatterers may be toggled off

    friend bool operator==(const Scatterer&, const Scatterer&) = default;
};

struct TxSite {
    Vec3 position;
    int n_elements = 128;
    double element_spacing_wavelengths = 0.5;
    double boresight_azimuth = 0.0;  // radians; 0 points the broadside at +y
    double per_element_power_dbm = -8.0;

    double total_power_dbm() const {
        return per_element_power_dbm + linear_to_db(static_cast<double>(n_elements));
    }

    friend bool operator==(const TxSite&, const TxSite&) = default;
};

struct Scene {
    Aabb bounds;
    std::vector<Scatterer> scatterers;
    TxSite tx;
    std::vector<Vec3> rx_points;
    std::uint64_t seed = 0;

    friend bool operator==(const Scene&, const Scene&) = default;
};

// Azimuth of `target` as seen from the array, measured from the broadside
// direction in the horizontal plane; positive toward the array's +x end.
inline double azimuth_from(const TxSite& tx, const Vec3& target) {
    const double dx = target.x - tx.position.x;
    const double dy = target.y - tx.position.y;
    const double c = std::cos(tx.boresight_azimuth);
    const double s = std::sin(tx.boresight_azimuth);
    const double along_axis = dx * c - dy * s;
    const double along_boresight = dx * s + dy * c;
    return std::atan2(along_axis, along_boresight);
}

struct SceneGenConfig {
    double side_m = 200.0;
    double max_height_m = 80.0;

    int building_groups = 4;
    int buildings_per_group = 4;
    double building_footprint_min_m = 15.0;
    double building_footprint_max_m = 40.0;
    double building_height_min_m = 10.0;
    double building_height_max_m = 40.0;

    // Road along the x axis through the origin, four lanes.
    double road_half_width_m = 10.0;
    int vehicle_count_min = 6;
    int vehicle_count_max = 12;
    double vehicle_speed_max_mps = 15.0;

    int random_scatterer_count = 0;  // taxonomy exercise only; off by default
    double random_toggle_probability = 0.2;

    double rx_grid_gap_m = 2.0;
    double rx_height_m = 2.0;

    Vec3 tx_position{-57.4, 27.0, 19.0};
    int tx_elements = 128;
    double tx_per_element_power_dbm = -8.0;

    int placement_retries = 300;

    friend bool operator==(const SceneGenConfig&, const SceneGenConfig&) = default;
};

namespace detail {

inline bool boxes_overlap(const Aabb& a, const Aabb& b) {
    return a.lo.x <= b.hi.x && a.hi.x >= b.lo.x && a.lo.y <= b.hi.y && a.hi.y >= b.lo.y &&
           a.lo.z <= b.hi.z && a.hi.z >= b.lo.z;
}

inline Aabb vehicle_box(const Vec3& center_ground) {
    return {{center_ground.x - 2.25, center_ground.y - 0.9, 0.0},
            {center_ground.x + 2.25, center_ground.y + 0.9, 1.5}};
}

}  // namespace detail

// Deterministic cube-city generator: four quadrant building groups around a
// straight road, vehicles on the y>0 side, Rx probes on a uniform grid.
// Pure function of (config, seed).
inline Scene generate_scene(const SceneGenConfig& cfg, std::uint64_t seed) {
    if (cfg.side_m <= 0 || cfg.rx_grid_gap_m <= 0)
        throw std::invalid_argument("generate_scene: side and grid gap must be positive");

    Rng rng(child_seed(seed, 0x5CE7E));
    Scene sc;
    const double half = cfg.side_m / 2.0;
    sc.bounds = {{-half, -half, 0.0}, {half, half, cfg.max_height_m}};
    sc.seed = seed;
    sc.tx = TxSite{cfg.tx_position, cfg.tx_elements, 0.5, 0.0, cfg.tx_per_element_power_dbm};
    if (!sc.bounds.contains(cfg.tx_position))
        throw std::invalid_argument("generate_scene: tx outside scene bounds");

    int next_id = 0;

    // Building groups fill the four off-road quadrants with a margin.
    const double margin = 5.0;
    const double road_edge = cfg.road_half_width_m + margin;
    struct Zone {
        double x0, x1, y0, y1;
    };
    std::vector<Zone> zones = {
        {-half + margin, -margin, road_edge, half - margin},
        {margin, half - margin, road_edge, half - margin},
        {-half + margin, -margin, -half + margin, -road_edge},
        {margin, half - margin, -half + margin, -road_edge},
    };

    for (int g = 0; g < cfg.building_groups; ++g) {
        const Zone& zone = zones[static_cast<std::size_t>(g) % zones.size()];
        for (int b = 0; b < cfg.buildings_per_group; ++b) {
            bool placed = false;
            for (int attempt = 0; attempt < cfg.placement_retries && !placed; ++attempt) {
                const double wx = rng.uniform(cfg.building_footprint_min_m, cfg.building_footprint_max_m);
                const double wy = rng.uniform(cfg.building_footprint_min_m, cfg.building_footprint_max_m);
                const double h = rng.uniform(cfg.building_height_min_m, cfg.building_height_max_m);
                if (zone.x1 - zone.x0 < wx || zone.y1 - zone.y0 < wy) continue;
                const double cx = rng.uniform(zone.x0 + wx / 2, zone.x1 - wx / 2);
                const double cy = rng.uniform(zone.y0 + wy / 2, zone.y1 - wy / 2);
                Aabb box{{cx - wx / 2, cy - wy / 2, 0.0}, {cx + wx / 2, cy + wy / 2, h}};
                if (box.contains(sc.tx.position)) continue;
                bool clash = false;
                for (const auto& other : sc.scatterers)
                    if (detail::boxes_overlap(box, other.box)) {
                        clash = true;
                        break;
                    }
                if (clash) continue;
                sc.scatterers.push_back(
                    {next_id++, box, Material::Concrete, MobilityClass::statics(), g, 6, true});
                placed = true;
            }
            if (!placed)
                throw std::runtime_error("generate_scene: placement failed for building in group " +
                                         std::to_string(g));
        }
    }

    // Vehicles on one side of the road (y > 0 lanes), moving along x.
    const int n_vehicles =
        static_cast<int>(rng.uniform_int(cfg.vehicle_count_min, cfg.vehicle_count_max));
    const int vehicle_group = cfg.building_groups;
    for (int v = 0; v < n_vehicles; ++v) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.placement_retries && !placed; ++attempt) {
            const double cx = rng.uniform(-half + margin, half - margin);
            const double cy = rng.uniform(1.5, cfg.road_half_width_m - 1.5);
            Aabb box = detail::vehicle_box({cx, cy, 0.0});
            bool clash = false;
            for (const auto& other : sc.scatterers)
                if (detail::boxes_overlap(box, other.box)) {
                    clash = true;
                    break;
                }
            if (clash) continue;
            const double speed = rng.uniform(0.0, cfg.vehicle_speed_max_mps);
            const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
            sc.scatterers.push_back({next_id++, box, Material::Metal,
                                     MobilityClass::dynamic({dir * speed, 0.0, 0.0}),
                                     vehicle_group, 6, true});
            placed = true;
        }
        if (!placed) throw std::runtime_error("generate_scene: placement failed for vehicle");
    }

    // Optional Random-class clutter (birth/death scatterers).
    for (int r = 0; r < cfg.random_scatterer_count; ++r) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.placement_retries && !placed; ++attempt) {
            const double cx = rng.uniform(-half + margin, half - margin);
            const double cy = rng.uniform(-half + margin, half - margin);
            Aabb box{{cx - 0.5, cy - 0.5, 0.0}, {cx + 0.5, cy + 0.5, 1.0}};
            if (box.contains(sc.tx.position)) continue;
            bool clash = false;
            for (const auto& other : sc.scatterers)
                if (detail::boxes_overlap(box, other.box)) {
                    clash = true;
                    break;
                }
            if (clash) continue;
            sc.scatterers.push_back({next_id++, box, Material::Concrete,
                                     MobilityClass::random(cfg.random_toggle_probability),
                                     vehicle_group + 1, 6, true});
            placed = true;
        }
        if (!placed) throw std::runtime_error("generate_scene: placement failed for random scatterer");
    }

    // Rx probe grid; points swallowed by a box are dropped so the scene
    // invariant (no scatterer contains an Rx) holds by construction.
    const int n_steps = static_cast<int>(std::floor(cfg.side_m / cfg.rx_grid_gap_m + 1e-9));
    for (int iy = 0; iy <= n_steps; ++iy) {
        for (int ix = 0; ix <= n_steps; ++ix) {
            Vec3 p{-half + ix * cfg.rx_grid_gap_m, -half + iy * cfg.rx_grid_gap_m, cfg.rx_height_m};
            bool inside = false;
            for (const auto& s : sc.scatterers)
                if (s.present && s.box.contains(p)) {
                    inside = true;
                    break;
                }
            if (!inside) sc.rx_points.push_back(p);
        }
    }
    return sc;
}

// Advances the scene clock: Static boxes stay put, Dynamic boxes translate by
// velocity*dt (clamped to bounds), Random boxes toggle presence. dt == 0 is a
// strict identity. Clamp events are reported through `log` when provided.
inline Scene advance_time(const Scene& in, double dt, Rng& rng,
                          std::vector<std::string>* log = nullptr) {
    if (dt < 0) throw std::invalid_argument("advance_time: dt must be >= 0");
    if (dt == 0) return in;

    Scene out = in;
    for (auto& s : out.scatterers) {
        switch (s.mobility.tag) {
            case MobilityClass::Tag::Static: break;
            case MobilityClass::Tag::Dynamic: {
                Vec3 shift = s.mobility.velocity * dt;
                Aabb moved{s.box.lo + shift, s.box.hi + shift};
                Vec3 correction{};
                if (moved.lo.x < out.bounds.lo.x) correction.x = out.bounds.lo.x - moved.lo.x;
                if (moved.hi.x > out.bounds.hi.x) correction.x = out.bounds.hi.x - moved.hi.x;
                if (moved.lo.y < out.bounds.lo.y) correction.y = out.bounds.lo.y - moved.lo.y;
                if (moved.hi.y > out.bounds.hi.y) correction.y = out.bounds.hi.y - moved.hi.y;
                if (moved.lo.z < out.bounds.lo.z) correction.z = out.bounds.lo.z - moved.lo.z;
                if (moved.hi.z > out.bounds.hi.z) correction.z = out.bounds.hi.z - moved.hi.z;
                if ((correction.x != 0 || correction.y != 0 || correction.z != 0) && log)
                    log->push_back("scatterer " + std::to_string(s.id) + " clamped to bounds");
                s.box = {moved.lo + correction, moved.hi + correction};
                break;
            }
            case MobilityClass::Tag::Random:
                if (rng.uniform() < s.mobility.toggle_probability) s.present = !s.present;
                break;
        }
    }
    return out;
}

// Invariant check; violations are data, not errors.
inline std::vector<std::string> validate_scene(const Scene& sc) {
    std::vector<std::string> out;
    if (!(finite(sc.bounds.lo) && finite(sc.bounds.hi)))
        out.push_back("scene bounds not finite");
    for (const auto& s : sc.scatterers) {
        const std::string tag = "scatterer " + std::to_string(s.id);
        if (!(s.box.lo.x < s.box.hi.x && s.box.lo.y < s.box.hi.y && s.box.lo.z < s.box.hi.z))
            out.push_back(tag + ": box_min not componentwise below box_max");
        else {
            if (!(sc.bounds.contains(s.box.lo) && sc.bounds.contains(s.box.hi)))
                out.push_back(tag + ": box outside scene bounds");
            if (s.present && s.box.contains(sc.tx.position))
                out.push_back(tag + ": contains the tx site");
        }
        if (s.surface_count != 6) out.push_back(tag + ": surface_count must be 6 for cubes");
        const double refl = reflection_amplitude(s.material);
        if (refl < 0.0 || refl > 1.0) out.push_back(tag + ": reflection amplitude outside [0,1]");
        if (s.mobility.toggle_probability < 0.0 || s.mobility.toggle_probability > 1.0)
            out.push_back(tag + ": toggle probability outside [0,1]");
    }
    for (std::size_t i = 0; i < sc.rx_points.size(); ++i) {
        const Vec3& p = sc.rx_points[i];
        const std::string tag = "rx point " + std::to_string(i);
        if (!finite(p)) {
            out.push_back(tag + ": not finite");
            continue;
        }
        if (!sc.bounds.contains(p)) out.push_back(tag + ": outside scene bounds");
        if (p.z <= 0) out.push_back(tag + ": height must be positive");
        for (const auto& s : sc.scatterers)
            if (s.present && s.box.contains(p))
                out.push_back(tag + ": inside scatterer " + std::to_string(s.id));
    }
    if (sc.tx.n_elements < 1) out.push_back("tx: n_elements must be >= 1");
    if (sc.tx.element_spacing_wavelengths <= 0) out.push_back("tx: element spacing must be > 0");
    return out;
}

}  // namespace envlink::scene
