#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "envlink/scene.hpp"

// Scene file format: UTF-8 JSON, documented in docs/scene_schema.md.
// Lengths in meters, power in dBm, angles in radians. parse(serialize(s)) is
// field-exact (doubles are emitted with shortest round-trip formatting).

namespace envlink::scene {

namespace detail {

using nlohmann::json;

inline json to_json(const Vec3& v) { return json{{"x", v.x}, {"y", v.y}, {"z", v.z}}; }
inline Vec3 vec3_from(const json& j) {
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()};
}

inline Material material_from(const std::string& s) {
    if (s == "concrete") return Material::Concrete;
    if (s == "metal") return Material::Metal;
    if (s == "ground") return Material::Ground;
    throw std::invalid_argument("scene file: unknown material '" + s + "'");
}

inline json to_json(const MobilityClass& m) {
    switch (m.tag) {
        case MobilityClass::Tag::Static: return json{{"tag", "static"}};
        case MobilityClass::Tag::Dynamic:
            return json{{"tag", "dynamic"}, {"velocity", to_json(m.velocity)}};
        case MobilityClass::Tag::Random:
            return json{{"tag", "random"}, {"toggle_probability", m.toggle_probability}};
    }
    return {};
}

inline MobilityClass mobility_from(const json& j) {
    const std::string tag = j.at("tag").get<std::string>();
    if (tag == "static") return MobilityClass::statics();
    if (tag == "dynamic") return MobilityClass::dynamic(vec3_from(j.at("velocity")));
    if (tag == "random") return MobilityClass::random(j.at("toggle_probability").get<double>());
    throw std::invalid_argument("scene file: unknown mobility tag '" + tag + "'");
}

}  // namespace detail

inline std::string serialize(const Scene& sc) {
    using nlohmann::json;
    json j;
    j["bounds"] = {{"min", detail::to_json(sc.bounds.lo)}, {"max", detail::to_json(sc.bounds.hi)}};
    j["seed"] = sc.seed;
    j["tx"] = {{"position", detail::to_json(sc.tx.position)},
               {"n_elements", sc.tx.n_elements},
               {"element_spacing_wavelengths", sc.tx.element_spacing_wavelengths},
               {"boresight_azimuth", sc.tx.boresight_azimuth},
               {"per_element_power_dbm", sc.tx.per_element_power_dbm}};
    json scatterers = json::array();
    for (const auto& s : sc.scatterers) {
        scatterers.push_back({{"id", s.id},
                              {"box_min", detail::to_json(s.box.lo)},
                              {"box_max", detail::to_json(s.box.hi)},
                              {"material", material_name(s.material)},
                              {"mobility", detail::to_json(s.mobility)},
                              {"group_id", s.group_id},
                              {"surface_count", s.surface_count},
                              {"present", s.present}});
    }
    j["scatterers"] = std::move(scatterers);
    json rx = json::array();
    for (const auto& p : sc.rx_points) rx.push_back(detail::to_json(p));
    j["rx_points"] = std::move(rx);
    return j.dump(2) + "\n";
}

inline Scene parse(const std::string& text) {
    using nlohmann::json;
    const json j = json::parse(text);
    Scene sc;
    sc.bounds = {detail::vec3_from(j.at("bounds").at("min")),
                 detail::vec3_from(j.at("bounds").at("max"))};
    sc.seed = j.at("seed").get<std::uint64_t>();
    const json& tx = j.at("tx");
    sc.tx = TxSite{detail::vec3_from(tx.at("position")), tx.at("n_elements").get<int>(),
                   tx.at("element_spacing_wavelengths").get<double>(),
                   tx.at("boresight_azimuth").get<double>(),
                   tx.at("per_element_power_dbm").get<double>()};
    for (const auto& s : j.at("scatterers")) {
        sc.scatterers.push_back({s.at("id").get<int>(),
                                 {detail::vec3_from(s.at("box_min")), detail::vec3_from(s.at("box_max"))},
                                 detail::material_from(s.at("material").get<std::string>()),
                                 detail::mobility_from(s.at("mobility")),
                                 s.at("group_id").get<int>(),
                                 s.at("surface_count").get<int>(),
                                 s.at("present").get<bool>()});
    }
    for (const auto& p : j.at("rx_points")) sc.rx_points.push_back(detail::vec3_from(p));
    return sc;
}

inline void save_scene(const Scene& sc, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open scene file for writing: " + path);
    out << serialize(sc);
}

inline Scene load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open scene file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace envlink::scene
