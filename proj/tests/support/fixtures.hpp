#pragma once

#include <string>
#include <vector>

#include "caslayout/scene.hpp"

namespace fixtures {

using namespace caslayout;
using scene::SceneElement;

inline SceneElement furniture(const std::string& id, const std::string& label, geometry::Vec3 size,
                              geometry::Vec3 pos, double deg, const std::string& vocab = "living") {
    SceneElement e;
    e.id = id;
    e.cls = scene::ElementClass::furniture(*scene::Vocabulary::builtin(vocab).furniture_index(label));
    e.obb = {size, pos, geometry::Heading::from_degrees(deg)};
    e.known = scene::kKnownType | scene::kKnownSize | scene::kKnownPlacement;
    return e;
}

inline SceneElement arch(const std::string& id, scene::ArchLabel label, double length, geometry::Vec2 center,
                         double deg, double height = 2.6) {
    SceneElement e;
    e.id = id;
    e.cls = scene::ElementClass::arch(label);
    e.obb = {{length, 0.0, height}, {center.x, center.y, height / 2}, geometry::Heading::from_degrees(deg)};
    e.known = scene::kKnownType | scene::kKnownSize | scene::kKnownPlacement;
    return e;
}

/// Four inward-facing walls of a w x h rectangle centered at the origin.
inline std::vector<SceneElement> walls(double w, double h) {
    using scene::ArchLabel;
    return {arch("wall_s", ArchLabel::wall, w, {0, -h / 2}, 0), arch("wall_n", ArchLabel::wall, w, {0, h / 2}, 180),
            arch("wall_w", ArchLabel::wall, h, {-w / 2, 0}, -90), arch("wall_e", ArchLabel::wall, h, {w / 2, 0}, 90)};
}

inline std::vector<geometry::Vec2> rect(double w, double h) {
    return {{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}};
}

inline scene::Scene room(double w, double h, std::vector<SceneElement> furn, int n_max = 16) {
    auto elems = walls(w, h);
    for (auto& f : furn) elems.push_back(std::move(f));
    return scene::make_scene(n_max, 0.125, rect(w, h), std::move(elems));
}

}  // namespace fixtures
