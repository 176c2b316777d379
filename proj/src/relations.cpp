#include "caslayout/relations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "caslayout/errors.hpp"

namespace caslayout::relations {

using geometry::Vec2;
using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {"direction", "distance", "alignment",
                                                                         "symmetry", "arch_distance"};
constexpr std::array<std::string_view, 6> kDirectionNames = {"left", "right", "front", "behind", "under", "above"};
constexpr std::array<std::string_view, 3> kDistanceNames = {"attach_to", "adjacent", "distant"};
constexpr std::array<std::string_view, 3> kAlignmentNames = {"edge_align", "x_center_align", "y_center_align"};
constexpr std::array<std::string_view, 1> kSymmetryNames = {"symmetric"};

std::span<const std::string_view> names_of(Category c) {
    switch (c) {
        case Category::direction: return kDirectionNames;
        case Category::distance:
        case Category::arch_distance: return kDistanceNames;
        case Category::alignment: return kAlignmentNames;
        case Category::symmetry: return kSymmetryNames;
    }
    return {};
}

const double kSinAngle = std::sin(kEpsAngleDeg * std::numbers::pi / 180.0);
const double kCosAngle = std::cos(kEpsAngleDeg * std::numbers::pi / 180.0);

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames.at(static_cast<std::size_t>(c)); }

std::optional<Category> category_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
        if (kCategoryNames[i] == name) return static_cast<Category>(i);
    return std::nullopt;
}

int subcategory_count(Category c) { return static_cast<int>(names_of(c).size()); }

std::string_view subcategory_name(Category c, int sub) { return names_of(c)[static_cast<std::size_t>(sub)]; }

std::optional<int> subcategory_from_name(Category c, std::string_view name) {
    const auto names = names_of(c);
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return std::nullopt;
}

// ---------------------------------------------------------------------------

std::optional<Direction> classify_direction(const Obb& a, const Obb& b) {
    const Vec2 c = a.center_xy();
    if (geometry::footprint_contains(b, c)) {
        if (a.translation.z > b.translation.z) return Direction::above;
        if (a.translation.z < b.translation.z) return Direction::under;
        return std::nullopt;
    }
    const Vec2 l = b.to_local(c);
    // Rays leave the ends of the front (back) edge at 60 degrees from +y (-y).
    const double side = std::max(0.0, std::abs(l.x) - b.half_x()) / std::numbers::sqrt3;
    if (l.y - b.half_y() >= side) return Direction::front;
    if (-l.y - b.half_y() >= side) return Direction::behind;
    return l.x > 0.0 ? Direction::left : Direction::right;
}

DistanceBand distance_band(double d) {
    if (d < kAttachBelow) return DistanceBand::attach_to;
    if (d < kAdjacentBelow) return DistanceBand::adjacent;
    return DistanceBand::distant;
}

DistanceBand classify_distance(const Obb& a, const Obb& b) { return distance_band(geometry::min_distance_obb(a, b)); }

namespace {

bool edges_collinear(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1) {
    const Vec2 u = p1 - p0;
    const Vec2 v = q1 - q0;
    const double lu = geometry::norm(u);
    const double lv = geometry::norm(v);
    if (lu == 0.0 || lv == 0.0) return false;
    if (std::abs(geometry::cross(u, v)) > kSinAngle * lu * lv) return false;
    const Vec2 mid = (p0 + p1) * 0.5;
    return std::abs(geometry::cross(v, mid - q0)) <= kEpsAlign * lv;
}

}  // namespace

unsigned classify_alignment(const Obb& a, const Obb& b) {
    unsigned bits = 0;
    const Vec2 l = b.to_local(a.center_xy());
    if (std::abs(l.x) <= kEpsAlign) bits |= 1U << static_cast<int>(Alignment::x_center_align);
    if (std::abs(l.y) <= kEpsAlign) bits |= 1U << static_cast<int>(Alignment::y_center_align);
    const auto ca = a.corners();
    const auto cb = b.corners();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            if (edges_collinear(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])) {
                bits |= 1U << static_cast<int>(Alignment::edge_align);
                return bits;
            }
    return bits;
}

bool classify_symmetry(const SceneElement& a, const SceneElement& b) {
    if (!a.is_furniture() || !b.is_furniture() || a.cls != b.cls) return false;
    const auto& sa = a.obb.size;
    const auto& sb = b.obb.size;
    if (std::abs(sa.x - sb.x) > kEpsAlign || std::abs(sa.y - sb.y) > kEpsAlign || std::abs(sa.z - sb.z) > kEpsAlign)
        return false;
    for (std::size_t i = 0; i < a.feature.size() && i < b.feature.size(); ++i)
        if (std::abs(a.feature[i] - b.feature[i]) > kEpsFeature) return false;
    if (std::abs(a.obb.translation.z - b.obb.translation.z) > kEpsAlign) return false;
    const Vec2 d = b.obb.center_xy() - a.obb.center_xy();
    const double len = geometry::norm(d);
    if (len == 0.0) return false;
    const Vec2 u = d * (1.0 / len);
    // Reflect a's facing across the perpendicular bisector of the two centers.
    const Vec2 ya = geometry::local_frame(a.obb).yhat;
    const Vec2 yb = geometry::local_frame(b.obb).yhat;
    const Vec2 mirrored = ya - u * (2.0 * geometry::dot(ya, u));
    return geometry::dot(mirrored, yb) >= kCosAngle;
}

std::vector<RelationEdge> arch_distances(const Scene& scene) {
    std::vector<RelationEdge> out;
    for (const auto& f : scene.elements) {
        if (!f.is_furniture()) continue;
        const SceneElement* nearest = nullptr;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& a : scene.elements) {
            if (!a.is_arch()) continue;
            const double d = geometry::min_distance_obb_segment(f.obb, geometry::segment_of(a.obb));
            if (a.cls.label == static_cast<int>(scene::ArchLabel::wall)) {
                if (d < best || (d == best && nearest != nullptr && a.id < nearest->id)) {
                    best = d;
                    nearest = &a;
                }
            } else {
                out.push_back({f.id, a.id, Category::arch_distance, static_cast<int>(distance_band(d))});
            }
        }
        if (nearest != nullptr)
            out.push_back({f.id, nearest->id, Category::arch_distance, static_cast<int>(distance_band(best))});
    }
    return out;
}

RelationGraph extract_dense(const Scene& scene) {
    RelationGraph g;
    std::vector<const SceneElement*> furniture;
    for (const auto& e : scene.elements) {
        if (e.is_empty()) continue;
        g.nodes.push_back(e.id);
        if (e.is_furniture()) furniture.push_back(&e);
    }
    for (const auto* a : furniture) {
        for (const auto* b : furniture) {
            if (a == b) continue;
            if (auto dir = classify_direction(a->obb, b->obb))
                g.edges.push_back({a->id, b->id, Category::direction, static_cast<int>(*dir)});
            g.edges.push_back({a->id, b->id, Category::distance, static_cast<int>(classify_distance(a->obb, b->obb))});
            const unsigned bits = classify_alignment(a->obb, b->obb);
            for (int k = 0; k < 3; ++k)
                if (bits & (1U << k)) g.edges.push_back({a->id, b->id, Category::alignment, k});
            if (a->id < b->id && classify_symmetry(*a, *b)) g.edges.push_back({a->id, b->id, Category::symmetry, 0});
        }
    }
    auto arch = arch_distances(scene);
    g.edges.insert(g.edges.end(), arch.begin(), arch.end());
    g.canonicalize();
    return g;
}

// ---------------------------------------------------------------------------

void RelationGraph::canonicalize() {
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

void RelationGraph::validate() const {
    const std::set<std::string> ids(nodes.begin(), nodes.end());
    for (const auto& e : edges) {
        if (!ids.contains(e.src)) throw Error("edge references unknown node '" + e.src + "'");
        if (!ids.contains(e.dst)) throw Error("edge references unknown node '" + e.dst + "'");
        if (e.src == e.dst) throw Error("self edge on '" + e.src + "'");
        if (e.subcategory < 0 || e.subcategory >= subcategory_count(e.category))
            throw Error("invalid subcategory for " + std::string(category_name(e.category)));
    }
}

bool RelationGraph::has_edge(const RelationEdge& e) const { return std::binary_search(edges.begin(), edges.end(), e); }

std::string graph_to_json(const RelationGraph& g) {
    RelationGraph c = g;
    c.canonicalize();
    json doc;
    doc["nodes"] = c.nodes;
    json edges = json::array();
    for (const auto& e : c.edges)
        edges.push_back({{"src", e.src},
                         {"dst", e.dst},
                         {"category", category_name(e.category)},
                         {"subcategory", subcategory_name(e.category, e.subcategory)}});
    doc["edges"] = edges;
    return doc.dump(2) + "\n";
}

RelationGraph graph_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError("$", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("$", "expected an object");
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (it.key() != "nodes" && it.key() != "edges") throw ParseError("$." + it.key(), "unknown field");
    RelationGraph g;
    if (!doc.contains("nodes") || !doc["nodes"].is_array()) throw ParseError("$.nodes", "expected an array");
    for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
        const auto& n = doc["nodes"][i];
        if (!n.is_string()) throw ParseError("$.nodes[" + std::to_string(i) + "]", "expected a string");
        g.nodes.push_back(n.get<std::string>());
    }
    if (doc.contains("edges")) {
        if (!doc["edges"].is_array()) throw ParseError("$.edges", "expected an array");
        for (std::size_t i = 0; i < doc["edges"].size(); ++i) {
            const std::string path = "$.edges[" + std::to_string(i) + "]";
            const auto& e = doc["edges"][i];
            for (const char* key : {"src", "dst", "category", "subcategory"})
                if (!e.contains(key) || !e[key].is_string()) throw ParseError(path + "." + key, "expected a string");
            const std::string cat = e["category"].get<std::string>();
            auto c = category_from_name(cat);
            if (!c) throw ParseError(path + ".category", "unknown category '" + cat + "'");
            const std::string subname = e["subcategory"].get<std::string>();
            auto sub = subcategory_from_name(*c, subname);
            if (!sub) throw ParseError(path + ".subcategory", "unknown subcategory '" + subname + "'");
            g.edges.push_back({e["src"].get<std::string>(), e["dst"].get<std::string>(), *c, *sub});
        }
    }
    g.canonicalize();
    g.validate();
    return g;
}

RelationGraph load_graph_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open graph file");
    std::stringstream ss;
    ss << in.rdbuf();
    return graph_from_json(ss.str());
}

}  // namespace caslayout::relations
