#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "caslayout/geometry.hpp"
#include "caslayout/scene.hpp"

namespace caslayout::relations {

using geometry::Obb;
using scene::Scene;
using scene::SceneElement;

enum class Category : int { direction = 0, distance = 1, alignment = 2, symmetry = 3, arch_distance = 4 };
inline constexpr int kCategoryCount = 5;

enum class Direction : int { left = 0, right, front, behind, under, above };
enum class DistanceBand : int { attach_to = 0, adjacent, distant };
enum class Alignment : int { edge_align = 0, x_center_align, y_center_align };

inline constexpr double kEpsAlign = 0.05;   // meters
inline constexpr double kEpsAngleDeg = 5.0;
inline constexpr double kEpsFeature = 1e-6;
inline constexpr double kAttachBelow = 0.2;
inline constexpr double kAdjacentBelow = 1.5;

std::string_view category_name(Category c);
std::optional<Category> category_from_name(std::string_view name);
/// Number of subcategories (None excluded).
int subcategory_count(Category c);
std::string_view subcategory_name(Category c, int sub);
std::optional<int> subcategory_from_name(Category c, std::string_view name);

struct RelationEdge {
    std::string src;
    std::string dst;  // owner of the reference frame
    Category category = Category::direction;
    int subcategory = 0;

    friend bool operator==(const RelationEdge&, const RelationEdge&) = default;
    friend auto operator<=>(const RelationEdge&, const RelationEdge&) = default;
};

struct RelationGraph {
    std::vector<std::string> nodes;
    std::vector<RelationEdge> edges;

    /// Sorts nodes and edges, drops duplicate edges.
    void canonicalize();
    /// Every edge endpoint must be a node and src != dst.
    void validate() const;
    bool has_edge(const RelationEdge& e) const;

    friend bool operator==(const RelationGraph&, const RelationGraph&) = default;
};

std::optional<Direction> classify_direction(const Obb& a, const Obb& b);
DistanceBand distance_band(double d);
DistanceBand classify_distance(const Obb& a, const Obb& b);
/// Bit i set for Alignment i.
unsigned classify_alignment(const Obb& a, const Obb& b);
bool classify_symmetry(const SceneElement& a, const SceneElement& b);

std::vector<RelationEdge> arch_distances(const Scene& scene);
RelationGraph extract_dense(const Scene& scene);

std::string graph_to_json(const RelationGraph& g);
RelationGraph graph_from_json(std::string_view text);
RelationGraph load_graph_file(const std::string& path);

}  // namespace caslayout::relations
