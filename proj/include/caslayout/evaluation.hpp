#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "caslayout/relations.hpp"
#include "caslayout/scene.hpp"

namespace caslayout::eval {

using relations::Category;
using relations::RelationGraph;
using scene::Scene;
using scene::Vocabulary;

inline constexpr double kTklSmoothing = 1e-6;

/// KL(p || q) of two count vectors after additive smoothing alpha.
double kl_counts(const std::vector<double>& p, const std::vector<double>& q, double alpha = kTklSmoothing);

/// KL(P_gen || P_ref) of furniture category frequencies. Throws Error when
/// either set is empty.
double tkl(std::span<const Scene> generated, std::span<const Scene> reference, const Vocabulary& vocab);

/// Mean 3D IoU over unordered furniture pairs, in percent; 0 when n < 2.
double scene_iou(const Scene& scene);

struct Satisfaction {
    std::array<int, relations::kCategoryCount> total{};
    std::array<int, relations::kCategoryCount> matched{};

    /// 100 when the category has no target edges.
    double percent(Category c) const;
    double overall() const;
    Satisfaction& operator+=(const Satisfaction& o);
};

/// Target edges that the scene's extracted relations reproduce. Throws Error
/// on an edge naming an element the scene does not have.
Satisfaction relation_satisfaction(const Scene& scene, const RelationGraph& target);

/// Percent of furniture whose footprint leaves the floor mask.
double r_out(const Scene& scene);

/// Cells of the floor not covered by any furniture footprint (cell centers).
std::vector<std::uint8_t> walkable_cells(const Scene& scene);
/// Cells that keep every cell within `radius` (cell units, Euclidean) set.
std::vector<std::uint8_t> erode_disc(const std::vector<std::uint8_t>& cells, int rows, int cols, int radius);
/// Largest 4-connected component and total set cells.
std::pair<std::size_t, std::size_t> largest_component(const std::vector<std::uint8_t>& cells, int rows, int cols);
/// Largest walkable component over all walkable cells after erosion by
/// ceil(0.25 / meters_per_cell); 0 when nothing stays walkable.
double r_walk(const Scene& scene);

using Rgb = std::array<std::uint8_t, 3>;

struct Palette {
    Rgb background{255, 255, 255};
    Rgb floor{220, 220, 220};
    Rgb fallback{128, 128, 128};
    bool draw_floor = true;
    std::map<std::string, Rgb> labels;

    /// Colors for every label of the built-in vocabularies.
    static Palette builtin();
    static Palette from_json(std::string_view text);
    static Palette load(const std::string& path);
    std::string to_json() const;

    Rgb color_of(const std::string& label) const;
};

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    Rgb at(int x, int y) const;
    /// Binary PPM (P6, maxval 255).
    std::string ppm() const;
};

/// Top-down orthographic render of the floor grid extent (square, centered on
/// the grid center); footprints drawn by ascending center z, then id.
Image render_topdown(const Scene& scene, const Vocabulary& vocab, const Palette& palette, int size = 256);

}  // namespace caslayout::eval
