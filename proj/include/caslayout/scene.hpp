#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "caslayout/geometry.hpp"
#include "caslayout/rng.hpp"

namespace caslayout::scene {

using geometry::Obb;
using geometry::Vec2;
using geometry::Vec3;

inline constexpr int kFeatureDim = 64;
inline constexpr int kLatentDim = 32;
inline constexpr int kDefaultNMax = 16;
inline constexpr int kDefaultGridCells = 64;
inline constexpr double kDefaultMetersPerCell = 0.125;

enum class ElementKind : std::uint8_t { architectural, furniture, empty };

enum class ArchLabel : int { wall = 0, door = 1, window = 2 };
inline constexpr int kArchLabelCount = 3;

std::string_view arch_label_name(int label);
std::string_view kind_name(ElementKind kind);

/// Furniture category list. Type one-hots are laid out as
/// [wall, door, window, furniture_0 .. furniture_{F-1}, None].
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::string name, std::vector<std::string> furniture);

    /// "living" (24 categories, the default) or "bedroom".
    static const Vocabulary& builtin(std::string_view name);
    /// Built-in name, or a path to a JSON list of labels.
    static Vocabulary resolve(const std::string& name_or_path);

    const std::string& name() const { return name_; }
    int furniture_count() const { return static_cast<int>(furniture_.size()); }
    const std::vector<std::string>& furniture() const { return furniture_; }
    const std::string& furniture_label(int i) const { return furniture_.at(static_cast<std::size_t>(i)); }
    std::optional<int> furniture_index(std::string_view label) const;

    int type_width() const { return kArchLabelCount + furniture_count() + 1; }
    int none_slot() const { return type_width() - 1; }

private:
    std::string name_;
    std::vector<std::string> furniture_;
};

struct ElementClass {
    ElementKind kind = ElementKind::empty;
    int label = -1;  // arch: ArchLabel, furniture: vocabulary index, empty: -1

    static ElementClass none() { return {}; }
    static ElementClass arch(ArchLabel l) { return {ElementKind::architectural, static_cast<int>(l)}; }
    static ElementClass furniture(int l) { return {ElementKind::furniture, l}; }

    /// Index into the type one-hot.
    int type_slot(const Vocabulary& vocab) const;
    static ElementClass from_type_slot(int slot, const Vocabulary& vocab);

    friend bool operator==(const ElementClass&, const ElementClass&) = default;
};

/// Which attributes of an element are populated.
enum Known : std::uint8_t {
    kKnownType = 1,
    kKnownSize = 2,
    kKnownFeature = 4,
    kKnownPlacement = 8,
    kKnownAll = 15,
};

struct SceneElement {
    std::string id;
    ElementClass cls;
    Obb obb;
    std::vector<double> feature = std::vector<double>(kFeatureDim, 0.0);
    int pe = 0;
    std::uint8_t known = 0;
    /// Held fixed by every stage (completion, editing).
    bool conditioned = false;

    bool is_empty() const { return cls.kind == ElementKind::empty; }
    bool is_arch() const { return cls.kind == ElementKind::architectural; }
    bool is_furniture() const { return cls.kind == ElementKind::furniture; }

    friend bool operator==(const SceneElement&, const SceneElement&) = default;
};

/// Binary floor mask. Cell (row, col) has its center at
/// x = (col + 0.5 - cols/2) * mpc, y = (rows/2 - row - 0.5) * mpc,
/// i.e. row 0 is the +y edge and the grid is centered on the room center.
struct FloorGrid {
    int rows = 0;
    int cols = 0;
    double meters_per_cell = kDefaultMetersPerCell;
    std::vector<std::uint8_t> cells;

    static FloorGrid all_ones(int rows, int cols, double mpc);

    std::uint8_t at(int r, int c) const { return cells[static_cast<std::size_t>(r) * cols + c]; }
    std::uint8_t& at(int r, int c) { return cells[static_cast<std::size_t>(r) * cols + c]; }
    Vec2 cell_center(int r, int c) const;
    /// Cell containing a point, or nullopt outside the grid.
    std::optional<std::pair<int, int>> cell_of(Vec2 p) const;
    std::size_t count() const;

    friend bool operator==(const FloorGrid&, const FloorGrid&) = default;
};

/// Cell = 1 iff its center lies inside the polygon.
FloorGrid rasterize_floor(const std::vector<Vec2>& polygon, int rows, int cols, double meters_per_cell);

struct Scene {
    int n_max = kDefaultNMax;
    std::vector<Vec2> floor_polygon;  // empty = no floor plan (all-ones grid)
    FloorGrid floor;
    Vec2 room_center;
    std::vector<SceneElement> elements;  // always n_max long

    int m() const;  // architectural count
    int n() const;  // furniture count
    const SceneElement* find(std::string_view id) const;
    SceneElement* find(std::string_view id);
    int index_of(std::string_view id) const;

    friend bool operator==(const Scene&, const Scene&) = default;
};

struct SceneOptions {
    int grid_rows = kDefaultGridCells;
    int grid_cols = kDefaultGridCells;
};

/// Builds a scene from its parts, padding with empty slots and rasterizing the
/// floor. Throws CapacityError when the elements do not fit.
Scene make_scene(int n_max, double meters_per_cell, std::vector<Vec2> floor_polygon,
                 std::vector<SceneElement> elements, const SceneOptions& opts = {});

/// An optional "grid": [rows, cols] overrides opts.
Scene load_scene(std::string_view json_text, const Vocabulary& vocab, const SceneOptions& opts = {});
std::string save_scene(const Scene& scene, const Vocabulary& vocab);
Scene load_scene_file(const std::string& path, const Vocabulary& vocab, const SceneOptions& opts = {});
void save_scene_file(const Scene& scene, const Vocabulary& vocab, const std::string& path);

/// Moves non-empty elements to the front (stable) and renumbers pe by slot.
Scene compacted(const Scene& scene);

// ---------------------------------------------------------------------------
// Stage node vectors

enum class Field : std::uint8_t { type, feature, size, translation, rotation, latent };
inline constexpr int kFieldCount = 6;

struct FieldSet {
    std::uint8_t bits = 0;
    bool has(Field f) const { return (bits >> static_cast<int>(f)) & 1U; }
    void set(Field f) { bits = static_cast<std::uint8_t>(bits | (1U << static_cast<int>(f))); }
    friend bool operator==(const FieldSet&, const FieldSet&) = default;
};

/// Fields present in the stage's node layout.
FieldSet stage_layout(int stage);
/// Fields a stage generates for free furniture.
FieldSet stage_targets(int stage);

/// One node vector. Values are physical units (meters, unit rotation).
struct StageVector {
    int slot = 0;
    int pe = 0;
    ElementKind kind = ElementKind::empty;
    std::vector<double> type;
    std::vector<double> feature;  // empty unless in layout
    std::array<double, 3> size{};
    std::array<double, 3> translation{};
    std::array<double, 2> rotation{};
    std::vector<double> latent;  // empty unless in layout
    FieldSet known;
    FieldSet target;

    friend bool operator==(const StageVector&, const StageVector&) = default;
};

/// Per-slot relation latents (empty vector for empty slots).
using RelationLatents = std::vector<std::vector<double>>;

/// Node vectors for `stage` (1..4). Stage 1 covers all n_max slots; later
/// stages cover non-empty slots only. Target fields are zero.
/// Throws StagingError when a conditioned field has not been produced.
std::vector<StageVector> encode_stage(const Scene& scene, int stage, const Vocabulary& vocab,
                                      const RelationLatents* latents = nullptr);

/// Ground-truth values for the target fields (training data), same order as
/// encode_stage.
std::vector<StageVector> stage_ground_truth(const Scene& scene, int stage, const Vocabulary& vocab,
                                            const RelationLatents* latents = nullptr);

// ---------------------------------------------------------------------------
// Augmentation

Scene rotate_quarter_turns(const Scene& scene, int k);
/// `order[i]` = old slot placed at new slot i; pe is renumbered.
Scene permute_slots(const Scene& scene, const std::vector<int>& order);
/// Turns the chosen architectural elements into empty slots.
Scene mask_architecture(const Scene& scene, const std::vector<std::string>& ids);
/// All-ones floor grid and every architectural element set to None.
Scene drop_floor_plan(const Scene& scene);
/// Flags the given furniture as conditioned ground truth.
Scene mark_conditioned(const Scene& scene, const std::vector<std::string>& ids);

struct AugmentPolicy {
    bool permute = true;
    bool rotate = true;
    double arch_mask_prob = 0.0;     // per-element
    double floor_free_prob = 0.0;    // per-scene
    double completion_prob = 0.0;    // per-scene; then a random furniture subset is conditioned
};

Scene augment(const Scene& scene, const AugmentPolicy& policy, Rng& rng);

}  // namespace caslayout::scene
