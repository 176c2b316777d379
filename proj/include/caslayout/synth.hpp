#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "caslayout/scene.hpp"

namespace caslayout::synth {

using geometry::Vec3;
using scene::Scene;
using scene::Vocabulary;

struct CatalogEntry {
    std::string id;
    std::string label;
    Vec3 size_min;
    Vec3 size_max;
    std::vector<double> feature;  // kFeatureDim
};

/// Stand-in for a CAD library: per-label entries with a size range and a
/// feature code.
class Catalog {
public:
    Catalog() = default;
    explicit Catalog(std::vector<CatalogEntry> entries);

    /// Two entries per vocabulary label with one-hot feature codes.
    static Catalog builtin(const Vocabulary& vocab);
    static Catalog from_json(std::string_view text);
    static Catalog load(const std::string& path);
    std::string to_json() const;

    const std::vector<CatalogEntry>& entries() const { return entries_; }
    std::vector<const CatalogEntry*> of_label(const std::string& label) const;
    /// Highest cosine similarity among entries of the label; throws Error when
    /// the label has no entry.
    const CatalogEntry& nearest(const std::string& label, const std::vector<double>& feature) const;

private:
    std::vector<CatalogEntry> entries_;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// chair-table, chair-table-sides, sofa-triad, bedroom, two-zone.
const std::vector<std::string>& preset_names();
/// Vocabulary the preset draws labels from.
const Vocabulary& preset_vocabulary(std::string_view preset);

struct SynthOptions {
    int n_max = scene::kDefaultNMax;
    int grid = scene::kDefaultGridCells;
    double meters_per_cell = scene::kDefaultMetersPerCell;
};

/// One random scene of the preset. Throws Error on an unknown preset.
Scene synth_scene(std::string_view preset, const Catalog& catalog, Rng& rng, const SynthOptions& opts = {});
std::vector<Scene> synth_corpus(std::string_view preset, const Catalog& catalog, int count, std::uint64_t seed,
                                const SynthOptions& opts = {});

}  // namespace caslayout::synth
