#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caslayout/relations.hpp"
#include "caslayout/scene.hpp"

namespace caslayout::sparse {

using relations::Category;
using relations::RelationGraph;
using scene::Scene;
using scene::Vocabulary;

enum class ZoneType : int { lounging = 0, dining, bedding, lighting, other };
inline constexpr int kZoneTypeCount = 5;

std::string_view zone_name(ZoneType z);
std::optional<ZoneType> zone_from_name(std::string_view name);

struct ZoneTable {
    std::map<std::string, ZoneType> zone_of;
    /// Priority-ordered anchor labels per zone type (lounging, dining, bedding only).
    std::map<ZoneType, std::vector<std::string>> anchor_candidates;
    int k = 1;

    /// Shipped tables for the "living" and "bedroom" vocabularies.
    static ZoneTable builtin(const Vocabulary& vocab);
    static ZoneTable from_json(std::string_view text);
    static ZoneTable load(const std::string& path);
    std::string to_json() const;

    /// Every vocabulary label mapped, anchors drawn from their zone.
    void validate(const Vocabulary& vocab) const;
    ZoneType zone(const std::string& label) const;
};

struct Zone {
    ZoneType type = ZoneType::other;
    std::vector<std::string> members;  // sorted ids
    std::optional<std::string> anchor;
};

std::vector<Zone> assign_zones(const Scene& scene, const Vocabulary& vocab, const ZoneTable& table);

/// Keeps intra-cluster and anchor-anchor furniture edges, center alignment for
/// lighting, nothing for "other", and every architecture edge.
RelationGraph sparsify(const RelationGraph& dense, const std::vector<Zone>& zones);

/// Convenience: extract_dense -> assign_zones -> sparsify.
RelationGraph extract_sparse(const Scene& scene, const Vocabulary& vocab, const ZoneTable& table);

/// True when an ordered furniture pair may carry edges of `category` in a
/// sparse graph built from these zones.
class PairRules {
public:
    explicit PairRules(const std::vector<Zone>& zones);
    bool admits(const std::string& src, const std::string& dst, Category category, int subcategory) const;
    /// Whether any subcategory of `category` could be admitted.
    bool admits_category(const std::string& src, const std::string& dst, Category category) const;
    bool knows(const std::string& id) const { return info_.contains(id); }

private:
    struct Info {
        ZoneType type;
        int cluster;
        bool anchor;
    };
    std::map<std::string, Info> info_;
};

struct LabeledGraph {
    RelationGraph graph;
    std::map<std::string, std::string> labels;  // node id -> label
};

LabeledGraph label_graph(RelationGraph graph, const Scene& scene, const Vocabulary& vocab);

struct EntropyReport {
    Category category = Category::direction;
    int n = 0;  // distinct (src label, dst label) keys
    int m = 0;  // subcategory count
    struct Key {
        std::string src_label;
        std::string dst_label;
        std::vector<double> frequencies;  // per subcategory, sums to 1
        double entropy = 0.0;
    };
    std::vector<Key> keys;
    double h = 0.0;

    std::string to_json() const;
};

EntropyReport relation_entropy(std::span<const LabeledGraph> graphs, Category category);

}  // namespace caslayout::sparse
