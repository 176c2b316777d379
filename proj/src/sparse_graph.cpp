#include "caslayout/sparse_graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "caslayout/errors.hpp"

namespace caslayout::sparse {

using json = nlohmann::json;
using relations::Alignment;

namespace {

constexpr std::array<std::string_view, kZoneTypeCount> kZoneNames = {"lounging", "dining", "bedding", "lighting",
                                                                     "other"};

ZoneTable living_table() {
    ZoneTable t;
    for (const char* l : {"armchair", "chaise_longue_sofa", "coffee_table", "console_table", "corner_side_table", "desk",
                          "l_shaped_sofa", "lazy_sofa", "lounge_chair", "loveseat_sofa", "multi_seat_sofa",
                          "round_end_table", "stool", "tv_stand"})
        t.zone_of[l] = ZoneType::lounging;
    for (const char* l : {"chinese_chair", "dining_chair", "dining_table"}) t.zone_of[l] = ZoneType::dining;
    for (const char* l : {"ceiling_lamp", "pendant_lamp"}) t.zone_of[l] = ZoneType::lighting;
    for (const char* l : {"bookshelf", "cabinet", "shelf", "wardrobe", "wine_cabinet"}) t.zone_of[l] = ZoneType::other;
    t.anchor_candidates[ZoneType::lounging] = {"multi_seat_sofa", "l_shaped_sofa", "loveseat_sofa",
                                               "chaise_longue_sofa", "lazy_sofa", "lounge_chair",
                                               "armchair", "desk"};
    t.anchor_candidates[ZoneType::dining] = {"dining_table"};
    return t;
}

ZoneTable bedroom_table() {
    ZoneTable t;
    for (const char* l : {"double_bed", "single_bed", "kids_bed", "nightstand"}) t.zone_of[l] = ZoneType::bedding;
    for (const char* l : {"armchair", "chair", "coffee_table", "desk", "dressing_chair", "dressing_table", "sofa",
                          "stool", "table", "tv_stand"})
        t.zone_of[l] = ZoneType::lounging;
    for (const char* l : {"ceiling_lamp", "pendant_lamp"}) t.zone_of[l] = ZoneType::lighting;
    for (const char* l : {"bookshelf", "cabinet", "children_cabinet", "shelf", "wardrobe"})
        t.zone_of[l] = ZoneType::other;
    t.anchor_candidates[ZoneType::bedding] = {"double_bed", "single_bed", "kids_bed"};
    t.anchor_candidates[ZoneType::lounging] = {"sofa", "dressing_table", "desk", "armchair"};
    return t;
}

bool has_anchor_slot(ZoneType z) { return z == ZoneType::lounging || z == ZoneType::dining || z == ZoneType::bedding; }

}  // namespace

std::string_view zone_name(ZoneType z) { return kZoneNames.at(static_cast<std::size_t>(z)); }

std::optional<ZoneType> zone_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kZoneNames.size(); ++i)
        if (kZoneNames[i] == name) return static_cast<ZoneType>(i);
    return std::nullopt;
}

ZoneTable ZoneTable::builtin(const Vocabulary& vocab) {
    if (vocab.name() == "bedroom") return bedroom_table();
    if (vocab.name() == "living") return living_table();
    // Custom vocabularies: living groups where labels match, the rest go to "other".
    ZoneTable base = living_table();
    ZoneTable bed = bedroom_table();
    ZoneTable t;
    for (const auto& l : vocab.furniture()) {
        if (base.zone_of.contains(l)) t.zone_of[l] = base.zone_of[l];
        else if (bed.zone_of.contains(l)) t.zone_of[l] = bed.zone_of[l];
        else t.zone_of[l] = ZoneType::other;
    }
    for (const auto* src : {&base, &bed})
        for (const auto& [z, labels] : src->anchor_candidates)
            for (const auto& l : labels)
                if (t.zone_of.contains(l) && t.zone_of[l] == z) {
                    auto& v = t.anchor_candidates[z];
                    if (std::find(v.begin(), v.end(), l) == v.end()) v.push_back(l);
                }
    return t;
}

ZoneTable ZoneTable::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError("$", std::string("invalid JSON: ") + e.what());
    }
    ZoneTable t;
    if (!doc.is_object() || !doc.contains("zones") || !doc["zones"].is_object())
        throw ParseError("$.zones", "expected an object of label -> zone");
    for (auto it = doc["zones"].begin(); it != doc["zones"].end(); ++it) {
        if (!it->is_string()) throw ParseError("$.zones." + it.key(), "expected a zone name");
        auto z = zone_from_name(it->get<std::string>());
        if (!z) throw ParseError("$.zones." + it.key(), "unknown zone '" + it->get<std::string>() + "'");
        t.zone_of[it.key()] = *z;
    }
    if (doc.contains("anchors")) {
        if (!doc["anchors"].is_object()) throw ParseError("$.anchors", "expected an object");
        for (auto it = doc["anchors"].begin(); it != doc["anchors"].end(); ++it) {
            auto z = zone_from_name(it.key());
            if (!z) throw ParseError("$.anchors." + it.key(), "unknown zone");
            if (!it->is_array()) throw ParseError("$.anchors." + it.key(), "expected a list");
            for (const auto& l : *it) t.anchor_candidates[*z].push_back(l.get<std::string>());
        }
    }
    if (doc.contains("k")) {
        if (!doc["k"].is_number_integer() || doc["k"].get<int>() < 1) throw ParseError("$.k", "expected integer >= 1");
        t.k = doc["k"].get<int>();
    }
    return t;
}

ZoneTable ZoneTable::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open zone table");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string ZoneTable::to_json() const {
    json doc;
    json zones = json::object();
    for (const auto& [l, z] : zone_of) zones[l] = zone_name(z);
    json anchors = json::object();
    for (const auto& [z, labels] : anchor_candidates) anchors[std::string(zone_name(z))] = labels;
    doc["zones"] = zones;
    doc["anchors"] = anchors;
    doc["k"] = k;
    return doc.dump(2) + "\n";
}

void ZoneTable::validate(const Vocabulary& vocab) const {
    for (const auto& l : vocab.furniture())
        if (!zone_of.contains(l)) throw Error("zone table does not map label '" + l + "'");
    for (const auto& [z, labels] : anchor_candidates) {
        if (!has_anchor_slot(z)) throw Error("zone '" + std::string(zone_name(z)) + "' cannot have anchors");
        for (const auto& l : labels) {
            auto it = zone_of.find(l);
            if (it == zone_of.end() || it->second != z)
                throw Error("anchor candidate '" + l + "' is not in zone " + std::string(zone_name(z)));
        }
    }
}

ZoneType ZoneTable::zone(const std::string& label) const {
    auto it = zone_of.find(label);
    return it == zone_of.end() ? ZoneType::other : it->second;
}

std::vector<Zone> assign_zones(const Scene& scene, const Vocabulary& vocab, const ZoneTable& table) {
    std::map<ZoneType, std::vector<const scene::SceneElement*>> by_type;
    for (const auto& e : scene.elements)
        if (e.is_furniture()) by_type[table.zone(vocab.furniture_label(e.cls.label))].push_back(&e);

    std::vector<Zone> zones;
    for (auto& [type, items] : by_type) {
        std::sort(items.begin(), items.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
        std::vector<const scene::SceneElement*> anchors;
        if (has_anchor_slot(type)) {
            auto it = table.anchor_candidates.find(type);
            if (it != table.anchor_candidates.end()) {
                int labels_taken = 0;
                for (const auto& cand : it->second) {
                    if (labels_taken >= table.k) break;
                    bool present = false;
                    for (const auto* e : items)
                        if (vocab.furniture_label(e->cls.label) == cand) {
                            anchors.push_back(e);
                            present = true;
                        }
                    if (present) ++labels_taken;
                }
            }
        }
        if (anchors.empty()) {
            Zone z;
            z.type = type;
            for (const auto* e : items) z.members.push_back(e->id);
            zones.push_back(std::move(z));
            continue;
        }
        std::sort(anchors.begin(), anchors.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
        std::vector<Zone> clusters(anchors.size());
        for (std::size_t i = 0; i < anchors.size(); ++i) {
            clusters[i].type = type;
            clusters[i].anchor = anchors[i]->id;
        }
        for (const auto* e : items) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < anchors.size(); ++i) {
                if (anchors[i] == e) {
                    best = i;
                    break;
                }
                const double d = geometry::norm(e->obb.center_xy() - anchors[i]->obb.center_xy());
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            clusters[best].members.push_back(e->id);
        }
        for (auto& c : clusters) zones.push_back(std::move(c));
    }
    return zones;
}

PairRules::PairRules(const std::vector<Zone>& zones) {
    for (std::size_t i = 0; i < zones.size(); ++i)
        for (const auto& id : zones[i].members) {
            if (info_.contains(id)) throw Error("element '" + id + "' belongs to two zones");
            info_[id] = Info{zones[i].type, static_cast<int>(i), zones[i].anchor == id};
        }
}

bool PairRules::admits(const std::string& src, const std::string& dst, Category category, int subcategory) const {
    if (category == Category::arch_distance) return true;
    const auto a = info_.find(src);
    const auto b = info_.find(dst);
    if (a == info_.end() || b == info_.end()) throw Error("edge endpoint is not in any zone");
    if (a->second.type == ZoneType::lighting || b->second.type == ZoneType::lighting)
        return category == Category::alignment && (subcategory == static_cast<int>(Alignment::x_center_align) ||
                                                   subcategory == static_cast<int>(Alignment::y_center_align));
    if (a->second.type == ZoneType::other || b->second.type == ZoneType::other) return false;
    if (a->second.cluster == b->second.cluster) return true;
    return a->second.anchor && b->second.anchor;
}

bool PairRules::admits_category(const std::string& src, const std::string& dst, Category category) const {
    for (int s = 0; s < relations::subcategory_count(category); ++s)
        if (admits(src, dst, category, s)) return true;
    return false;
}

RelationGraph sparsify(const RelationGraph& dense, const std::vector<Zone>& zones) {
    const PairRules rules(zones);
    const std::set<std::string> nodes(dense.nodes.begin(), dense.nodes.end());
    for (const auto& z : zones)
        for (const auto& id : z.members)
            if (!nodes.contains(id)) throw Error("zone member '" + id + "' is not a graph node");
    RelationGraph out;
    out.nodes = dense.nodes;
    for (const auto& e : dense.edges) {
        if (e.category != Category::arch_distance && (!rules.knows(e.src) || !rules.knows(e.dst)))
            throw Error("graph node '" + (rules.knows(e.src) ? e.dst : e.src) + "' has no zone");
        if (rules.admits(e.src, e.dst, e.category, e.subcategory)) out.edges.push_back(e);
    }
    out.canonicalize();
    return out;
}

RelationGraph extract_sparse(const Scene& scene, const Vocabulary& vocab, const ZoneTable& table) {
    return sparsify(relations::extract_dense(scene), assign_zones(scene, vocab, table));
}

LabeledGraph label_graph(RelationGraph graph, const Scene& scene, const Vocabulary& vocab) {
    LabeledGraph lg;
    for (const auto& e : scene.elements) {
        if (e.is_empty()) continue;
        lg.labels[e.id] = e.is_arch() ? std::string(scene::arch_label_name(e.cls.label))
                                      : vocab.furniture_label(e.cls.label);
    }
    lg.graph = std::move(graph);
    return lg;
}

EntropyReport relation_entropy(std::span<const LabeledGraph> graphs, Category category) {
    if (graphs.empty()) throw Error("entropy needs at least one graph");
    const int m = relations::subcategory_count(category);
    std::map<std::pair<std::string, std::string>, std::vector<double>> counts;
    for (const auto& lg : graphs) {
        for (const auto& e : lg.graph.edges) {
            if (e.category != category) continue;
            const auto s = lg.labels.find(e.src);
            const auto d = lg.labels.find(e.dst);
            if (s == lg.labels.end() || d == lg.labels.end()) throw Error("edge endpoint has no label");
            auto& c = counts[{s->second, d->second}];
            if (c.empty()) c.assign(static_cast<std::size_t>(m), 0.0);
            c[static_cast<std::size_t>(e.subcategory)] += 1.0;
        }
    }
    EntropyReport r;
    r.category = category;
    r.m = m;
    r.n = static_cast<int>(counts.size());
    double total = 0.0;
    for (auto& [key, c] : counts) {
        double sum = 0.0;
        for (double v : c) sum += v;
        EntropyReport::Key k;
        k.src_label = key.first;
        k.dst_label = key.second;
        for (double v : c) {
            const double p = v / sum;
            k.frequencies.push_back(p);
            if (p > 0.0) k.entropy -= p * std::log2(p);
        }
        total += k.entropy;
        r.keys.push_back(std::move(k));
    }
    r.h = r.n > 0 ? total / r.n : 0.0;
    return r;
}

std::string EntropyReport::to_json() const {
    json doc;
    doc["category"] = relations::category_name(category);
    doc["n"] = n;
    doc["m"] = m;
    doc["H"] = h;
    doc["H_max"] = std::log2(static_cast<double>(m));
    json ks = json::array();
    for (const auto& k : keys) {
        json freq = json::object();
        for (int s = 0; s < m; ++s)
            freq[std::string(relations::subcategory_name(category, s))] = k.frequencies[static_cast<std::size_t>(s)];
        ks.push_back({{"src_label", k.src_label}, {"dst_label", k.dst_label}, {"frequencies", freq}, {"H", k.entropy}});
    }
    doc["keys"] = ks;
    return doc.dump(2) + "\n";
}

}  // namespace caslayout::sparse
