#include "caslayout/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

#include "caslayout/errors.hpp"

namespace caslayout::synth {

using geometry::Heading;
using geometry::Obb;
using geometry::Vec2;
using json = nlohmann::json;
using scene::SceneElement;

namespace {

const std::map<std::string, Vec3>& base_sizes() {
    static const std::map<std::string, Vec3> sizes = {
        {"armchair", {0.8, 0.8, 0.85}},        {"bookshelf", {1.0, 0.35, 1.8}},
        {"cabinet", {0.9, 0.45, 0.9}},         {"ceiling_lamp", {0.5, 0.5, 0.3}},
        {"chaise_longue_sofa", {1.8, 0.9, 0.8}}, {"chinese_chair", {0.5, 0.5, 0.95}},
        {"coffee_table", {1.1, 0.6, 0.42}},    {"console_table", {1.2, 0.4, 0.8}},
        {"corner_side_table", {0.5, 0.5, 0.55}}, {"desk", {1.3, 0.65, 0.75}},
        {"dining_chair", {0.45, 0.5, 0.9}},    {"dining_table", {1.5, 0.9, 0.75}},
        {"l_shaped_sofa", {2.6, 1.6, 0.8}},    {"lazy_sofa", {0.9, 0.9, 0.7}},
        {"lounge_chair", {0.75, 0.8, 0.85}},   {"loveseat_sofa", {1.6, 0.85, 0.8}},
        {"multi_seat_sofa", {2.2, 0.9, 0.8}},  {"pendant_lamp", {0.5, 0.5, 0.6}},
        {"round_end_table", {0.55, 0.55, 0.55}}, {"shelf", {0.8, 0.3, 1.2}},
        {"stool", {0.4, 0.4, 0.45}},           {"tv_stand", {1.8, 0.45, 0.5}},
        {"wardrobe", {1.2, 0.6, 2.1}},         {"wine_cabinet", {1.0, 0.45, 1.8}},
        {"chair", {0.45, 0.5, 0.9}},           {"children_cabinet", {0.8, 0.4, 1.0}},
        {"double_bed", {1.8, 2.1, 1.0}},       {"dressing_chair", {0.45, 0.45, 0.8}},
        {"dressing_table", {1.0, 0.45, 0.75}}, {"kids_bed", {1.0, 1.9, 0.9}},
        {"nightstand", {0.5, 0.42, 0.55}},     {"single_bed", {1.0, 2.0, 0.9}},
        {"sofa", {2.0, 0.9, 0.8}},             {"table", {1.2, 0.7, 0.75}}};
    return sizes;
}

Vec3 scaled(Vec3 v, double k) { return {v.x * k, v.y * k, v.z * k}; }

json vec_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) throw ParseError(path, "expected 3 numbers");
    for (const auto& v : j)
        if (!v.is_number()) throw ParseError(path, "expected 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Catalog::Catalog(std::vector<CatalogEntry> entries) : entries_(std::move(entries)) {
    for (const auto& e : entries_) {
        if (e.feature.size() != static_cast<std::size_t>(scene::kFeatureDim))
            throw Error("catalog entry '" + e.id + "' needs a " + std::to_string(scene::kFeatureDim) + "-dim feature");
        if (e.size_min.x <= 0 || e.size_min.y <= 0 || e.size_min.z <= 0 || e.size_max.x < e.size_min.x ||
            e.size_max.y < e.size_min.y || e.size_max.z < e.size_min.z)
            throw Error("catalog entry '" + e.id + "' has an invalid size range");
    }
}

Catalog Catalog::builtin(const Vocabulary& vocab) {
    std::vector<CatalogEntry> out;
    for (int li = 0; li < vocab.furniture_count(); ++li) {
        const std::string& label = vocab.furniture_label(li);
        auto it = base_sizes().find(label);
        const Vec3 base = it == base_sizes().end() ? Vec3{0.6, 0.6, 0.8} : it->second;
        for (int k = 0; k < 2; ++k) {
            CatalogEntry e;
            e.id = label + "_" + std::to_string(k);
            e.label = label;
            e.size_min = scaled(base, k == 0 ? 0.95 : 1.0);
            e.size_max = scaled(base, k == 0 ? 1.0 : 1.05);
            e.feature.assign(scene::kFeatureDim, 0.0);
            e.feature[static_cast<std::size_t>((2 * li + k) % scene::kFeatureDim)] = 1.0;
            out.push_back(std::move(e));
        }
    }
    return Catalog(std::move(out));
}

Catalog Catalog::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError("$", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw ParseError("$", "expected a list of catalog entries");
    std::vector<CatalogEntry> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& j = doc[i];
        const std::string p = "$[" + std::to_string(i) + "]";
        if (!j.is_object()) throw ParseError(p, "expected an object");
        for (const char* k : {"id", "label", "size_min", "size_max", "feature"})
            if (!j.contains(k)) throw ParseError(p + "." + k, "missing field");
        CatalogEntry e;
        e.id = j["id"].get<std::string>();
        e.label = j["label"].get<std::string>();
        e.size_min = vec_from(j["size_min"], p + ".size_min");
        e.size_max = vec_from(j["size_max"], p + ".size_max");
        if (!j["feature"].is_array()) throw ParseError(p + ".feature", "expected a list");
        for (const auto& v : j["feature"]) e.feature.push_back(v.get<double>());
        out.push_back(std::move(e));
    }
    return Catalog(std::move(out));
}

Catalog Catalog::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open catalog '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string Catalog::to_json() const {
    json doc = json::array();
    for (const auto& e : entries_)
        doc.push_back({{"id", e.id}, {"label", e.label}, {"size_min", vec_json(e.size_min)},
                       {"size_max", vec_json(e.size_max)}, {"feature", e.feature}});
    return doc.dump(1);
}

std::vector<const CatalogEntry*> Catalog::of_label(const std::string& label) const {
    std::vector<const CatalogEntry*> out;
    for (const auto& e : entries_)
        if (e.label == label) out.push_back(&e);
    return out;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("cosine similarity of vectors with different lengths");
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

const CatalogEntry& Catalog::nearest(const std::string& label, const std::vector<double>& feature) const {
    const CatalogEntry* best = nullptr;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (const auto& e : entries_) {
        if (e.label != label) continue;
        const double s = cosine_similarity(e.feature, feature);
        if (s > best_sim) {
            best_sim = s;
            best = &e;
        }
    }
    if (best == nullptr) throw Error("catalog has no entry for '" + label + "'");
    return *best;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

const std::vector<std::string> kPresets = {"chair-table", "chair-table-sides", "sofa-triad", "bedroom", "two-zone"};

struct Item {
    std::string id;
    std::string label;
    Vec3 size;
    Vec2 pos;      // group frame
    double z = 0;  // center height
    int quarter = 0;
    std::vector<double> feature;
};

double round_cm(double v) { return std::round(v * 100.0) / 100.0; }

Item make_item(const Catalog& cat, const std::string& id, const std::string& label, Rng& rng) {
    const auto entries = cat.of_label(label);
    if (entries.empty()) throw Error("catalog has no entry for '" + label + "'");
    const CatalogEntry& e = *entries[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(entries.size()) - 1))];
    Item it;
    it.id = id;
    it.label = label;
    it.size = {round_cm(rng.uniform(e.size_min.x, e.size_max.x)), round_cm(rng.uniform(e.size_min.y, e.size_max.y)),
               round_cm(rng.uniform(e.size_min.z, e.size_max.z))};
    it.z = it.size.z / 2;
    it.feature = e.feature;
    return it;
}

Vec2 turn(Vec2 p, int q) {
    for (int i = 0; i < ((q % 4) + 4) % 4; ++i) p = geometry::quarter_turn(p);
    return p;
}

/// Footprint half extents of an item after `quarter` turns.
Vec2 half_extent(const Item& it) {
    return it.quarter % 2 == 0 ? Vec2{it.size.x / 2, it.size.y / 2} : Vec2{it.size.y / 2, it.size.x / 2};
}

struct Box2 {
    double x0, y0, x1, y1;
};

Box2 bounds(const std::vector<Item>& items) {
    Box2 b{1e9, 1e9, -1e9, -1e9};
    for (const auto& it : items) {
        const Vec2 h = half_extent(it);
        b.x0 = std::min(b.x0, it.pos.x - h.x);
        b.y0 = std::min(b.y0, it.pos.y - h.y);
        b.x1 = std::max(b.x1, it.pos.x + h.x);
        b.y1 = std::max(b.y1, it.pos.y + h.y);
    }
    return b;
}

std::vector<Item> rotated(std::vector<Item> items, int q) {
    for (auto& it : items) {
        it.pos = turn(it.pos, q);
        it.quarter = (it.quarter + q) % 4;
    }
    return items;
}

void shift(std::vector<Item>& items, Vec2 d) {
    for (auto& it : items) it.pos = it.pos + d;
}

/// Random quarter turn and position inside `region`; with `back_to_wall` the
/// group's local -y side is pushed against the region edge it faces.
/// Returns false when the group fits in no orientation.
bool place(std::vector<Item>& items, Box2 region, double margin, bool back_to_wall, Rng& rng) {
    const int q0 = rng.uniform_int(0, 3);
    for (int k = 0; k < 4; ++k) {
        const int q = (q0 + k) % 4;
        auto r = rotated(items, q);
        const Box2 b = bounds(r);
        const double lo_x = region.x0 + margin - b.x0, hi_x = region.x1 - margin - b.x1;
        const double lo_y = region.y0 + margin - b.y0, hi_y = region.y1 - margin - b.y1;
        if (lo_x > hi_x || lo_y > hi_y) continue;
        Vec2 d{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
        if (back_to_wall) {
            const Vec2 back = turn({0, -1}, q);
            constexpr double gap = 0.02;
            if (back.x > 0.5) d.x = region.x1 - gap - b.x1;
            if (back.x < -0.5) d.x = region.x0 + gap - b.x0;
            if (back.y > 0.5) d.y = region.y1 - gap - b.y1;
            if (back.y < -0.5) d.y = region.y0 + gap - b.y0;
        }
        shift(r, d);
        items = std::move(r);
        return true;
    }
    return false;
}

double pick(Rng& rng, double lo, double hi, double step) {
    const int n = static_cast<int>(std::round((hi - lo) / step));
    return lo + step * rng.uniform_int(0, n);
}

SceneElement to_element(const Item& it, const Vocabulary& vocab) {
    SceneElement e;
    e.id = it.id;
    e.cls = scene::ElementClass::furniture(*vocab.furniture_index(it.label));
    e.obb = {it.size, {it.pos.x, it.pos.y, it.z}, Heading::from_degrees(90.0 * it.quarter)};
    e.feature = it.feature;
    e.known = scene::kKnownAll;
    return e;
}

std::vector<SceneElement> room_shell(double w, double h, Rng& rng) {
    using scene::ArchLabel;
    auto arch = [](const std::string& id, ArchLabel l, double len, Vec2 c, double deg, double height) {
        SceneElement e;
        e.id = id;
        e.cls = scene::ElementClass::arch(l);
        e.obb = {{len, 0.0, height}, {c.x, c.y, height / 2}, Heading::from_degrees(deg)};
        e.known = scene::kKnownAll;
        return e;
    };
    std::vector<SceneElement> out = {arch("wall_s", ArchLabel::wall, w, {0, -h / 2}, 0, 2.6),
                                     arch("wall_n", ArchLabel::wall, w, {0, h / 2}, 180, 2.6),
                                     arch("wall_w", ArchLabel::wall, h, {-w / 2, 0}, -90, 2.6),
                                     arch("wall_e", ArchLabel::wall, h, {w / 2, 0}, 90, 2.6)};
    const int side = rng.uniform_int(0, 3);
    const double len = side < 2 ? w : h;
    const double off = round_cm(rng.uniform(-len / 2 + 0.7, len / 2 - 0.7));
    const SceneElement& wall = out[static_cast<std::size_t>(side)];
    const Vec2 along{wall.obb.heading.cos(), wall.obb.heading.sin()};
    out.push_back(arch("door", ArchLabel::door, 0.9, wall.obb.translation.xy() + along * off, wall.obb.heading.degrees(), 2.1));
    return out;
}

Scene finish(double w, double h, std::vector<SceneElement> elems, const std::vector<Item>& items, const Vocabulary& vocab,
             const SynthOptions& opts) {
    for (const auto& it : items) elems.push_back(to_element(it, vocab));
    const std::vector<Vec2> poly = {{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}};
    return scene::make_scene(opts.n_max, opts.meters_per_cell, poly, std::move(elems), {opts.grid, opts.grid});
}

enum class Side { front, behind, left, right };

/// Chair at one side of a table (both in the group frame, table at origin
/// facing +y), turned to face the table.
Item seat_at(Item chair, const Item& table, Side side, double gap) {
    const double dy = table.size.y / 2 + gap + chair.size.y / 2;
    const double dx = table.size.x / 2 + gap + chair.size.y / 2;
    switch (side) {
        case Side::front: chair.pos = {0, dy}; chair.quarter = 2; break;
        case Side::behind: chair.pos = {0, -dy}; chair.quarter = 0; break;
        case Side::left: chair.pos = {dx, 0}; chair.quarter = 1; break;
        case Side::right: chair.pos = {-dx, 0}; chair.quarter = 3; break;
    }
    return chair;
}

std::vector<Item> dining_group(const Catalog& cat, const std::vector<Side>& sides, Rng& rng) {
    std::vector<Item> g = {make_item(cat, "table", "dining_table", rng)};
    const Item proto = make_item(cat, "chair", "dining_chair", rng);
    for (std::size_t i = 0; i < sides.size(); ++i) {
        Item c = proto;
        c.id = "chair_" + std::to_string(i);
        g.push_back(seat_at(c, g[0], sides[i], round_cm(rng.uniform(0.02, 0.1))));
    }
    return g;
}

Scene chair_table(const Catalog& cat, Rng& rng, const SynthOptions& opts, bool sides) {
    const auto& vocab = Vocabulary::builtin("living");
    const double w = pick(rng, 3.5, 5.5, 0.5), h = pick(rng, 3.5, 5.5, 0.5);
    auto shell = room_shell(w, h, rng);
    std::vector<Side> chosen = {Side::front};
    if (sides) {
        std::vector<Side> all = {Side::front, Side::behind, Side::left, Side::right};
        rng.shuffle(std::span<Side>(all));
        chosen.assign(all.begin(), all.begin() + rng.uniform_int(1, 2));
    }
    auto g = dining_group(cat, chosen, rng);
    if (!place(g, {-w / 2, -h / 2, w / 2, h / 2}, 0.3, false, rng)) throw Error("preset group does not fit the room");
    return finish(w, h, std::move(shell), g, vocab, opts);
}

std::vector<Item> lounge_group(const Catalog& cat, Rng& rng, bool with_tv, bool with_armchair) {
    Item sofa = make_item(cat, "sofa", "multi_seat_sofa", rng);
    Item ct = make_item(cat, "coffee_table", "coffee_table", rng);
    ct.pos = {0, sofa.size.y / 2 + round_cm(rng.uniform(0.35, 0.5)) + ct.size.y / 2};
    std::vector<Item> g = {sofa, ct};
    if (with_tv) {
        Item tv = make_item(cat, "tv_stand", "tv_stand", rng);
        tv.pos = {0, ct.pos.y + ct.size.y / 2 + round_cm(rng.uniform(1.0, 1.4)) + tv.size.y / 2};
        tv.quarter = 2;
        g.push_back(tv);
    }
    if (with_armchair) {
        Item arm = make_item(cat, "armchair", "armchair", rng);
        arm.pos = {-(ct.size.x / 2 + 0.4 + arm.size.y / 2), ct.pos.y};
        arm.quarter = 3;
        g.push_back(arm);
    }
    return g;
}

Scene sofa_triad(const Catalog& cat, Rng& rng, const SynthOptions& opts) {
    const auto& vocab = Vocabulary::builtin("living");
    const double w = pick(rng, 4.5, 6.0, 0.5), h = pick(rng, 4.5, 6.0, 0.5);
    auto shell = room_shell(w, h, rng);
    auto g = lounge_group(cat, rng, true, false);
    if (!place(g, {-w / 2, -h / 2, w / 2, h / 2}, 0.05, true, rng)) throw Error("preset group does not fit the room");
    return finish(w, h, std::move(shell), g, vocab, opts);
}

Scene bedroom(const Catalog& cat, Rng& rng, const SynthOptions& opts) {
    const auto& vocab = Vocabulary::builtin("bedroom");
    const double w = pick(rng, 3.5, 5.0, 0.5), h = pick(rng, 3.5, 5.0, 0.5);
    auto shell = room_shell(w, h, rng);
    Item bed = make_item(cat, "bed", rng.bernoulli(0.7) ? "double_bed" : "single_bed", rng);
    Item ns = make_item(cat, "nightstand", "nightstand", rng);
    const double gap = round_cm(rng.uniform(0.02, 0.08));
    Item left = ns, right = ns;
    left.id = "nightstand_0";
    right.id = "nightstand_1";
    left.pos = {bed.size.x / 2 + gap + ns.size.x / 2, -bed.size.y / 2 + ns.size.y / 2};
    right.pos = {-left.pos.x, left.pos.y};
    std::vector<Item> g = {bed, left, right};
    if (!place(g, {-w / 2, -h / 2, w / 2, h / 2}, 0.05, true, rng)) throw Error("preset group does not fit the room");
    return finish(w, h, std::move(shell), g, vocab, opts);
}

Scene two_zone(const Catalog& cat, Rng& rng, const SynthOptions& opts) {
    const auto& vocab = Vocabulary::builtin("living");
    const double L = pick(rng, 7.0, 7.5, 0.5), S = pick(rng, 4.5, 5.0, 0.5);
    const bool wide = rng.bernoulli(0.5);
    const double w = wide ? L : S, h = wide ? S : L;
    auto shell = room_shell(w, h, rng);
    auto lounge = lounge_group(cat, rng, false, rng.bernoulli(0.5));
    const std::vector<Side> all = {Side::front, Side::behind, Side::left, Side::right};
    auto dining = dining_group(cat, std::vector<Side>(all.begin(), all.begin() + rng.uniform_int(2, 4)), rng);
    Box2 a{-w / 2, -h / 2, wide ? 0.0 : w / 2, wide ? h / 2 : 0.0};
    Box2 b{wide ? 0.0 : -w / 2, wide ? -h / 2 : 0.0, w / 2, h / 2};
    if (rng.bernoulli(0.5)) std::swap(a, b);
    if (!place(lounge, a, 0.1, false, rng) || !place(dining, b, 0.1, false, rng))
        throw Error("preset group does not fit the room");
    std::vector<Item> items = lounge;
    items.insert(items.end(), dining.begin(), dining.end());
    return finish(w, h, std::move(shell), items, vocab, opts);
}

}  // namespace

const std::vector<std::string>& preset_names() { return kPresets; }

const Vocabulary& preset_vocabulary(std::string_view preset) {
    if (preset == "bedroom") return Vocabulary::builtin("bedroom");
    if (std::find(kPresets.begin(), kPresets.end(), preset) == kPresets.end())
        throw Error("unknown preset '" + std::string(preset) + "'");
    return Vocabulary::builtin("living");
}

Scene synth_scene(std::string_view preset, const Catalog& catalog, Rng& rng, const SynthOptions& opts) {
    if (preset == "chair-table") return chair_table(catalog, rng, opts, false);
    if (preset == "chair-table-sides") return chair_table(catalog, rng, opts, true);
    if (preset == "sofa-triad") return sofa_triad(catalog, rng, opts);
    if (preset == "bedroom") return bedroom(catalog, rng, opts);
    if (preset == "two-zone") return two_zone(catalog, rng, opts);
    throw Error("unknown preset '" + std::string(preset) + "'");
}

std::vector<Scene> synth_corpus(std::string_view preset, const Catalog& catalog, int count, std::uint64_t seed,
                                const SynthOptions& opts) {
    Rng root(seed);
    std::vector<Scene> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        Rng rng = root.fork(static_cast<std::uint64_t>(i));
        out.push_back(synth_scene(preset, catalog, rng, opts));
    }
    return out;
}

}  // namespace caslayout::synth
