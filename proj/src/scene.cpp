#include "caslayout/scene.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "caslayout/errors.hpp"

namespace caslayout::scene {

using json = nlohmann::json;

namespace {

const std::vector<std::string> kLivingLabels = {
    "armchair",       "bookshelf",     "cabinet",        "ceiling_lamp",       "chaise_longue_sofa",
    "chinese_chair",  "coffee_table",  "console_table",  "corner_side_table",  "desk",
    "dining_chair",   "dining_table",  "l_shaped_sofa",  "lazy_sofa",          "lounge_chair",
    "loveseat_sofa",  "multi_seat_sofa", "pendant_lamp", "round_end_table",    "shelf",
    "stool",          "tv_stand",      "wardrobe",       "wine_cabinet"};

const std::vector<std::string> kBedroomLabels = {
    "armchair",    "bookshelf",      "cabinet",    "ceiling_lamp", "chair",        "children_cabinet",
    "coffee_table", "desk",          "double_bed", "dressing_chair", "dressing_table", "kids_bed",
    "nightstand",  "pendant_lamp",   "shelf",      "single_bed",   "sofa",         "stool",
    "table",       "tv_stand",       "wardrobe"};

constexpr std::array<std::string_view, 3> kArchNames = {"wall", "door", "window"};

}  // namespace

std::string_view arch_label_name(int label) { return kArchNames.at(static_cast<std::size_t>(label)); }

std::string_view kind_name(ElementKind kind) {
    switch (kind) {
        case ElementKind::architectural: return "architectural";
        case ElementKind::furniture: return "furniture";
        default: return "empty";
    }
}

Vocabulary::Vocabulary(std::string name, std::vector<std::string> furniture)
    : name_(std::move(name)), furniture_(std::move(furniture)) {
    for (std::size_t i = 0; i < furniture_.size(); ++i)
        for (std::size_t j = i + 1; j < furniture_.size(); ++j)
            if (furniture_[i] == furniture_[j]) throw ParseError("vocabulary", "duplicate label '" + furniture_[i] + "'");
}

const Vocabulary& Vocabulary::builtin(std::string_view name) {
    static const Vocabulary living("living", kLivingLabels);
    static const Vocabulary bedroom("bedroom", kBedroomLabels);
    if (name == "living") return living;
    if (name == "bedroom") return bedroom;
    throw ParseError("vocabulary", "unknown built-in vocabulary '" + std::string(name) + "'");
}

Vocabulary Vocabulary::resolve(const std::string& name_or_path) {
    if (name_or_path == "living" || name_or_path == "bedroom") return builtin(name_or_path);
    std::ifstream in(name_or_path);
    if (!in) throw ParseError("vocabulary", "cannot open '" + name_or_path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("vocabulary", e.what());
    }
    if (!j.is_array()) throw ParseError("vocabulary", "expected a JSON list of labels");
    std::vector<std::string> labels;
    for (const auto& v : j) {
        if (!v.is_string()) throw ParseError("vocabulary", "labels must be strings");
        labels.push_back(v.get<std::string>());
    }
    return Vocabulary(name_or_path, std::move(labels));
}

std::optional<int> Vocabulary::furniture_index(std::string_view label) const {
    for (std::size_t i = 0; i < furniture_.size(); ++i)
        if (furniture_[i] == label) return static_cast<int>(i);
    return std::nullopt;
}

int ElementClass::type_slot(const Vocabulary& vocab) const {
    switch (kind) {
        case ElementKind::architectural: return label;
        case ElementKind::furniture: return kArchLabelCount + label;
        default: return vocab.none_slot();
    }
}

ElementClass ElementClass::from_type_slot(int slot, const Vocabulary& vocab) {
    if (slot < kArchLabelCount) return {ElementKind::architectural, slot};
    if (slot < vocab.none_slot()) return {ElementKind::furniture, slot - kArchLabelCount};
    return none();
}

// ---------------------------------------------------------------------------
// Floor grid

FloorGrid FloorGrid::all_ones(int rows, int cols, double mpc) {
    FloorGrid g;
    g.rows = rows;
    g.cols = cols;
    g.meters_per_cell = mpc;
    g.cells.assign(static_cast<std::size_t>(rows) * cols, 1);
    return g;
}

Vec2 FloorGrid::cell_center(int r, int c) const {
    return {(c + 0.5 - cols / 2.0) * meters_per_cell, (rows / 2.0 - r - 0.5) * meters_per_cell};
}

std::optional<std::pair<int, int>> FloorGrid::cell_of(Vec2 p) const {
    const double fc = p.x / meters_per_cell + cols / 2.0;
    const double fr = rows / 2.0 - p.y / meters_per_cell;
    if (!(fc >= 0.0 && fr >= 0.0)) return std::nullopt;
    const int c = static_cast<int>(fc);
    const int r = static_cast<int>(fr);
    if (c >= cols || r >= rows) return std::nullopt;
    return std::pair{r, c};
}

std::size_t FloorGrid::count() const {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

FloorGrid rasterize_floor(const std::vector<Vec2>& polygon, int rows, int cols, double meters_per_cell) {
    if (polygon.size() < 3) throw GeometryError("floor polygon needs at least 3 vertices");
    if (geometry::polygon_area(polygon) <= 0.0) throw GeometryError("floor polygon has zero area");
    if (rows <= 0 || cols <= 0 || !(meters_per_cell > 0.0)) throw GeometryError("invalid floor grid dimensions");
    FloorGrid g = FloorGrid::all_ones(rows, cols, meters_per_cell);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) g.at(r, c) = geometry::point_in_polygon(polygon, g.cell_center(r, c)) ? 1 : 0;
    return g;
}

// ---------------------------------------------------------------------------
// Scene

int Scene::m() const {
    return static_cast<int>(std::count_if(elements.begin(), elements.end(), [](const auto& e) { return e.is_arch(); }));
}

int Scene::n() const {
    return static_cast<int>(
        std::count_if(elements.begin(), elements.end(), [](const auto& e) { return e.is_furniture(); }));
}

const SceneElement* Scene::find(std::string_view id) const {
    for (const auto& e : elements)
        if (!e.is_empty() && e.id == id) return &e;
    return nullptr;
}

SceneElement* Scene::find(std::string_view id) {
    for (auto& e : elements)
        if (!e.is_empty() && e.id == id) return &e;
    return nullptr;
}

int Scene::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < elements.size(); ++i)
        if (!elements[i].is_empty() && elements[i].id == id) return static_cast<int>(i);
    return -1;
}

namespace {

Vec2 bbox_center(const std::vector<Vec2>& poly) {
    if (poly.empty()) return {};
    double x0 = poly[0].x, x1 = poly[0].x, y0 = poly[0].y, y1 = poly[0].y;
    for (Vec2 p : poly) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1)};
}

SceneElement empty_element(int pe) {
    SceneElement e;
    e.obb = Obb{};
    e.pe = pe;
    return e;
}

}  // namespace

Scene make_scene(int n_max, double meters_per_cell, std::vector<Vec2> floor_polygon,
                 std::vector<SceneElement> elements, const SceneOptions& opts) {
    if (n_max <= 0) throw CapacityError("n_max must be positive");
    if (static_cast<int>(elements.size()) > n_max)
        throw CapacityError("scene has " + std::to_string(elements.size()) + " elements but n_max is " +
                            std::to_string(n_max));
    Scene s;
    s.n_max = n_max;
    s.floor = floor_polygon.empty() ? FloorGrid::all_ones(opts.grid_rows, opts.grid_cols, meters_per_cell)
                                    : rasterize_floor(floor_polygon, opts.grid_rows, opts.grid_cols, meters_per_cell);
    s.room_center = bbox_center(floor_polygon);
    s.floor_polygon = std::move(floor_polygon);
    s.elements = std::move(elements);
    for (std::size_t i = 0; i < s.elements.size(); ++i) s.elements[i].pe = static_cast<int>(i);
    while (static_cast<int>(s.elements.size()) < n_max) s.elements.push_back(empty_element(static_cast<int>(s.elements.size())));
    return s;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ParseError(path, msg); }

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            fail(path + "." + it.key(), "unknown field");
    }
}

double get_number(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.contains(key)) fail(path + "." + key, "missing field");
    const auto& v = obj.at(key);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

std::vector<double> get_numbers(const json& v, const std::string& path, std::size_t expected) {
    if (!v.is_array()) fail(path, "expected an array");
    if (expected != 0 && v.size() != expected)
        fail(path, "expected " + std::to_string(expected) + " values, got " + std::to_string(v.size()));
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) fail(path + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

}  // namespace

Scene load_scene(std::string_view json_text, const Vocabulary& vocab, const SceneOptions& opts) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail("$", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) fail("$", "expected an object");
    check_keys(doc, "$", {"n_max", "meters_per_cell", "grid", "floor_polygon", "elements"});
    SceneOptions grid = opts;
    if (doc.contains("grid")) {
        const auto g = get_numbers(doc["grid"], "$.grid", 2);
        if (g[0] < 1 || g[1] < 1 || g[0] != std::floor(g[0]) || g[1] != std::floor(g[1]))
            fail("$.grid", "expected two positive integers");
        grid.grid_rows = static_cast<int>(g[0]);
        grid.grid_cols = static_cast<int>(g[1]);
    }
    if (!doc.contains("n_max") || !doc["n_max"].is_number_integer()) fail("$.n_max", "expected an integer");
    const int n_max = doc["n_max"].get<int>();
    const double mpc = get_number(doc, "meters_per_cell", "$");
    if (!(mpc > 0.0)) fail("$.meters_per_cell", "must be positive");

    std::vector<Vec2> polygon;
    if (doc.contains("floor_polygon")) {
        const auto& fp = doc["floor_polygon"];
        if (!fp.is_array()) fail("$.floor_polygon", "expected an array");
        for (std::size_t i = 0; i < fp.size(); ++i) {
            const auto xy = get_numbers(fp[i], "$.floor_polygon[" + std::to_string(i) + "]", 2);
            polygon.push_back({xy[0], xy[1]});
        }
    }

    if (!doc.contains("elements") || !doc["elements"].is_array()) fail("$.elements", "expected an array");
    const auto& elems = doc["elements"];
    if (n_max <= 0) fail("$.n_max", "must be positive");
    if (static_cast<int>(elems.size()) > n_max)
        throw CapacityError("$.elements: " + std::to_string(elems.size()) + " elements exceed n_max " +
                            std::to_string(n_max));

    std::vector<SceneElement> out;
    for (std::size_t i = 0; i < elems.size(); ++i) {
        const std::string path = "$.elements[" + std::to_string(i) + "]";
        const auto& e = elems[i];
        if (!e.is_object()) fail(path, "expected an object");
        check_keys(e, path, {"id", "kind", "label", "size", "translation", "rotation_deg", "feature"});
        SceneElement el;
        if (!e.contains("id") || !e["id"].is_string()) fail(path + ".id", "expected a string");
        el.id = e["id"].get<std::string>();
        if (el.id.empty()) fail(path + ".id", "must not be empty");
        for (const auto& prev : out)
            if (prev.id == el.id) fail(path + ".id", "duplicate id '" + el.id + "'");
        if (!e.contains("kind") || !e["kind"].is_string()) fail(path + ".kind", "expected a string");
        if (!e.contains("label") || !e["label"].is_string()) fail(path + ".label", "expected a string");
        const std::string kind = e["kind"].get<std::string>();
        const std::string label = e["label"].get<std::string>();
        if (kind == "architectural") {
            auto it = std::find(kArchNames.begin(), kArchNames.end(), label);
            if (it == kArchNames.end()) fail(path + ".label", "unknown architectural label '" + label + "'");
            el.cls = {ElementKind::architectural, static_cast<int>(it - kArchNames.begin())};
        } else if (kind == "furniture") {
            auto idx = vocab.furniture_index(label);
            if (!idx) fail(path + ".label", "unknown furniture label '" + label + "'");
            el.cls = ElementClass::furniture(*idx);
        } else {
            fail(path + ".kind", "expected 'architectural' or 'furniture', got '" + kind + "'");
        }
        if (!e.contains("size")) fail(path + ".size", "missing field");
        if (!e.contains("translation")) fail(path + ".translation", "missing field");
        const auto sz = get_numbers(e["size"], path + ".size", 3);
        const auto tr = get_numbers(e["translation"], path + ".translation", 3);
        const double deg = get_number(e, "rotation_deg", path);
        if (!std::isfinite(deg)) fail(path + ".rotation_deg", "must be finite");
        const bool arch = el.is_arch();
        if (!(sz[0] > 0.0) || !(sz[2] > 0.0) || !(arch ? sz[1] >= 0.0 : sz[1] > 0.0))
            fail(path + ".size", arch ? "length and height must be positive" : "all sizes must be positive");
        el.obb.size = {sz[0], sz[1], sz[2]};
        el.obb.translation = {tr[0], tr[1], tr[2]};
        el.obb.heading = geometry::Heading::from_degrees(deg);
        el.known = kKnownType | kKnownSize | kKnownPlacement;
        if (e.contains("feature")) {
            el.feature = get_numbers(e["feature"], path + ".feature", kFeatureDim);
            el.known |= kKnownFeature;
        }
        out.push_back(std::move(el));
    }
    try {
        return make_scene(n_max, mpc, std::move(polygon), std::move(out), grid);
    } catch (const GeometryError& g) {
        fail("$.floor_polygon", g.what());
    }
}

std::string save_scene(const Scene& scene, const Vocabulary& vocab) {
    json doc = json::object();
    doc["n_max"] = scene.n_max;
    doc["meters_per_cell"] = scene.floor.meters_per_cell;
    doc["grid"] = {scene.floor.rows, scene.floor.cols};
    json poly = json::array();
    for (Vec2 p : scene.floor_polygon) poly.push_back({p.x, p.y});
    doc["floor_polygon"] = poly;
    json elems = json::array();
    for (const auto& e : scene.elements) {
        if (e.is_empty()) continue;
        json j = json::object();
        j["id"] = e.id;
        j["kind"] = std::string(kind_name(e.cls.kind));
        j["label"] = e.is_arch() ? std::string(arch_label_name(e.cls.label)) : vocab.furniture_label(e.cls.label);
        j["size"] = {e.obb.size.x, e.obb.size.y, e.obb.size.z};
        j["translation"] = {e.obb.translation.x, e.obb.translation.y, e.obb.translation.z};
        j["rotation_deg"] = e.obb.heading.degrees();
        if (e.known & kKnownFeature) j["feature"] = e.feature;
        elems.push_back(std::move(j));
    }
    doc["elements"] = elems;
    return doc.dump(2) + "\n";
}

Scene load_scene_file(const std::string& path, const Vocabulary& vocab, const SceneOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open scene file");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scene(ss.str(), vocab, opts);
}

void save_scene_file(const Scene& scene, const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << save_scene(scene, vocab);
}

Scene compacted(const Scene& scene) {
    Scene s = scene;
    std::stable_partition(s.elements.begin(), s.elements.end(), [](const auto& e) { return !e.is_empty(); });
    for (std::size_t i = 0; i < s.elements.size(); ++i) s.elements[i].pe = static_cast<int>(i);
    return s;
}

// ---------------------------------------------------------------------------
// Stage vectors

FieldSet stage_layout(int stage) {
    FieldSet f;
    f.set(Field::type);
    f.set(Field::size);
    f.set(Field::translation);
    f.set(Field::rotation);
    if (stage == 2) f.set(Field::feature);
    if (stage == 3 || stage == 4) f.set(Field::latent);
    return f;
}

FieldSet stage_targets(int stage) {
    FieldSet f;
    switch (stage) {
        case 1: f.set(Field::type); break;
        case 2:
            f.set(Field::size);
            f.set(Field::feature);
            break;
        case 3: f.set(Field::latent); break;
        case 4:
            f.set(Field::translation);
            f.set(Field::rotation);
            break;
        default: throw StagingError("stage", "stage must be 1..4, got " + std::to_string(stage));
    }
    return f;
}

namespace {

void fill_values(StageVector& v, const SceneElement& e, const Vocabulary& vocab, FieldSet which,
                 const RelationLatents* latents, int slot) {
    if (which.has(Field::type)) {
        std::fill(v.type.begin(), v.type.end(), 0.0);
        v.type[static_cast<std::size_t>(e.cls.type_slot(vocab))] = 1.0;
    }
    if (which.has(Field::feature) && !v.feature.empty()) v.feature = e.feature;
    if (which.has(Field::size)) v.size = {e.obb.size.x, e.obb.size.y, e.obb.size.z};
    if (which.has(Field::translation)) v.translation = {e.obb.translation.x, e.obb.translation.y, e.obb.translation.z};
    if (which.has(Field::rotation)) v.rotation = {e.obb.heading.cos(), e.obb.heading.sin()};
    if (which.has(Field::latent) && !v.latent.empty()) v.latent = (*latents)[static_cast<std::size_t>(slot)];
}

std::vector<StageVector> build(const Scene& scene, int stage, const Vocabulary& vocab, const RelationLatents* latents,
                               bool ground_truth) {
    const FieldSet layout = stage_layout(stage);
    const FieldSet targets = stage_targets(stage);
    const bool needs_latents = stage == 4 || (ground_truth && stage == 3);
    if (needs_latents) {
        if (latents == nullptr) throw StagingError("latent", "stage " + std::to_string(stage) + " needs relation latents");
        if (latents->size() != scene.elements.size())
            throw StagingError("latent", "latent count does not match scene slots");
    }
    std::vector<StageVector> out;
    for (std::size_t i = 0; i < scene.elements.size(); ++i) {
        const auto& e = scene.elements[i];
        if (stage > 1 && e.is_empty()) continue;
        StageVector v;
        v.slot = static_cast<int>(i);
        v.pe = e.pe;
        v.kind = e.cls.kind;
        v.type.assign(static_cast<std::size_t>(vocab.type_width()), 0.0);
        if (layout.has(Field::feature)) v.feature.assign(kFeatureDim, 0.0);
        if (layout.has(Field::latent)) v.latent.assign(kLatentDim, 0.0);
        const int slot = static_cast<int>(i);
        if (needs_latents && layout.has(Field::latent) && (*latents)[i].size() != static_cast<std::size_t>(kLatentDim))
            throw StagingError("latent", "missing relation latent for element '" + e.id + "'");

        FieldSet known;
        FieldSet target;
        if (e.is_arch()) {
            known.set(Field::type);
            known.set(Field::size);
            known.set(Field::translation);
            known.set(Field::rotation);
            if (stage == 3) target.set(Field::latent);
            if (stage == 4) known.set(Field::latent);
        } else if (e.is_furniture() && e.conditioned) {
            known.set(Field::type);
            if (e.known & kKnownSize) known.set(Field::size);
            if (layout.has(Field::feature) && (e.known & kKnownFeature)) known.set(Field::feature);
            if (e.known & kKnownPlacement) {
                known.set(Field::translation);
                known.set(Field::rotation);
            }
            if (stage == 3) target.set(Field::latent);
            if (stage == 4) known.set(Field::latent);
            // Conditioned items still need whatever this stage generates.
            for (Field f : {Field::size, Field::feature, Field::translation, Field::rotation})
                if (targets.has(f) && layout.has(f) && !known.has(f)) target.set(f);
        } else {
            // free furniture or empty slot
            if (stage == 1) {
                target.set(Field::type);
            } else {
                known.set(Field::type);
                if (stage >= 3) {
                    if (!(e.known & kKnownSize))
                        throw StagingError("size", "element '" + e.id + "' has no size from stage 2");
                    known.set(Field::size);
                }
                if (stage == 4) known.set(Field::latent);
                for (Field f : {Field::size, Field::feature, Field::translation, Field::rotation, Field::latent})
                    if (targets.has(f) && layout.has(f)) target.set(f);
            }
        }
        v.known = known;
        v.target = target;
        fill_values(v, e, vocab, known, latents, slot);
        if (ground_truth) fill_values(v, e, vocab, target, latents, slot);
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace

std::vector<StageVector> encode_stage(const Scene& scene, int stage, const Vocabulary& vocab,
                                      const RelationLatents* latents) {
    stage_targets(stage);  // validates stage
    return build(scene, stage, vocab, latents, false);
}

std::vector<StageVector> stage_ground_truth(const Scene& scene, int stage, const Vocabulary& vocab,
                                            const RelationLatents* latents) {
    stage_targets(stage);
    return build(scene, stage, vocab, latents, true);
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

Vec2 rotate_point(Vec2 p, int k) {
    for (int i = 0; i < k; ++i) p = geometry::quarter_turn(p);
    return p;
}

FloorGrid rotate_grid(const FloorGrid& g, int k) {
    if (k == 0) return g;
    if (g.rows != g.cols) throw GeometryError("quarter-turn rotation needs a square floor grid");
    FloorGrid out = g;
    const int n = g.rows;
    FloorGrid cur = g;
    for (int t = 0; t < k; ++t) {
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) out.at(n - 1 - c, r) = cur.at(r, c);
        cur = out;
    }
    return cur;
}

}  // namespace

Scene rotate_quarter_turns(const Scene& scene, int k) {
    k = ((k % 4) + 4) % 4;
    Scene s = scene;
    for (auto& p : s.floor_polygon) p = rotate_point(p, k);
    s.room_center = rotate_point(s.room_center, k);
    s.floor = rotate_grid(scene.floor, k);
    for (auto& e : s.elements) {
        if (e.is_empty()) continue;
        const Vec2 t = rotate_point(e.obb.translation.xy(), k);
        e.obb.translation.x = t.x;
        e.obb.translation.y = t.y;
        e.obb.heading = e.obb.heading.rotated_quarter_turns(k);
    }
    return s;
}

Scene permute_slots(const Scene& scene, const std::vector<int>& order) {
    if (order.size() != scene.elements.size()) throw Error("permutation length does not match n_max");
    std::vector<bool> seen(order.size(), false);
    Scene s = scene;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto src = static_cast<std::size_t>(order[i]);
        if (src >= order.size() || seen[src]) throw Error("invalid permutation");
        seen[src] = true;
        s.elements[i] = scene.elements[src];
        s.elements[i].pe = static_cast<int>(i);
    }
    return s;
}

Scene mask_architecture(const Scene& scene, const std::vector<std::string>& ids) {
    Scene s = scene;
    for (auto& e : s.elements) {
        if (!e.is_arch() || std::find(ids.begin(), ids.end(), e.id) == ids.end()) continue;
        const int pe = e.pe;
        e = SceneElement{};
        e.pe = pe;
    }
    return s;
}

Scene drop_floor_plan(const Scene& scene) {
    std::vector<std::string> arch;
    for (const auto& e : scene.elements)
        if (e.is_arch()) arch.push_back(e.id);
    Scene s = mask_architecture(scene, arch);
    s.floor_polygon.clear();
    s.floor = FloorGrid::all_ones(scene.floor.rows, scene.floor.cols, scene.floor.meters_per_cell);
    return s;
}

Scene mark_conditioned(const Scene& scene, const std::vector<std::string>& ids) {
    Scene s = scene;
    for (const auto& id : ids) {
        auto* e = s.find(id);
        if (e == nullptr || !e->is_furniture()) throw Error("cannot condition on unknown furniture '" + id + "'");
        e->conditioned = true;
    }
    return s;
}

Scene augment(const Scene& scene, const AugmentPolicy& policy, Rng& rng) {
    Scene s = scene;
    if (policy.rotate) s = rotate_quarter_turns(s, rng.uniform_int(0, 3));
    if (policy.floor_free_prob > 0.0 && rng.bernoulli(policy.floor_free_prob)) {
        s = drop_floor_plan(s);
    } else if (policy.arch_mask_prob > 0.0) {
        std::vector<std::string> masked;
        for (const auto& e : s.elements)
            if (e.is_arch() && rng.bernoulli(policy.arch_mask_prob)) masked.push_back(e.id);
        s = mask_architecture(s, masked);
    }
    if (policy.completion_prob > 0.0 && rng.bernoulli(policy.completion_prob)) {
        std::vector<std::string> chosen;
        for (const auto& e : s.elements)
            if (e.is_furniture() && rng.bernoulli(0.5)) chosen.push_back(e.id);
        s = mark_conditioned(s, chosen);
    }
    if (policy.permute) {
        std::vector<int> order(s.elements.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        rng.shuffle(std::span<int>(order));
        s = permute_slots(s, order);
    }
    return s;
}

}  // namespace caslayout::scene
