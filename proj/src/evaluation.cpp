#include "caslayout/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "caslayout/errors.hpp"

namespace caslayout::eval {

using json = nlohmann::json;
using geometry::Vec2;
using scene::FloorGrid;
using scene::SceneElement;

// ---------------------------------------------------------------------------
// Distribution metrics

double kl_counts(const std::vector<double>& p, const std::vector<double>& q, double alpha) {
    if (p.size() != q.size() || p.empty()) throw Error("KL needs two count vectors of the same non-zero length");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sp += p[i] + alpha;
        sq += q[i] + alpha;
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double a = (p[i] + alpha) / sp;
        const double b = (q[i] + alpha) / sq;
        if (a > 0.0) kl += a * std::log(a / b);
    }
    return std::max(0.0, kl);
}

namespace {

std::vector<double> type_counts(std::span<const Scene> scenes, const Vocabulary& vocab) {
    std::vector<double> c(static_cast<std::size_t>(vocab.furniture_count()), 0.0);
    for (const auto& s : scenes)
        for (const auto& e : s.elements)
            if (e.is_furniture()) c.at(static_cast<std::size_t>(e.cls.label)) += 1.0;
    return c;
}

}  // namespace

double tkl(std::span<const Scene> generated, std::span<const Scene> reference, const Vocabulary& vocab) {
    if (generated.empty() || reference.empty()) throw Error("TKL needs non-empty generated and reference sets");
    return kl_counts(type_counts(generated, vocab), type_counts(reference, vocab));
}

double scene_iou(const Scene& scene) {
    std::vector<const SceneElement*> f;
    for (const auto& e : scene.elements)
        if (e.is_furniture()) f.push_back(&e);
    if (f.size() < 2) return 0.0;
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t j = i + 1; j < f.size(); ++j) {
            sum += geometry::iou_3d(f[i]->obb, f[j]->obb);
            ++pairs;
        }
    return 100.0 * sum / pairs;
}

// ---------------------------------------------------------------------------
// Relation satisfaction

double Satisfaction::percent(Category c) const {
    const auto i = static_cast<std::size_t>(c);
    return total[i] == 0 ? 100.0 : 100.0 * matched[i] / total[i];
}

double Satisfaction::overall() const {
    int t = 0, m = 0;
    for (std::size_t i = 0; i < total.size(); ++i) {
        t += total[i];
        m += matched[i];
    }
    return t == 0 ? 100.0 : 100.0 * m / t;
}

Satisfaction& Satisfaction::operator+=(const Satisfaction& o) {
    for (std::size_t i = 0; i < total.size(); ++i) {
        total[i] += o.total[i];
        matched[i] += o.matched[i];
    }
    return *this;
}

Satisfaction relation_satisfaction(const Scene& scene, const RelationGraph& target) {
    Satisfaction s;
    if (target.edges.empty()) return s;
    for (const auto& e : target.edges)
        for (const auto* id : {&e.src, &e.dst})
            if (const auto* el = scene.find(*id); el == nullptr || el->is_empty())
                throw Error("target edge names unknown element '" + *id + "'");
    const RelationGraph got = relations::extract_dense(scene);
    for (const auto& e : target.edges) {
        const auto i = static_cast<std::size_t>(e.category);
        ++s.total[i];
        s.matched[i] += got.has_edge(e) ? 1 : 0;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Floor occupancy

namespace {

struct CellRange {
    int r0, r1, c0, c1;  // inclusive, clamped to the grid
    bool clipped;        // footprint reaches beyond the grid
};

CellRange cell_range(const FloorGrid& g, const geometry::Obb& o) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : o.corners()) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const double mpc = g.meters_per_cell;
    const double half_w = 0.5 * g.cols * mpc, half_h = 0.5 * g.rows * mpc;
    CellRange r{};
    r.clipped = xmin < -half_w || xmax > half_w || ymin < -half_h || ymax > half_h;
    r.c0 = std::clamp(static_cast<int>(std::floor((xmin + half_w) / mpc)), 0, g.cols - 1);
    r.c1 = std::clamp(static_cast<int>(std::floor((xmax + half_w) / mpc)), 0, g.cols - 1);
    r.r0 = std::clamp(static_cast<int>(std::floor((half_h - ymax) / mpc)), 0, g.rows - 1);
    r.r1 = std::clamp(static_cast<int>(std::floor((half_h - ymin) / mpc)), 0, g.rows - 1);
    return r;
}

bool outside_mask(const FloorGrid& g, const SceneElement& e) {
    const auto r = cell_range(g, e.obb);
    if (r.clipped) return true;
    const auto center = g.cell_of(e.obb.center_xy());
    if (!center || g.at(center->first, center->second) == 0) return true;
    for (int row = r.r0; row <= r.r1; ++row)
        for (int col = r.c0; col <= r.c1; ++col)
            if (g.at(row, col) == 0 && geometry::footprint_contains(e.obb, g.cell_center(row, col))) return true;
    return false;
}

}  // namespace

double r_out(const Scene& scene) {
    int n = 0, out = 0;
    for (const auto& e : scene.elements) {
        if (!e.is_furniture()) continue;
        ++n;
        out += outside_mask(scene.floor, e) ? 1 : 0;
    }
    return n == 0 ? 0.0 : 100.0 * out / n;
}

std::vector<std::uint8_t> walkable_cells(const Scene& scene) {
    const auto& g = scene.floor;
    std::vector<std::uint8_t> cells = g.cells;
    for (const auto& e : scene.elements) {
        if (!e.is_furniture()) continue;
        const auto r = cell_range(g, e.obb);
        for (int row = r.r0; row <= r.r1; ++row)
            for (int col = r.c0; col <= r.c1; ++col)
                if (geometry::footprint_contains(e.obb, g.cell_center(row, col)))
                    cells[static_cast<std::size_t>(row) * g.cols + col] = 0;
    }
    return cells;
}

std::vector<std::uint8_t> erode_disc(const std::vector<std::uint8_t>& cells, int rows, int cols, int radius) {
    std::vector<std::pair<int, int>> disc;
    for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc)
            if (dr * dr + dc * dc <= radius * radius) disc.emplace_back(dr, dc);
    std::vector<std::uint8_t> out(cells.size(), 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (cells[static_cast<std::size_t>(r) * cols + c] == 0) continue;
            bool keep = true;
            for (const auto& [dr, dc] : disc) {
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= rows || cc < 0 || cc >= cols || cells[static_cast<std::size_t>(rr) * cols + cc] == 0) {
                    keep = false;
                    break;
                }
            }
            out[static_cast<std::size_t>(r) * cols + c] = keep ? 1 : 0;
        }
    return out;
}

std::pair<std::size_t, std::size_t> largest_component(const std::vector<std::uint8_t>& cells, int rows, int cols) {
    std::vector<int> label(cells.size(), -1);
    std::size_t best = 0, total = 0;
    std::vector<int> stack;
    for (std::size_t start = 0; start < cells.size(); ++start) {
        if (cells[start] == 0 || label[start] >= 0) continue;
        std::size_t size = 0;
        stack.assign(1, static_cast<int>(start));
        label[start] = static_cast<int>(start);
        while (!stack.empty()) {
            const int k = stack.back();
            stack.pop_back();
            ++size;
            const int r = k / cols, c = k % cols;
            const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& p : nb) {
                if (p[0] < 0 || p[0] >= rows || p[1] < 0 || p[1] >= cols) continue;
                const auto q = static_cast<std::size_t>(p[0]) * cols + p[1];
                if (cells[q] == 0 || label[q] >= 0) continue;
                label[q] = static_cast<int>(start);
                stack.push_back(static_cast<int>(q));
            }
        }
        best = std::max(best, size);
        total += size;
    }
    return {best, total};
}

double r_walk(const Scene& scene) {
    const auto& g = scene.floor;
    const int radius = static_cast<int>(std::ceil(0.25 / g.meters_per_cell - 1e-9));
    const auto eroded = erode_disc(walkable_cells(scene), g.rows, g.cols, radius);
    const auto [best, total] = largest_component(eroded, g.rows, g.cols);
    return total == 0 ? 0.0 : static_cast<double>(best) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Palette

namespace {

// Fixed, well-separated colors handed out in label order.
constexpr std::array<Rgb, 24> kColors = {{
    {230, 25, 75},  {60, 180, 75},   {255, 225, 25},  {0, 130, 200},   {245, 130, 48},  {145, 30, 180},
    {70, 240, 240}, {240, 50, 230},  {210, 245, 60},  {250, 190, 212}, {0, 128, 128},   {220, 190, 255},
    {170, 110, 40}, {255, 250, 200}, {128, 0, 0},     {170, 255, 195}, {128, 128, 0},   {255, 215, 180},
    {0, 0, 128},    {100, 100, 100}, {31, 120, 180},  {178, 223, 138}, {251, 154, 153}, {202, 178, 214},
}};

Rgb parse_rgb(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 3) throw ParseError(path, "expected [r, g, b]");
    Rgb c{};
    for (std::size_t i = 0; i < 3; ++i) {
        if (!v[i].is_number_integer() || v[i].get<int>() < 0 || v[i].get<int>() > 255)
            throw ParseError(path, "channels must be integers in [0, 255]");
        c[i] = static_cast<std::uint8_t>(v[i].get<int>());
    }
    return c;
}

json rgb_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }

}  // namespace

Palette Palette::builtin() {
    Palette p;
    std::vector<std::string> all;
    for (const char* v : {"living", "bedroom"})
        for (const auto& l : Vocabulary::builtin(v).furniture()) all.push_back(l);
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) {
        Rgb c = kColors[i % kColors.size()];
        if (i >= kColors.size())
            for (auto& ch : c) ch = static_cast<std::uint8_t>(ch / 2 + 40);
        p.labels[all[i]] = c;
    }
    return p;
}

Palette Palette::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError("$", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("$", "expected an object");
    Palette p;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string path = "$." + it.key();
        if (it.key() == "background") p.background = parse_rgb(*it, path);
        else if (it.key() == "floor") p.floor = parse_rgb(*it, path);
        else if (it.key() == "fallback") p.fallback = parse_rgb(*it, path);
        else if (it.key() == "draw_floor") {
            if (!it->is_boolean()) throw ParseError(path, "expected a boolean");
            p.draw_floor = it->get<bool>();
        } else if (it.key() == "labels") {
            if (!it->is_object()) throw ParseError(path, "expected an object");
            for (auto l = it->begin(); l != it->end(); ++l) p.labels[l.key()] = parse_rgb(*l, path + "." + l.key());
        } else {
            throw ParseError(path, "unknown field");
        }
    }
    return p;
}

Palette Palette::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open palette '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string Palette::to_json() const {
    json l = json::object();
    for (const auto& [k, v] : labels) l[k] = rgb_json(v);
    json j = {{"background", rgb_json(background)},
              {"floor", rgb_json(floor)},
              {"fallback", rgb_json(fallback)},
              {"draw_floor", draw_floor},
              {"labels", l}};
    return j.dump(2);
}

Rgb Palette::color_of(const std::string& label) const {
    const auto it = labels.find(label);
    return it == labels.end() ? fallback : it->second;
}

// ---------------------------------------------------------------------------
// Rendering

Rgb Image::at(int x, int y) const {
    const auto k = (static_cast<std::size_t>(y) * width + x) * 3;
    return {rgb[k], rgb[k + 1], rgb[k + 2]};
}

std::string Image::ppm() const {
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
    return out;
}

Image render_topdown(const Scene& scene, const Vocabulary& vocab, const Palette& palette, int size) {
    if (size < 1) throw Error("image size must be positive");
    Image img;
    img.width = img.height = size;
    img.rgb.resize(static_cast<std::size_t>(size) * size * 3);
    const auto& g = scene.floor;
    const double extent = std::max(g.rows, g.cols) * g.meters_per_cell;
    const double px = extent / size;
    auto world = [&](int x, int y) { return Vec2{(x + 0.5) * px - 0.5 * extent, 0.5 * extent - (y + 0.5) * px}; };
    auto put = [&](int x, int y, const Rgb& c) {
        const auto k = (static_cast<std::size_t>(y) * size + x) * 3;
        img.rgb[k] = c[0];
        img.rgb[k + 1] = c[1];
        img.rgb[k + 2] = c[2];
    };
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            bool floor = false;
            if (palette.draw_floor) {
                const auto cell = g.cell_of(world(x, y));
                floor = cell && g.at(cell->first, cell->second) != 0;
            }
            put(x, y, floor ? palette.floor : palette.background);
        }

    std::vector<const SceneElement*> order;
    for (const auto& e : scene.elements)
        if (e.is_furniture()) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const SceneElement* a, const SceneElement* b) {
        if (a->obb.translation.z != b->obb.translation.z) return a->obb.translation.z < b->obb.translation.z;
        return a->id < b->id;
    });
    for (const auto* e : order) {
        const Rgb c = palette.color_of(vocab.furniture_label(e->cls.label));
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& p : e->obb.corners()) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        const int x0 = std::clamp(static_cast<int>(std::floor((xmin + 0.5 * extent) / px)), 0, size - 1);
        const int x1 = std::clamp(static_cast<int>(std::floor((xmax + 0.5 * extent) / px)), 0, size - 1);
        const int y0 = std::clamp(static_cast<int>(std::floor((0.5 * extent - ymax) / px)), 0, size - 1);
        const int y1 = std::clamp(static_cast<int>(std::floor((0.5 * extent - ymin) / px)), 0, size - 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (geometry::footprint_contains(e->obb, world(x, y))) put(x, y, c);
    }
    return img;
}

}  // namespace caslayout::eval
