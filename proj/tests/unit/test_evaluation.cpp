#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../support/fixtures.hpp"
#include "caslayout/errors.hpp"
#include "caslayout/evaluation.hpp"
#include "caslayout/synth.hpp"

using namespace caslayout;
using namespace caslayout::eval;
using fixtures::furniture;
using fixtures::room;
using relations::Category;

namespace {

const auto& living() { return scene::Vocabulary::builtin("living"); }

std::vector<scene::Scene> corpus(const char* preset, int count, std::uint64_t seed) {
    const auto& vocab = synth::preset_vocabulary(preset);
    return synth::synth_corpus(preset, synth::Catalog::builtin(vocab), count, seed);
}

scene::Scene without(const scene::Scene& s, const std::string& id) {
    scene::Scene out = s;
    auto* e = out.find(id);
    const int pe = e->pe;
    *e = scene::SceneElement{};
    e->pe = pe;
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_golden(const std::string& name, const std::string& bytes) {
    const std::string path = std::string(CASLAYOUT_GOLDEN_DIR) + "/" + name;
    if (std::getenv("CASLAYOUT_UPDATE_GOLDEN") != nullptr) std::ofstream(path, std::ios::binary) << bytes;
    const auto golden = read_file(path);
    ASSERT_FALSE(golden.empty()) << "missing golden file " << path;
    EXPECT_TRUE(golden == bytes) << name << " differs from its golden file";
}

}  // namespace

TEST(Tkl, ClosedForm) {
    const double expect = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    EXPECT_NEAR(kl_counts({5, 5}, {9, 1}), expect, 1e-5);
    EXPECT_NEAR(kl_counts({5, 5}, {9, 1}, 0.0), expect, 1e-15);
    EXPECT_EQ(kl_counts({3, 0, 1}, {3, 0, 1}), 0.0);
}

TEST(Tkl, NonNegativeAndZeroOnIdenticalSets) {
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        std::vector<double> p(6), q(6);
        for (auto& x : p) x = rng.uniform_int(0, 5);
        for (auto& x : q) x = rng.uniform_int(0, 5);
        if (p == std::vector<double>(6, 0.0) || q == std::vector<double>(6, 0.0)) continue;
        EXPECT_GE(kl_counts(p, q), 0.0);
    }
    const auto a = corpus("two-zone", 20, 1);
    EXPECT_EQ(tkl(a, a, living()), 0.0);
    EXPECT_GT(tkl(a, corpus("chair-table", 20, 1), living()), 0.0);
    EXPECT_THROW(tkl({}, a, living()), Error);
}

TEST(SceneIou, Fixtures) {
    const auto disjoint = room(6, 6, {furniture("a", "stool", {0.5, 0.5, 0.5}, {-1, 0, 0.25}, 0),
                                      furniture("b", "stool", {0.5, 0.5, 0.5}, {1, 0, 0.25}, 30)});
    EXPECT_EQ(scene_iou(disjoint), 0.0);
    const auto stacked = room(6, 6, {furniture("a", "stool", {0.5, 0.5, 0.5}, {0, 0, 0.25}, 0),
                                     furniture("b", "stool", {0.5, 0.5, 0.5}, {0, 0, 0.25}, 0)});
    EXPECT_NEAR(scene_iou(stacked), 100.0, 1e-12);
    // A and B share half of A; C touches nothing: IoUs 1/3, 0, 0.
    const auto three = room(6, 6, {furniture("a", "desk", {2, 1, 1}, {0, 0, 0.5}, 0),
                                   furniture("b", "desk", {2, 1, 1}, {1, 0, 0.5}, 0),
                                   furniture("c", "stool", {0.5, 0.5, 0.5}, {-2, 2, 0.25}, 0)});
    EXPECT_NEAR(scene_iou(three), 100.0 / 9.0, 1e-9);
    EXPECT_EQ(scene_iou(room(6, 6, {furniture("a", "stool", {0.5, 0.5, 0.5}, {0, 0, 0.25}, 0)})), 0.0);
}

TEST(Satisfaction, RoundTripLaw) {
    for (const auto& p : synth::preset_names())
        for (const auto& s : corpus(p.c_str(), 15, 2)) {
            const auto sat = relation_satisfaction(s, relations::extract_dense(s));
            for (int c = 0; c < relations::kCategoryCount; ++c) EXPECT_EQ(sat.percent(static_cast<Category>(c)), 100.0);
        }
}

TEST(Satisfaction, EmptyViolatedAndUnknown) {
    const auto s = corpus("chair-table", 1, 4)[0];
    const auto empty = relation_satisfaction(s, {});
    EXPECT_EQ(empty.overall(), 100.0);
    EXPECT_EQ(empty.percent(Category::direction), 100.0);

    RelationGraph g;
    g.edges.push_back({"chair_0", "table", Category::direction, static_cast<int>(relations::Direction::front)});
    g.edges.push_back({"chair_0", "table", Category::direction, static_cast<int>(relations::Direction::behind)});
    g.edges.push_back({"chair_0", "table", Category::distance, static_cast<int>(relations::DistanceBand::attach_to)});
    const auto sat = relation_satisfaction(s, g);
    EXPECT_EQ(sat.percent(Category::direction), 50.0);
    EXPECT_EQ(sat.percent(Category::distance), 100.0);
    EXPECT_NEAR(sat.overall(), 200.0 / 3.0, 1e-12);

    g.edges.push_back({"ghost", "table", Category::direction, 0});
    EXPECT_THROW(relation_satisfaction(s, g), Error);
}

TEST(Physical, EmptyRoom) {
    const auto s = room(4, 3, {});
    EXPECT_EQ(r_out(s), 0.0);
    EXPECT_EQ(r_walk(s), 1.0);
}

TEST(Physical, CorridorSplitByBox) {
    // 1.5 m corridor, 0.8 m box in the middle: 0.35 m gaps on both sides,
    // under the 0.5 m width rule, so the two equal halves disconnect.
    const auto s = room(6, 1.5, {furniture("box", "cabinet", {0.8, 0.8, 1.0}, {0, 0, 0.5}, 0)});
    const auto free = walkable_cells(s);
    const auto [best_free, total_free] = largest_component(free, s.floor.rows, s.floor.cols);
    EXPECT_EQ(best_free, total_free);  // connected before erosion
    EXPECT_NEAR(r_walk(s), 0.5, 1e-12);

    const auto wide = room(6, 3.0, {furniture("box", "cabinet", {0.8, 0.8, 1.0}, {0, 0, 0.5}, 0)});
    EXPECT_EQ(r_walk(wide), 1.0);
}

TEST(Physical, OutOfBoundsBox) {
    const auto s = room(4, 3, {furniture("in", "stool", {0.5, 0.5, 0.5}, {0, 0, 0.25}, 0),
                               furniture("out", "stool", {0.5, 0.5, 0.5}, {3.5, 0, 0.25}, 0)});
    EXPECT_EQ(r_out(s), 50.0);
    const auto straddle = room(4, 3, {furniture("x", "desk", {1.0, 0.5, 0.7}, {2.0, 0, 0.35}, 0)});
    EXPECT_EQ(r_out(straddle), 100.0);
    const auto beyond = room(4, 3, {furniture("x", "desk", {1.0, 0.5, 0.7}, {20.0, 0, 0.35}, 0)});
    EXPECT_EQ(r_out(beyond), 100.0);
}

TEST(Physical, ErosionAndComponentsByHand) {
    // 5x5 ones eroded with radius 1 leaves the 3x3 interior.
    std::vector<std::uint8_t> c(25, 1);
    const auto e = erode_disc(c, 5, 5, 1);
    EXPECT_EQ(std::count(e.begin(), e.end(), 1), 9);
    EXPECT_EQ(e[12], 1);
    EXPECT_EQ(e[0], 0);
    const std::vector<std::uint8_t> two = {1, 1, 0, 1, 1, 0, 0, 0, 1};
    EXPECT_EQ(largest_component(two, 3, 3), (std::pair<std::size_t, std::size_t>{4, 5}));
}

TEST(Physical, RangesOnSyntheticScenes) {
    for (const auto& p : synth::preset_names())
        for (const auto& s : corpus(p.c_str(), 10, 5)) {
            const double w = r_walk(s), o = r_out(s);
            EXPECT_GE(w, 0.0);
            EXPECT_LE(w, 1.0);
            EXPECT_EQ(o, 0.0) << p;  // presets keep furniture inside the room
            EXPECT_EQ(scene_iou(s), 0.0) << p;
        }
}

TEST(Physical, RemovingItemNeverShrinksLargestWalkableArea) {
    for (const auto& p : synth::preset_names())
        for (const auto& s : corpus(p.c_str(), 20, 11)) {
            const int radius = static_cast<int>(std::ceil(0.25 / s.floor.meters_per_cell - 1e-9));
            auto area = [&](const scene::Scene& x) {
                return largest_component(erode_disc(walkable_cells(x), x.floor.rows, x.floor.cols, radius),
                                         x.floor.rows, x.floor.cols)
                    .first;
            };
            const auto base = area(s);
            for (const auto& e : s.elements)
                if (e.is_furniture()) EXPECT_GE(area(without(s, e.id)), base) << p << " " << e.id;
        }
}

TEST(Physical, RemovingOnlyItemNeverLowersWalk) {
    for (const auto& s : corpus("chair-table", 10, 6)) {
        auto one = without(s, "chair_0");
        EXPECT_LE(r_walk(one), r_walk(without(one, "table")));
    }
}

TEST(Render, EmptySceneGolden) {
    const auto s = room(4, 3, {});
    const auto img = render_topdown(s, living(), Palette::builtin());
    EXPECT_EQ(img.width, 256);
    EXPECT_EQ(img.height, 256);
    check_golden("render_empty.ppm", img.ppm());
    auto p = Palette::builtin();
    p.draw_floor = false;
    const auto bare = render_topdown(s, living(), p);
    for (int y = 0; y < 256; y += 17)
        for (int x = 0; x < 256; x += 13) EXPECT_EQ(bare.at(x, y), p.background);
}

TEST(Render, SingleBoxGolden) {
    const auto s = room(4, 3, {furniture("t", "dining_table", {1.6, 0.8, 0.75}, {0.5, -0.25, 0.375}, 0)});
    const auto pal = Palette::builtin();
    const auto img = render_topdown(s, living(), pal);
    check_golden("render_box.ppm", img.ppm());
    // 8 m extent over 256 px: 32 px per meter; box spans x in [-0.3, 1.3], y in [-0.65, 0.15].
    const Rgb c = pal.color_of("dining_table");
    EXPECT_EQ(img.at(128 + 16, 128 + 8), c);
    EXPECT_EQ(img.at(128 - 9 + 1, 128 - 4 + 1), c);
    EXPECT_EQ(img.at(128 - 11, 128), pal.floor);
    EXPECT_EQ(img.at(2, 2), pal.background);
    EXPECT_EQ(render_topdown(s, living(), pal).ppm(), img.ppm());
}

TEST(Render, PermutationInvariant) {
    const auto s = corpus("two-zone", 1, 3)[0];
    std::vector<int> order(s.elements.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(order.size() - 1 - i);
    const auto p = scene::permute_slots(s, order);
    EXPECT_EQ(render_topdown(s, living(), Palette::builtin()).ppm(), render_topdown(p, living(), Palette::builtin()).ppm());
}

TEST(Render, PaletteJson) {
    const auto p = Palette::builtin();
    EXPECT_EQ(Palette::from_json(p.to_json()).to_json(), p.to_json());
    for (const auto& l : living().furniture()) EXPECT_TRUE(p.labels.contains(l)) << l;
    EXPECT_THROW(Palette::from_json(R"({"floor":[1,2]})"), ParseError);
    EXPECT_THROW(Palette::from_json(R"({"colour":[1,2,3]})"), ParseError);
    EXPECT_EQ(Palette::from_json(R"({"labels":{"stool":[1,2,3]}})").color_of("stool"), (Rgb{1, 2, 3}));
}
