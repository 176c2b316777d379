#include <gtest/gtest.h>
#include <set>

#include "caslayout/errors.hpp"
#include "caslayout/relations.hpp"
#include "caslayout/synth.hpp"

using namespace caslayout;
using namespace caslayout::synth;
using relations::Category;

namespace {

bool inside_room(const scene::SceneElement& e, const scene::Scene& s) {
    for (auto c : e.obb.corners())
        if (!geometry::point_in_polygon(s.floor_polygon, c)) return false;
    return true;
}

}  // namespace

TEST(Catalog, BuiltinCoversVocabulary) {
    for (const char* v : {"living", "bedroom"}) {
        const auto& vocab = scene::Vocabulary::builtin(v);
        const auto cat = Catalog::builtin(vocab);
        for (const auto& l : vocab.furniture()) EXPECT_EQ(cat.of_label(l).size(), 2u) << l;
    }
}

TEST(Catalog, NearestByCosine) {
    const auto cat = Catalog::builtin(scene::Vocabulary::builtin("living"));
    const auto entries = cat.of_label("dining_chair");
    auto f = entries[1]->feature;
    for (auto& x : f) x = 3.0 * x + 0.01;
    EXPECT_EQ(cat.nearest("dining_chair", f).id, entries[1]->id);
    EXPECT_THROW(cat.nearest("spaceship", f), Error);
    EXPECT_NEAR(cosine_similarity({1, 0}, {0, 2}), 0.0, 1e-15);
    EXPECT_NEAR(cosine_similarity({1, 1}, {2, 2}), 1.0, 1e-15);
}

TEST(Catalog, JsonRoundTrip) {
    const auto cat = Catalog::builtin(scene::Vocabulary::builtin("bedroom"));
    const auto back = Catalog::from_json(cat.to_json());
    ASSERT_EQ(back.entries().size(), cat.entries().size());
    for (std::size_t i = 0; i < cat.entries().size(); ++i) {
        EXPECT_EQ(back.entries()[i].id, cat.entries()[i].id);
        EXPECT_EQ(back.entries()[i].size_max, cat.entries()[i].size_max);
        EXPECT_EQ(back.entries()[i].feature, cat.entries()[i].feature);
    }
    EXPECT_THROW(Catalog::from_json("[{\"id\":\"x\"}]"), ParseError);
}

TEST(Presets, ValidNonOverlappingInsideRoom) {
    for (const auto& p : preset_names()) {
        const auto& vocab = preset_vocabulary(p);
        const auto cat = Catalog::builtin(vocab);
        const auto corpus = synth_corpus(p, cat, 40, 3);
        for (const auto& s : corpus) {
            EXPECT_EQ(static_cast<int>(s.elements.size()), s.n_max);
            EXPECT_EQ(s.m(), 5);
            EXPECT_GE(s.n(), 2) << p;
            const auto text = scene::save_scene(s, vocab);
            EXPECT_EQ(scene::save_scene(scene::load_scene(text, vocab), vocab), text);
            for (const auto& a : s.elements) {
                if (!a.is_furniture()) continue;
                EXPECT_TRUE(inside_room(a, s)) << p << " " << a.id;
                for (const auto& b : s.elements)
                    if (b.is_furniture() && a.id < b.id) EXPECT_EQ(geometry::iou_3d(a.obb, b.obb), 0.0) << p;
            }
        }
    }
}

TEST(Presets, CorpusDeterministic) {
    const auto cat = Catalog::builtin(scene::Vocabulary::builtin("living"));
    EXPECT_EQ(synth_corpus("two-zone", cat, 10, 7), synth_corpus("two-zone", cat, 10, 7));
    EXPECT_NE(synth_corpus("two-zone", cat, 10, 7), synth_corpus("two-zone", cat, 10, 8));
    Rng rng(1);
    EXPECT_THROW(synth_scene("castle", cat, rng), Error);
}

TEST(Presets, ChairTableRelations) {
    const auto cat = Catalog::builtin(scene::Vocabulary::builtin("living"));
    for (const auto& s : synth_corpus("chair-table", cat, 30, 5)) {
        const auto g = relations::extract_dense(s);
        EXPECT_TRUE(g.has_edge({"chair_0", "table", Category::direction, static_cast<int>(relations::Direction::front)}));
        EXPECT_TRUE(g.has_edge({"chair_0", "table", Category::distance, static_cast<int>(relations::DistanceBand::attach_to)}));
    }
}

TEST(Presets, BedroomNightstandsSymmetric) {
    const auto cat = Catalog::builtin(scene::Vocabulary::builtin("bedroom"));
    for (const auto& s : synth_corpus("bedroom", cat, 30, 5)) {
        const auto g = relations::extract_dense(s);
        EXPECT_TRUE(g.has_edge({"nightstand_0", "nightstand_1", Category::symmetry, 0}));
        EXPECT_TRUE(g.has_edge({"nightstand_0", "bed", Category::distance, static_cast<int>(relations::DistanceBand::attach_to)}));
    }
}

TEST(Presets, SidesVary) {
    const auto cat = Catalog::builtin(scene::Vocabulary::builtin("living"));
    std::set<int> seen;
    for (const auto& s : synth_corpus("chair-table-sides", cat, 60, 9)) {
        const auto g = relations::extract_dense(s);
        for (const auto& e : g.edges)
            if (e.src == "chair_0" && e.dst == "table" && e.category == Category::direction) seen.insert(e.subcategory);
    }
    EXPECT_EQ(seen.size(), 4u);
}
