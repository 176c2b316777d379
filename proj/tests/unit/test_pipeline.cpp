#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "caslayout/errors.hpp"
#include "caslayout/pipeline.hpp"

using namespace caslayout;
using namespace caslayout::pipeline;
using scene::SceneElement;

namespace {

gen::RunConfig tiny() {
    gen::RunConfig c;
    c.T = 20;
    c.width = 16;
    c.heads = 2;
    c.blocks = 1;
    c.vae_width = 16;
    c.vae_heads = 2;
    c.enc_blocks = 1;
    c.dec_blocks = 1;
    c.n_max = 8;
    c.grid = 32;
    c.meters_per_cell = 0.25;
    return c;
}

Models tiny_models(const gen::RunConfig& c = tiny()) {
    Models m;
    resolve_resources(c, m.vocab, m.zones, m.catalog);
    for (int s = 1; s <= 4; ++s) {
        m.stages[static_cast<std::size_t>(s - 1)].emplace(c.stage_config(s), m.vocab, 10 + s);
        m.schedules[static_cast<std::size_t>(s - 1)] = c.schedule();
    }
    m.vae.emplace(c.vae_config(), m.vocab, 5);
    return m;
}

std::vector<scene::Scene> scenes(int count, std::uint64_t seed, const char* preset = "chair-table-sides") {
    const auto c = tiny();
    synth::SynthOptions o{c.n_max, c.grid, c.meters_per_cell};
    return synth::synth_corpus(preset, synth::Catalog::builtin(scene::Vocabulary::builtin("living")), count, seed, o);
}

scene::Scene empty_room(const scene::Scene& s) {
    scene::Scene r = s;
    for (auto& e : r.elements)
        if (e.is_furniture()) {
            const int pe = e.pe;
            e = SceneElement{};
            e.pe = pe;
        }
    return r;
}

std::multiset<int> furniture_types(const scene::Scene& s) {
    std::multiset<int> out;
    for (const auto& e : s.elements)
        if (e.is_furniture()) out.insert(e.cls.label);
    return out;
}

void expect_valid(const scene::Scene& s, const scene::Vocabulary& vocab) {
    const auto text = scene::save_scene(s, vocab);
    EXPECT_EQ(scene::save_scene(scene::load_scene(text, vocab), vocab), text);
    EXPECT_LE(s.n(), s.n_max - s.m());
    for (const auto& e : s.elements) {
        if (!e.is_furniture()) continue;
        EXPECT_EQ(e.known, scene::kKnownAll) << e.id;
        EXPECT_FALSE(e.id.empty());
        for (double v : {e.obb.size.x, e.obb.size.y, e.obb.size.z, e.obb.translation.x, e.obb.translation.y})
            EXPECT_TRUE(std::isfinite(v));
    }
}

}  // namespace

TEST(Pipeline, GenerateDeterministicAndValid) {
    const auto m = tiny_models();
    const auto room = empty_room(scenes(1, 3)[0]);
    Rng a(7), b(7), c(8);
    const auto s1 = generate(room, m, a);
    const auto s2 = generate(room, m, b);
    EXPECT_EQ(s1, s2);
    expect_valid(s1, m.vocab);
    EXPECT_NE(scene::save_scene(generate(room, m, c), m.vocab), scene::save_scene(s1, m.vocab));
    for (const auto& e : s1.elements)
        if (e.is_arch()) EXPECT_EQ(e, *room.find(e.id));
}

TEST(Pipeline, GenerateWithoutFloorPlan) {
    const auto m = tiny_models();
    const auto room = scene::drop_floor_plan(empty_room(scenes(1, 3)[0]));
    ASSERT_EQ(room.m(), 0);
    Rng rng(1);
    const auto s = generate(room, m, rng);
    expect_valid(s, m.vocab);
    EXPECT_EQ(s.m(), 0);
}

TEST(Pipeline, GeneratedItemsUseCatalogFeatures) {
    const auto m = tiny_models();
    Rng rng(2);
    const auto s = generate(empty_room(scenes(1, 4)[0]), m, rng);
    for (const auto& e : s.elements) {
        if (!e.is_furniture()) continue;
        const auto& label = m.vocab.furniture_label(e.cls.label);
        bool found = false;
        for (const auto* c : m.catalog.of_label(label)) found = found || c->feature == e.feature;
        EXPECT_TRUE(found) << e.id;
        EXPECT_EQ(e.id.rfind(label + "_", 0), 0u) << e.id;
    }
}

TEST(Pipeline, RearrangeKeepsTypesSizesFeatures) {
    const auto m = tiny_models();
    const auto in = scenes(1, 5)[0];
    Rng a(1), b(2);
    const auto x = rearrange(in, m, a);
    const auto y = rearrange(in, m, b);
    expect_valid(x, m.vocab);
    EXPECT_EQ(furniture_types(x), furniture_types(in));
    bool moved = false;
    for (std::size_t i = 0; i < in.elements.size(); ++i) {
        const auto& e = in.elements[i];
        EXPECT_EQ(x.elements[i].id, e.id);
        EXPECT_EQ(x.elements[i].cls, e.cls);
        EXPECT_EQ(x.elements[i].obb.size, e.obb.size);
        EXPECT_EQ(x.elements[i].feature, e.feature);
        if (e.is_furniture()) moved = moved || !(x.elements[i].obb.translation == y.elements[i].obb.translation);
    }
    EXPECT_TRUE(moved);
}

TEST(Pipeline, CompleteFullSceneIsIdentity) {
    auto c = tiny();
    c.n_max = 7;  // 5 architectural + table + chair: no free slot
    const auto m = tiny_models(c);
    synth::SynthOptions o{c.n_max, c.grid, c.meters_per_cell};
    const auto full = synth::synth_corpus("chair-table", m.catalog, 1, 2, o)[0];
    ASSERT_EQ(full.m() + full.n(), full.n_max);
    std::vector<std::string> ids;
    for (const auto& e : full.elements)
        if (e.is_furniture()) ids.push_back(e.id);
    const auto partial = scene::mark_conditioned(full, ids);
    Rng rng(4);
    EXPECT_EQ(complete(partial, m, rng), partial);
}

TEST(Pipeline, CompleteKeepsConditionedItem) {
    const auto m = tiny_models();
    auto s = scenes(1, 6)[0];
    for (auto& e : s.elements)
        if (e.is_furniture() && e.id != "table") {
            const int pe = e.pe;
            e = SceneElement{};
            e.pe = pe;
        }
    const auto partial = scene::mark_conditioned(s, {"table"});
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(seed);
        const auto out = complete(partial, m, rng);
        expect_valid(out, m.vocab);
        const int at = partial.index_of("table");
        EXPECT_EQ(out.elements[static_cast<std::size_t>(at)], partial.elements[static_cast<std::size_t>(at)]);
        for (const auto& e : out.elements)
            if (e.is_furniture() && e.id != "table") EXPECT_FALSE(e.conditioned);
    }
}

TEST(Pipeline, CompleteWithoutGuidanceDiffers) {
    auto c = tiny();
    c.n_max = 14;
    const auto m = tiny_models(c);
    synth::SynthOptions o{c.n_max, c.grid, c.meters_per_cell};
    const auto s = synth::synth_corpus("chair-table", m.catalog, 1, 6, o)[0];
    const auto partial = scene::mark_conditioned(s, {"table", "chair_0"});
    Options off;
    off.guidance_scale = 0.0;
    Options strong;
    strong.guidance_scale = 50.0;
    Rng a(3), b(3);
    const auto plain = complete(partial, m, a, off);
    const auto guided = complete(partial, m, b, strong);
    ASSERT_GT(plain.n(), 2);
    EXPECT_NE(plain, guided);
    EXPECT_EQ(*guided.find("table"), *partial.find("table"));
}

TEST(Pipeline, GraphConditioned) {
    const auto m = tiny_models();
    const auto s = scenes(1, 7)[0];
    Rng a(1), b(1);
    const auto g = sparse::extract_sparse(s, m.vocab, m.zones);
    const auto x = graph_conditioned(s, g, m, a);
    expect_valid(x, m.vocab);
    EXPECT_EQ(furniture_types(x), furniture_types(s));
    EXPECT_EQ(x, graph_conditioned(s, g, m, b));
    Rng c(1);
    const auto empty = graph_conditioned(s, RelationGraph{}, m, c);
    EXPECT_NE(empty, x);

    auto bad = g;
    bad.edges.push_back({"ghost", "table", relations::Category::direction, 0});
    Rng d(1);
    try {
        graph_conditioned(s, bad, m, d);
        FAIL() << "expected an error";
    } catch (const StageFailure& e) {
        EXPECT_EQ(e.stage(), 0);
    }
}

TEST(Pipeline, MissingModelNamesStage) {
    auto m = tiny_models();
    m.stages[2].reset();
    Rng rng(1);
    try {
        rearrange(scenes(1, 1)[0], m, rng);
        FAIL() << "expected an error";
    } catch (const StageFailure& e) {
        EXPECT_EQ(e.stage(), 3);
    }
}

TEST(Pipeline, StagingErrorCarriesStage) {
    const auto m = tiny_models();
    auto s = scenes(1, 1)[0];
    s.find("table")->known = scene::kKnownType;  // no size for stage 3
    Rng rng(1);
    try {
        rearrange(s, m, rng);
        FAIL() << "expected an error";
    } catch (const StageFailure& e) {
        EXPECT_EQ(e.stage(), 3);
    }
}

TEST(Edit, PreserveAllIsIdentity) {
    const auto m = tiny_models();
    const auto s = scenes(1, 8)[0];
    EditSpec spec;
    for (const auto& e : s.elements)
        if (!e.is_empty()) spec.preserve.push_back(e.id);
    Rng rng(1);
    EXPECT_EQ(edit(s, spec, m, rng), s);
}

TEST(Edit, ResizeHonoured) {
    const auto m = tiny_models();
    const auto s = scenes(1, 8)[0];
    const auto spec = EditSpec::from_json(R"({"overrides":[{"id":"table","field":"size","value":[1.5,0.9,0.75]}]})");
    Rng rng(1);
    const auto out = edit(s, spec, m, rng);
    expect_valid(out, m.vocab);
    EXPECT_EQ(out.find("table")->obb.size, (geometry::Vec3{1.5, 0.9, 0.75}));
    EXPECT_EQ(out.find("table")->cls, s.find("table")->cls);
}

TEST(Edit, RemoveChairs) {
    const auto m = tiny_models();
    const scene::Scene* pick = nullptr;
    const auto corpus = scenes(20, 9);
    for (const auto& s : corpus)
        if (s.find("chair_1") != nullptr) pick = &s;
    ASSERT_NE(pick, nullptr);
    const auto spec = EditSpec::from_json(
        R"({"preserve":["table"],"overrides":[{"id":"chair_0","field":"type","value":null},{"id":"chair_1","field":"type","value":null}]})");
    Rng rng(1);
    const auto out = edit(*pick, spec, m, rng);
    EXPECT_EQ(out.find("chair_0"), nullptr);
    EXPECT_EQ(out.find("chair_1"), nullptr);
    EXPECT_EQ(out.n(), pick->n() - 2);
    EXPECT_EQ(*out.find("table"), *pick->find("table"));
}

TEST(Edit, Validation) {
    const auto m = tiny_models();
    const auto s = scenes(1, 8)[0];
    Rng rng(1);
    EXPECT_THROW(edit(s, EditSpec::from_json(R"({"preserve":["ghost"]})"), m, rng), Error);
    EXPECT_THROW(edit(s, EditSpec::from_json(R"({"overrides":[{"id":"table","field":"colour","value":1}]})"), m, rng),
                 Error);
    EXPECT_THROW(edit(s, EditSpec::from_json(R"({"overrides":[{"id":"table","field":"size","value":[1,2]}]})"), m, rng),
                 Error);
    EXPECT_THROW(EditSpec::from_json(R"({"keep":[]})"), ParseError);
    EXPECT_THROW(EditSpec::from_json(R"({"overrides":[{"id":"table"}]})"), ParseError);
}

TEST(Models, SaveLoadRoundTrip) {
    const auto c = tiny();
    const auto m = tiny_models(c);
    const auto dir = (std::filesystem::temp_directory_path() / "caslayout_models_test").string();
    std::filesystem::remove_all(dir);
    for (int s = 1; s <= 4; ++s) {
        auto cs = c;
        cs.seed = static_cast<std::uint64_t>(10 + s);
        save_model(dir, "stage" + std::to_string(s), m.stage(s).params(), cs);
    }
    save_model(dir, "vae", m.relation_vae().params(), c);
    const auto back = Models::load(dir);
    const auto room = empty_room(scenes(1, 3)[0]);
    Rng a(5), b(5);
    EXPECT_EQ(generate(room, m, a), generate(room, back, b));
    EXPECT_THROW(Models::load(dir + "/missing"), Error);
    std::filesystem::remove_all(dir);
}

TEST(Guidance, GradientMatchesFiniteDifferences) {
    const auto m = tiny_models();
    const auto s = scenes(1, 2)[0];
    const auto& vae = m.relation_vae();
    const auto ex = gen::make_training_example(s, m.vocab, m.zones, vae.config().norm);
    Rng rng(4);
    nn::Mat z(ex.nodes(), scene::kLatentDim);
    for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] = rng.normal();
    double f0 = 0.0;
    const nn::Mat g = gen::relation_ce_gradient(vae, ex, z, &f0);
    EXPECT_GT(f0, 0.0);
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < z.size(); k += 7) {
        nn::Mat zp = z, zm = z;
        zp.data()[k] += h;
        zm.data()[k] -= h;
        double fp = 0.0, fm = 0.0;
        gen::relation_ce_gradient(vae, ex, zp, &fp);
        gen::relation_ce_gradient(vae, ex, zm, &fm);
        const double fd = (fp - fm) / (2 * h);
        EXPECT_NEAR(g.data()[k], fd, 1e-6 + 1e-4 * std::abs(fd));
    }
    for (const auto* p : vae.params().all()) EXPECT_EQ(p->grad.squaredNorm(), 0.0);
}
