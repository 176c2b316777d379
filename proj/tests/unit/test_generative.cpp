#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "caslayout/errors.hpp"
#include "caslayout/generative/diffusion.hpp"
#include "caslayout/generative/vae.hpp"
#include "../support/fixtures.hpp"

namespace caslayout::relations {
inline void PrintTo(const RelationEdge& e, std::ostream* os) {
    *os << e.src << "->" << e.dst << " " << category_name(e.category) << ":" << e.subcategory;
}
}  // namespace caslayout::relations

using namespace caslayout;
using namespace caslayout::gen;
using fixtures::furniture;

namespace {

const Vocabulary& living() { return Vocabulary::builtin("living"); }

scene::Scene dining_scene() {
    return fixtures::room(4.0, 4.0,
                          {furniture("table", "dining_table", {1.2, 0.8, 0.75}, {0, 0, 0.375}, 0),
                           furniture("chair_a", "dining_chair", {0.45, 0.45, 0.9}, {0, -0.65, 0.45}, 0),
                           furniture("chair_b", "dining_chair", {0.45, 0.45, 0.9}, {0, 0.65, 0.45}, 180),
                           furniture("sofa", "multi_seat_sofa", {2.0, 0.9, 0.8}, {0, 1.5, 0.4}, 180)});
}

StageConfig small_stage(int stage, bool floor = true) {
    StageConfig c;
    c.stage = stage;
    c.width = 32;
    c.heads = 2;
    c.blocks = 2;
    c.floor_tokens = floor;
    return c;
}

std::vector<scene::StageVector> stage_nodes(const scene::Scene& s, int stage) {
    scene::RelationLatents lat;
    if (stage >= 3) {
        Rng rng(3);
        for (const auto& e : s.elements) {
            std::vector<double> v;
            if (!e.is_empty())
                for (int i = 0; i < scene::kLatentDim; ++i) v.push_back(rng.normal());
            lat.push_back(v);
        }
    }
    return scene::stage_ground_truth(s, stage, living(), stage >= 3 ? &lat : nullptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule and forward process

TEST(Schedule, Invariants) {
    for (int T : {100, 1000}) {
        const auto s = NoiseSchedule::linear(T);
        EXPECT_GE(s.at(0), 1.0 - 1e-4);
        EXPECT_LE(s.at(T), 1e-2);
        for (int t = 1; t <= T; ++t) EXPECT_LT(s.at(t), s.at(t - 1));
        EXPECT_EQ(s.posterior_variance(1), 0.0);
        EXPECT_THROW(s.at(T + 1), Error);
        EXPECT_THROW(s.at(-1), Error);
    }
}

TEST(QSample, Limits) {
    NoiseSchedule s;
    s.T = 1;
    s.beta = {0.0, 1.0};
    s.gamma = {1.0, 0.0};
    Rng rng(1);
    Mat x0(3, 4), eps(3, 4);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        x0.data()[i] = rng.normal();
        eps.data()[i] = rng.normal();
    }
    const Mat ones = Mat::Ones(3, 4);
    EXPECT_TRUE(q_sample(s, x0, 0, eps, ones) == x0);
    EXPECT_TRUE(q_sample(s, x0, 1, eps, ones) == eps);
    EXPECT_THROW(q_sample(s, x0, 2, eps, ones), Error);
}

TEST(QSample, MonteCarloMarginal) {
    const auto s = NoiseSchedule::linear(1000);
    Rng rng(11);
    const int n = 100000;
    const double x0 = 1.5;
    for (int t : {1, 100, 250, 500}) {
        const Mat x = Mat::Constant(n, 1, x0);
        Mat eps(n, 1);
        for (int i = 0; i < n; ++i) eps(i, 0) = rng.normal();
        const Mat xt = q_sample(s, x, t, eps, Mat::Ones(n, 1));
        const double mean = xt.mean();
        const double var = (xt.array() - mean).square().sum() / (n - 1);
        const double g = s.at(t);
        EXPECT_NEAR(mean, std::sqrt(g) * x0, 0.02 * std::sqrt(g) * x0) << t;
        EXPECT_NEAR(var, 1.0 - g, 0.02 * (1.0 - g)) << t;
    }
}

TEST(QSample, MaskedEntriesBitExact) {
    const auto s = NoiseSchedule::linear(100);
    Rng rng(4);
    Mat x0(6, 5), eps(6, 5), mask = Mat::Zero(6, 5);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        x0.data()[i] = rng.normal() * 1e3;
        eps.data()[i] = rng.normal();
        mask.data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    const Mat xt = q_sample(s, x0, 57, eps, mask);
    for (Eigen::Index i = 0; i < x0.size(); ++i)
        if (mask.data()[i] == 0.0) EXPECT_EQ(xt.data()[i], x0.data()[i]);
        else EXPECT_NE(xt.data()[i], x0.data()[i]);
}

// ---------------------------------------------------------------------------
// Node codec

TEST(Codec, EncodeDecodeRoundTrip) {
    const auto sc = dining_scene();
    auto nodes = stage_nodes(sc, 4);
    for (auto& v : nodes) {
        v.known.bits = static_cast<std::uint8_t>(v.known.bits | v.target.bits);
    }
    const auto layout = FieldLayout::make(4, living());
    const Normalization norm;
    const auto enc = encode_nodes(layout, norm, nodes);
    auto copy = stage_nodes(sc, 4);
    decode_targets(layout, norm, enc.x, 0, copy);
    for (std::size_t i = 0; i < copy.size(); ++i) {
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(copy[i].translation[k], nodes[i].translation[k], 1e-12);
        for (int k = 0; k < 2; ++k) EXPECT_NEAR(copy[i].rotation[k], nodes[i].rotation[k], 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Losses

TEST(StageLoss, ZeroHeadGivesMeanSquaredNoise) {
    const auto sc = dining_scene();
    for (int stage = 1; stage <= 4; ++stage) {
        StageModel m(small_stage(stage), living(), 5);
        m.params().get("s" + std::to_string(stage) + ".eps.w").value.setZero();
        const std::vector<std::vector<scene::StageVector>> scenes = {stage_nodes(sc, stage)};
        const std::vector<const scene::FloorGrid*> floors = {&sc.floor};
        const auto batch = m.make_batch(scenes, floors);
        Rng rng(stage);
        Mat eps(batch.rows(), m.layout().total);
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
        Tape t;
        const auto l = stage_losses_at(m, t, batch, NoiseSchedule::linear(100), {40}, eps);
        const double expect = (eps.array().square() * batch.enc.target.array()).sum() / batch.enc.target.sum();
        EXPECT_NEAR(l.eps_value, expect, 1e-12) << stage;
    }
}

TEST(StageLoss, ZeroHeadLargeBatchNearOne) {
    auto sc = dining_scene();
    StageModel m(small_stage(2), living(), 5);
    m.params().get("s2.eps.w").value.setZero();
    std::vector<std::vector<scene::StageVector>> scenes(64, stage_nodes(sc, 2));
    std::vector<const scene::FloorGrid*> floors(64, &sc.floor);
    const auto batch = m.make_batch(scenes, floors);
    Rng rng(8);
    Tape t;
    const auto l = stage_losses(m, t, batch, NoiseSchedule::linear(100), rng);
    EXPECT_NEAR(l.eps_value, 1.0, 0.05);
}

TEST(StageLoss, ReconHandComputedOneWall) {
    auto sc = scene::make_scene(16, 0.125, fixtures::rect(4, 4),
                                {fixtures::arch("w", scene::ArchLabel::wall, 4.0, {0, -2.0}, 0),
                                 furniture("t", "coffee_table", {1, 0.6, 0.4}, {0, 0, 0.2}, 0)});
    StageModel m(small_stage(2), living(), 9);
    m.params().get("s2.recon.w").value.setZero();
    Mat b(1, 8);
    b << 0.5, -0.25, 1.0, 0.0, 0.1, 0.2, 0.9, 0.3;
    m.params().get("s2.recon.b").value = b;
    const std::vector<std::vector<scene::StageVector>> scenes = {stage_nodes(sc, 2)};
    const std::vector<const scene::FloorGrid*> floors = {&sc.floor};
    const auto batch = m.make_batch(scenes, floors);
    Tape t;
    const auto l = stage_losses_at(m, t, batch, NoiseSchedule::linear(100), {10}, Mat::Zero(batch.rows(), m.layout().total));
    // wall: size (4, 0, 2.6) -> (3, -1, 1.6); translation (0, -2, 1.3) / 3; rotation (1, 0)
    const double target[8] = {3.0, -1.0, 1.6, 0.0, -2.0 / 3.0, 1.3 / 3.0, 1.0, 0.0};
    double expect = 0.0;
    for (int i = 0; i < 8; ++i) expect += (b(0, i) - target[i]) * (b(0, i) - target[i]);
    EXPECT_NEAR(l.recon_value, expect, 1e-12);

    m.params().get("s2.recon.b").value = Mat(Eigen::Map<const Mat>(target, 1, 8));
    Tape t2;
    EXPECT_NEAR(stage_losses_at(m, t2, batch, NoiseSchedule::linear(100), {10}, Mat::Zero(batch.rows(), m.layout().total)).recon_value,
                0.0, 1e-24);
}

TEST(StageLoss, ReconWithoutArchitectureIsZero) {
    const auto sc = scene::drop_floor_plan(dining_scene());
    StageModel m(small_stage(4), living(), 2);
    const std::vector<std::vector<scene::StageVector>> scenes = {stage_nodes(sc, 4)};
    const std::vector<const scene::FloorGrid*> floors = {&sc.floor};
    const auto batch = m.make_batch(scenes, floors);
    Rng rng(1);
    Tape t;
    EXPECT_EQ(stage_losses(m, t, batch, NoiseSchedule::linear(100), rng).recon_value, 0.0);
}

TEST(StageLoss, OverfitsFixedBatch) {
    const auto sc = dining_scene();
    StageModel m(small_stage(4, false), living(), 21);
    const std::vector<std::vector<scene::StageVector>> scenes = {stage_nodes(sc, 4)};
    const auto batch = m.make_batch(scenes, {});
    Rng rng(2);
    Mat eps(batch.rows(), m.layout().total);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
    const auto sched = NoiseSchedule::linear(100);
    nn::AdamW opt({.lr = 3e-3});
    std::vector<double> curve;
    for (int step = 0; step < 200; ++step) {
        m.params().zero_grad();
        Tape t;
        const auto l = stage_losses_at(m, t, batch, sched, {30}, eps);
        t.backward(nn::add(l.eps, l.recon));
        opt.step(m.params());
        curve.push_back(l.eps_value + l.recon_value);
    }
    const double head = std::accumulate(curve.begin(), curve.begin() + 20, 0.0) / 20;
    const double tail = std::accumulate(curve.end() - 20, curve.end(), 0.0) / 20;
    EXPECT_LT(tail, 0.25 * head);
}

// ---------------------------------------------------------------------------
// Denoiser structure

TEST(StageModel, PermutationEquivariant) {
    const auto sc = dining_scene();
    for (int stage : {1, 4}) {
        StageModel m(small_stage(stage), living(), 13);
        auto nodes = stage_nodes(sc, stage);
        std::vector<int> order(nodes.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(6);
        rng.shuffle(std::span<int>(order));
        std::vector<scene::StageVector> perm;
        for (int i : order) perm.push_back(nodes[static_cast<std::size_t>(i)]);
        const std::vector<const scene::FloorGrid*> floors = {&sc.floor};
        const std::vector<std::vector<scene::StageVector>> a = {nodes}, b = {perm};
        const auto ba = m.make_batch(a, floors), bb = m.make_batch(b, floors);
        Tape t;
        const Mat ea = m.forward(t, ba, t.constant(ba.enc.x), {17}).eps.value();
        const Mat eb = m.forward(t, bb, t.constant(bb.enc.x), {17}).eps.value();
        for (std::size_t i = 0; i < order.size(); ++i)
            EXPECT_LT((eb.row(static_cast<Eigen::Index>(i)) - ea.row(order[i])).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(StageModel, LatentConditioningChangesOutput) {
    const auto sc = dining_scene();
    StageModel m(small_stage(4), living(), 13);
    auto nodes = stage_nodes(sc, 4);
    const std::vector<const scene::FloorGrid*> floors = {&sc.floor};
    const std::vector<std::vector<scene::StageVector>> a = {nodes};
    nodes[5].latent[0] += 1.0;
    const std::vector<std::vector<scene::StageVector>> b = {nodes};
    Tape t;
    const auto ba = m.make_batch(a, floors), bb = m.make_batch(b, floors);
    const Mat ea = m.forward(t, ba, t.constant(ba.enc.x), {5}).eps.value();
    const Mat eb = m.forward(t, bb, t.constant(bb.enc.x), {5}).eps.value();
    EXPECT_GT((ea - eb).cwiseAbs().maxCoeff(), 1e-9);
}

// ---------------------------------------------------------------------------
// Sampling

TEST(Sample, SameSeedSameOutput) {
    const auto sc = scene::mark_conditioned(dining_scene(), {"table"});
    for (int stage = 1; stage <= 4; ++stage) {
        StageModel m(small_stage(stage), living(), 3);
        const auto sched = NoiseSchedule::linear(20);
        const std::vector<std::vector<scene::StageVector>> in = {stage_nodes(sc, stage)};
        const std::vector<const scene::FloorGrid*> floors = {&sc.floor};
        Rng r1(99), r2(99), r3(100);
        const auto a = ddpm_sample(m, sched, in, floors, r1);
        const auto b = ddpm_sample(m, sched, in, floors, r2);
        const auto c = ddpm_sample(m, sched, in, floors, r3);
        EXPECT_EQ(a, b) << stage;
        EXPECT_NE(a, c) << stage;

        const auto layout = m.layout();
        const auto ex_in = encode_nodes(layout, m.config().norm, in[0]);
        const auto ex_out = encode_nodes(layout, m.config().norm, a[0]);
        for (Eigen::Index i = 0; i < ex_in.x.size(); ++i)
            if (ex_in.target.data()[i] == 0.0) EXPECT_EQ(ex_in.x.data()[i], ex_out.x.data()[i]);
        for (std::size_t i = 0; i < in[0].size(); ++i) {
            if (in[0][i].target.bits == 0) EXPECT_EQ(in[0][i], a[0][i]);
            if (stage == 4 && in[0][i].target.has(scene::Field::rotation))
                EXPECT_NEAR(std::hypot(a[0][i].rotation[0], a[0][i].rotation[1]), 1.0, 1e-12);
            if (stage == 1 && in[0][i].target.has(scene::Field::type))
                EXPECT_EQ(std::count(a[0][i].type.begin(), a[0][i].type.end(), 1.0), 1);
        }
    }
}

TEST(Sample, GuideRunsEveryStepAndCannotTouchKnownEntries) {
    const auto sc = dining_scene();
    StageModel m(small_stage(4), living(), 3);
    const auto sched = NoiseSchedule::linear(10);
    const std::vector<std::vector<scene::StageVector>> in = {stage_nodes(sc, 4)};
    const std::vector<const scene::FloorGrid*> floors = {&sc.floor};
    std::vector<int> seen;
    SampleOptions opts;
    opts.guide = [&](int t, const Mat&, Mat& x) {
        seen.push_back(t);
        x.setConstant(7.0);
    };
    Rng rng(1);
    const auto out = ddpm_sample(m, sched, in, floors, rng, opts);
    EXPECT_EQ(seen.size(), 10u);
    EXPECT_EQ(seen.front(), 10);
    EXPECT_EQ(seen.back(), 1);
    for (std::size_t i = 0; i < out[0].size(); ++i) {
        EXPECT_EQ(out[0][i].size, in[0][i].size);
        EXPECT_EQ(out[0][i].latent, in[0][i].latent);
        if (in[0][i].target.has(scene::Field::translation)) EXPECT_NEAR(out[0][i].translation[0], 21.0, 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Relation VAE

namespace {

VaeConfig small_vae(EncoderVariant v = EncoderVariant::in_out) {
    VaeConfig c;
    c.width = 32;
    c.heads = 2;
    c.variant = v;
    return c;
}

const sparse::ZoneTable& zones() {
    static const auto t = sparse::ZoneTable::builtin(living());
    return t;
}

VaeExample dining_example() { return make_training_example(dining_scene(), living(), zones(), {}); }

VaeExample permuted(const VaeExample& ex, const std::vector<int>& order) {
    VaeExample p;
    std::vector<int> where(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) where[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    p.node_in = Mat(ex.node_in.rows(), ex.node_in.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto o = static_cast<std::size_t>(order[i]);
        p.ids.push_back(ex.ids[o]);
        p.slot.push_back(ex.slot[o]);
        p.pe.push_back(ex.pe[o]);
        p.arch.push_back(ex.arch[o]);
        p.node_in.row(static_cast<Eigen::Index>(i)) = ex.node_in.row(order[i]);
    }
    for (const auto& e : ex.edges) p.edges.push_back({where[static_cast<std::size_t>(e.src)], where[static_cast<std::size_t>(e.dst)], e.kind});
    return p;
}

}  // namespace

TEST(Vae, HeadClasses) {
    EXPECT_EQ(head_classes(Category::direction), 7);
    EXPECT_EQ(none_class(Category::direction), 6);
    EXPECT_EQ(head_classes(Category::distance), 4);
    EXPECT_EQ(head_classes(Category::alignment), 8);
    EXPECT_EQ(none_class(Category::alignment), 0);
    EXPECT_EQ(head_classes(Category::symmetry), 2);
    EXPECT_EQ(head_classes(Category::arch_distance), 4);
    EXPECT_EQ(relation_kind(Category::arch_distance, 2), kRelationKinds - 1);
    EXPECT_EQ(variant_from_name("out_only"), EncoderVariant::out_only);
    EXPECT_THROW(variant_from_name("sideways"), Error);
}

TEST(Vae, ExampleFeaturesAndTargets) {
    const auto ex = dining_example();
    const int tw = living().type_width();
    ASSERT_EQ(ex.nodes(), 8);
    EXPECT_EQ(ex.node_in.cols(), tw + 9);
    for (int i = 0; i < ex.nodes(); ++i) {
        EXPECT_EQ(ex.node_in.row(i).head(tw).sum(), 1.0);
        if (!ex.arch[static_cast<std::size_t>(i)]) {
            EXPECT_EQ(ex.node_in.row(i).tail(9).cwiseAbs().sum(), 0.0);
        } else {
            EXPECT_EQ(ex.node_in(i, tw + 8), 1.0);
        }
    }
    for (const auto& cat : ex.targets)
        for (const auto& t : cat) EXPECT_NE(t.src, t.dst);
    for (const auto& t : ex.targets[static_cast<std::size_t>(Category::symmetry)])
        EXPECT_LT(ex.ids[static_cast<std::size_t>(t.src)], ex.ids[static_cast<std::size_t>(t.dst)]);
    // every sparse edge is a target with its label
    const auto g = sparse::extract_sparse(dining_scene(), living(), zones());
    EXPECT_EQ(ex.edges.size(), g.edges.size());
    int positives = 0;
    for (int c = 0; c < kCategories; ++c)
        for (const auto& t : ex.targets[static_cast<std::size_t>(c)]) positives += t.label != none_class(static_cast<Category>(c));
    EXPECT_GT(positives, 0);
    // 4 furniture x 4 walls for arch_distance
    EXPECT_EQ(ex.targets[static_cast<std::size_t>(Category::arch_distance)].size(), 16u);
}

TEST(Vae, DanglingEdgeThrows) {
    const auto sc = dining_scene();
    auto g = sparse::extract_sparse(sc, living(), zones());
    g.edges.push_back({"ghost", "table", Category::direction, 0});
    EXPECT_THROW(make_vae_example(sc, g, living(), {}), Error);
}

TEST(Vae, ZeroEdgesFinite) {
    const auto sc = dining_scene();
    relations::RelationGraph empty;
    auto ex = make_vae_example(sc, empty, living(), {});
    add_targets(ex, sc, empty, living(), zones());
    VaeModel m(small_vae(), living(), 1);
    Tape t;
    Rng rng(2);
    const auto l = vae_loss(m, t, std::span<const VaeExample>(&ex, 1), &rng);
    EXPECT_TRUE(std::isfinite(l.total.item()));
    EXPECT_TRUE(l.enc.mu.value().allFinite());
}

TEST(Vae, UntrainedDistributionsValid) {
    const auto ex = dining_example();
    VaeModel m(small_vae(), living(), 1);
    Tape t;
    const auto enc = m.encode(t, std::span<const VaeExample>(&ex, 1), nullptr);
    std::array<std::vector<std::pair<int, int>>, kCategories> rows;
    for (int c = 0; c < kCategories; ++c)
        for (const auto& tg : ex.targets[static_cast<std::size_t>(c)]) rows[static_cast<std::size_t>(c)].push_back({tg.src, tg.dst});
    const auto logits = m.decode(t, std::span<const VaeExample>(&ex, 1), enc.z, rows);
    for (int c = 0; c < kCategories; ++c) {
        if (rows[static_cast<std::size_t>(c)].empty()) continue;
        const Mat p = nn::softmax_rows(logits[static_cast<std::size_t>(c)]).value();
        EXPECT_EQ(p.cols(), head_classes(static_cast<Category>(c)));
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
            EXPECT_GE(p.row(r).minCoeff(), 0.0);
        }
    }
}

TEST(Vae, PermutationEquivariant) {
    const auto ex = dining_example();
    for (auto v : {EncoderVariant::in_out, EncoderVariant::mixed}) {
        VaeModel m(small_vae(v), living(), 4);
        std::vector<int> order(static_cast<std::size_t>(ex.nodes()));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(12);
        rng.shuffle(std::span<int>(order));
        const auto p = permuted(ex, order);
        const auto a = encode_latents(m, ex);
        const auto b = encode_latents(m, p);
        for (std::size_t i = 0; i < order.size(); ++i)
            for (int k = 0; k < scene::kLatentDim; ++k)
                EXPECT_NEAR(b[i][static_cast<std::size_t>(k)], a[static_cast<std::size_t>(order[i])][static_cast<std::size_t>(k)], 1e-12);
    }
}

TEST(Vae, EdgeChangesTargetLatent) {
    const auto sc = dining_scene();
    auto g = sparse::extract_sparse(sc, living(), zones());
    const auto base = make_vae_example(sc, g, living(), {});
    g.edges.push_back({"sofa", "chair_a", Category::direction, 2});
    const auto more = make_vae_example(sc, g, living(), {});
    for (auto v : {EncoderVariant::in_out, EncoderVariant::in_only, EncoderVariant::out_only, EncoderVariant::mixed}) {
        VaeModel m(small_vae(v), living(), 4);
        const auto a = encode_latents(m, base);
        const auto b = encode_latents(m, more);
        const auto dst = static_cast<std::size_t>(std::find(base.ids.begin(), base.ids.end(), "chair_a") - base.ids.begin());
        double diff = 0.0;
        for (int k = 0; k < scene::kLatentDim; ++k) diff = std::max(diff, std::abs(a[dst][static_cast<std::size_t>(k)] - b[dst][static_cast<std::size_t>(k)]));
        EXPECT_GT(diff, 1e-9) << variant_name(v);
    }
}

TEST(Vae, LossIsCePlusWeightedKl) {
    const auto ex = dining_example();
    VaeModel m(small_vae(), living(), 4);
    Tape t;
    Rng rng(3);
    const auto l = vae_loss(m, t, std::span<const VaeExample>(&ex, 1), &rng);
    EXPECT_NEAR(l.total.item(), l.ce_value + 1e-3 * l.kl_value, 1e-14);
    EXPECT_EQ(l.targets, ex.target_count());
    EXPECT_GE(l.kl_value, 0.0);
}

TEST(Vae, KlClosedForms) {
    Tape t;
    const auto zero = nn::kl_standard_normal(t.constant(Mat::Zero(3, 32)), t.constant(Mat::Zero(3, 32)), {1.0 / 3, 1.0 / 3, 1.0 / 3});
    EXPECT_EQ(zero.item(), 0.0);
    const auto one = nn::kl_standard_normal(t.constant(Mat::Ones(1, 32)), t.constant(Mat::Zero(1, 32)), {1.0});
    EXPECT_NEAR(one.item(), 0.5 * 32, 1e-12);
}

TEST(Vae, OverfitsOneGraph) {
    const auto ex = dining_example();
    VaeModel m(small_vae(), living(), 7);
    nn::AdamW opt({.lr = 3e-3});
    Rng rng(5);
    for (int step = 0; step < 800; ++step) {
        m.params().zero_grad();
        Tape t;
        const auto l = vae_loss(m, t, std::span<const VaeExample>(&ex, 1), &rng);
        t.backward(l.total);
        opt.step(m.params());
    }
    const auto acc = vae_accuracy(m, std::span<const VaeExample>(&ex, 1));
    EXPECT_EQ(acc.targets, ex.target_count());
    EXPECT_EQ(acc.correct, acc.targets);
    EXPECT_EQ(acc.edge_recall(), 1.0);

    // decoded relations on the training pairs reproduce the sparse graph
    const auto pairs = candidate_pairs(ex, dining_scene(), living(), zones());
    const auto z = encode_latents(m, ex);
    Mat zm(ex.nodes(), scene::kLatentDim);
    for (int i = 0; i < ex.nodes(); ++i)
        for (int k = 0; k < scene::kLatentDim; ++k) zm(i, k) = z[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    auto g = sparse::extract_sparse(dining_scene(), living(), zones());
    g.canonicalize();
    auto d = decode_relations(m, ex, zm, pairs);
    EXPECT_EQ(d.edges, g.edges);
}
