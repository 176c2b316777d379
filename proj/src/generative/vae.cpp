#include "caslayout/generative/vae.hpp"

#include <algorithm>
#include <map>

#include "caslayout/errors.hpp"

namespace caslayout::gen {

namespace {

constexpr std::array<int, kCategories> kKindOffset = {0, 6, 9, 12, 13};
constexpr int kArchFeatures = 9;

}  // namespace

std::string_view variant_name(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::in_out: return "in_out";
        case EncoderVariant::in_only: return "in_only";
        case EncoderVariant::out_only: return "out_only";
        case EncoderVariant::mixed: return "mixed";
    }
    return "in_out";
}

EncoderVariant variant_from_name(std::string_view name) {
    for (auto v : {EncoderVariant::in_out, EncoderVariant::in_only, EncoderVariant::out_only, EncoderVariant::mixed})
        if (variant_name(v) == name) return v;
    throw Error("unknown encoder variant '" + std::string(name) + "'");
}

int head_classes(Category c) {
    if (c == Category::alignment) return 8;
    return relations::subcategory_count(c) + 1;
}

int none_class(Category c) {
    if (c == Category::alignment) return 0;
    return relations::subcategory_count(c);
}

// posterior starts narrow (sigma ~ 0.14) so early decoding is not swamped by sampling noise
constexpr double kLogvarInit = -4.0;

int relation_kind(Category c, int subcategory) { return kKindOffset[static_cast<std::size_t>(c)] + subcategory; }

int VaeExample::target_count() const {
    int n = 0;
    for (const auto& t : targets) n += static_cast<int>(t.size());
    return n;
}

VaeExample make_vae_example(const Scene& scene, const RelationGraph& graph, const Vocabulary& vocab,
                            const Normalization& norm) {
    VaeExample ex;
    const int tw = vocab.type_width();
    std::vector<std::vector<double>> rows;
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < scene.elements.size(); ++i) {
        const auto& e = scene.elements[i];
        if (e.is_empty()) continue;
        index[e.id] = static_cast<int>(ex.ids.size());
        ex.ids.push_back(e.id);
        ex.slot.push_back(static_cast<int>(i));
        ex.pe.push_back(e.pe);
        ex.arch.push_back(e.is_arch());
        std::vector<double> r(static_cast<std::size_t>(tw + kArchFeatures), 0.0);
        r[static_cast<std::size_t>(e.cls.type_slot(vocab))] = 1.0;
        if (e.is_arch()) {
            const auto& o = e.obb;
            const double vals[kArchFeatures] = {(o.size.x - norm.size_offset) / norm.size_scale,
                                                (o.size.y - norm.size_offset) / norm.size_scale,
                                                (o.size.z - norm.size_offset) / norm.size_scale,
                                                o.translation.x / norm.translation_scale,
                                                o.translation.y / norm.translation_scale,
                                                o.translation.z / norm.translation_scale,
                                                o.heading.cos(),
                                                o.heading.sin(),
                                                1.0};
            std::copy(vals, vals + kArchFeatures, r.begin() + tw);
        }
        rows.push_back(std::move(r));
    }
    ex.node_in = Mat::Zero(static_cast<Eigen::Index>(rows.size()), tw + kArchFeatures);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) ex.node_in(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    for (const auto& e : graph.edges) {
        auto s = index.find(e.src), d = index.find(e.dst);
        if (s == index.end()) throw Error("edge references unknown element '" + e.src + "'");
        if (d == index.end()) throw Error("edge references unknown element '" + e.dst + "'");
        if (s->second == d->second) throw Error("self edge on '" + e.src + "'");
        if (e.subcategory < 0 || e.subcategory >= relations::subcategory_count(e.category))
            throw Error("invalid subcategory on edge " + e.src + " -> " + e.dst);
        ex.edges.push_back({s->second, d->second, relation_kind(e.category, e.subcategory)});
    }
    return ex;
}

std::array<std::vector<std::pair<int, int>>, kCategories> candidate_pairs(const VaeExample& ex, const Scene& scene,
                                                                          const Vocabulary& vocab,
                                                                          const ZoneTable& table) {
    const sparse::PairRules rules(sparse::assign_zones(scene, vocab, table));
    std::array<std::vector<std::pair<int, int>>, kCategories> out;
    const int n = ex.nodes();
    for (int i = 0; i < n; ++i) {
        if (ex.arch[static_cast<std::size_t>(i)]) continue;
        const std::string& a = ex.ids[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const std::string& b = ex.ids[static_cast<std::size_t>(j)];
            if (ex.arch[static_cast<std::size_t>(j)]) {
                out[static_cast<std::size_t>(Category::arch_distance)].push_back({i, j});
                continue;
            }
            if (!rules.knows(a) || !rules.knows(b)) continue;
            for (Category c : {Category::direction, Category::distance, Category::alignment})
                if (rules.admits_category(a, b, c)) out[static_cast<std::size_t>(c)].push_back({i, j});
            if (a < b && rules.admits_category(a, b, Category::symmetry))
                out[static_cast<std::size_t>(Category::symmetry)].push_back({i, j});
        }
    }
    return out;
}

void add_targets(VaeExample& ex, const Scene& scene, const RelationGraph& truth, const Vocabulary& vocab,
                 const ZoneTable& table) {
    std::map<std::string, int> index;
    for (int i = 0; i < ex.nodes(); ++i) index[ex.ids[static_cast<std::size_t>(i)]] = i;
    std::map<std::tuple<int, int, int>, std::vector<int>> subs;
    for (const auto& e : truth.edges) {
        auto s = index.find(e.src), d = index.find(e.dst);
        if (s == index.end() || d == index.end()) throw Error("target edge references an unknown element");
        subs[{s->second, d->second, static_cast<int>(e.category)}].push_back(e.subcategory);
    }
    const auto pairs = candidate_pairs(ex, scene, vocab, table);
    for (int ci = 0; ci < kCategories; ++ci) {
        const auto c = static_cast<Category>(ci);
        auto& tg = ex.targets[static_cast<std::size_t>(ci)];
        tg.clear();
        for (auto [i, j] : pairs[static_cast<std::size_t>(ci)]) {
            auto it = subs.find({i, j, ci});
            int label = none_class(c);
            if (it != subs.end()) {
                if (c == Category::alignment) {
                    label = 0;
                    for (int s : it->second) label |= 1 << s;
                } else {
                    label = it->second.front();
                }
            }
            tg.push_back({i, j, label});
        }
    }
}

VaeExample make_training_example(const Scene& scene, const Vocabulary& vocab, const ZoneTable& table,
                                 const Normalization& norm) {
    const RelationGraph g = sparse::extract_sparse(scene, vocab, table);
    VaeExample ex = make_vae_example(scene, g, vocab, norm);
    add_targets(ex, scene, g, vocab, table);
    return ex;
}

// ---------------------------------------------------------------------------

VaeModel::VaeModel(const VaeConfig& cfg, const Vocabulary& vocab, std::uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const int W = cfg.width;
    node_in_ = nn::Linear(params_, "vae.node_in", vocab.type_width() + kArchFeatures, W, rng);
    pe_ = nn::Embedding(params_, "vae.pe", cfg.n_max, W, rng);
    edge_src_ = nn::Embedding(params_, "vae.edge_src", cfg.n_max, W, rng);
    edge_dst_ = nn::Embedding(params_, "vae.edge_dst", cfg.n_max, W, rng);
    edge_kind_ = nn::Embedding(params_, "vae.edge_kind", kRelationKinds, W, rng);
    edge_mlp_ = nn::Mlp(params_, "vae.edge_mlp", W, W, W, rng);
    edge_ln_ = nn::LayerNorm(params_, "vae.edge_ln", W, rng);
    const bool in = cfg.variant == EncoderVariant::in_out || cfg.variant == EncoderVariant::in_only;
    const bool out = cfg.variant == EncoderVariant::in_out || cfg.variant == EncoderVariant::out_only;
    for (int b = 0; b < cfg.enc_blocks; ++b) {
        const std::string p = "vae.enc" + std::to_string(b);
        if (in) cross_in_.emplace_back(params_, p + ".in", W, cfg.heads, rng);
        if (out) cross_out_.emplace_back(params_, p + ".out", W, cfg.heads, rng);
        if (cfg.variant == EncoderVariant::mixed) cross_mixed_.emplace_back(params_, p + ".mixed", W, cfg.heads, rng);
        enc_self_.emplace_back(params_, p + ".self", W, cfg.heads, rng);
        enc_ff_.emplace_back(params_, p + ".ff", W, rng);
    }
    enc_ln_ = nn::LayerNorm(params_, "vae.enc_ln", W, rng);
    mu_ = nn::Linear(params_, "vae.mu", W, scene::kLatentDim, rng);
    logvar_ = nn::Linear(params_, "vae.logvar", W, scene::kLatentDim, rng);
    logvar_.b->value.setConstant(kLogvarInit);
    dec_in_ = nn::Linear(params_, "vae.dec_in", scene::kLatentDim, W, rng);
    dec_pe_ = nn::Embedding(params_, "vae.dec_pe", cfg.n_max, W, rng);
    for (int b = 0; b < cfg.dec_blocks; ++b) {
        const std::string p = "vae.dec" + std::to_string(b);
        dec_self_.emplace_back(params_, p + ".self", W, cfg.heads, rng);
        dec_ff_.emplace_back(params_, p + ".ff", W, rng);
    }
    dec_ln_ = nn::LayerNorm(params_, "vae.dec_ln", W, rng);
    for (int c = 0; c < kCategories; ++c) {
        const std::string p = "vae.head." + std::string(relations::category_name(static_cast<Category>(c)));
        pair_a_[static_cast<std::size_t>(c)] = nn::Linear(params_, p + ".a", W, W, rng);
        pair_b_[static_cast<std::size_t>(c)] = nn::Linear(params_, p + ".b", W, W, rng);
        pair_out_[static_cast<std::size_t>(c)] = nn::Linear(params_, p + ".out", W, head_classes(static_cast<Category>(c)), rng);
    }
}

namespace {

struct Flat {
    Mat node_in;
    std::vector<int> pe;
    std::vector<nn::KeyRange> self;
    std::vector<int> offset;
    // edges in global row terms
    std::vector<int> e_src, e_dst, e_pe_src, e_pe_dst, e_kind;
};

Flat flatten(std::span<const VaeExample> examples) {
    Flat f;
    int rows = 0;
    for (const auto& ex : examples) {
        f.offset.push_back(rows);
        rows += ex.nodes();
    }
    if (examples.empty()) throw Error("VAE batch is empty");
    f.node_in = Mat(rows, examples[0].node_in.cols());
    for (std::size_t k = 0; k < examples.size(); ++k) {
        const auto& ex = examples[k];
        const int o = f.offset[k];
        if (ex.node_in.cols() != f.node_in.cols()) throw ShapeError("VAE examples disagree on node width");
        f.node_in.middleRows(o, ex.nodes()) = ex.node_in;
        for (int i = 0; i < ex.nodes(); ++i) {
            f.pe.push_back(ex.pe[static_cast<std::size_t>(i)]);
            f.self.push_back({o, o + ex.nodes()});
        }
        for (const auto& e : ex.edges) {
            f.e_src.push_back(o + e.src);
            f.e_dst.push_back(o + e.dst);
            f.e_pe_src.push_back(ex.pe[static_cast<std::size_t>(e.src)]);
            f.e_pe_dst.push_back(ex.pe[static_cast<std::size_t>(e.dst)]);
            f.e_kind.push_back(e.kind);
        }
    }
    return f;
}

/// Token order grouping edges by the node returned by key, plus per-node ranges.
void group_edges(const std::vector<std::vector<int>>& per_node, std::vector<int>& order, std::vector<nn::KeyRange>& ranges) {
    order.clear();
    ranges.assign(per_node.size(), {});
    for (std::size_t n = 0; n < per_node.size(); ++n) {
        ranges[n].begin = static_cast<int>(order.size());
        order.insert(order.end(), per_node[n].begin(), per_node[n].end());
        ranges[n].end = static_cast<int>(order.size());
    }
}

}  // namespace

VaeModel::Encoded VaeModel::encode(Tape& t, std::span<const VaeExample> examples, Rng* rng) const {
    const Flat f = flatten(examples);
    const auto rows = static_cast<std::size_t>(f.node_in.rows());
    for (int pe : f.pe)
        if (pe < 0 || pe >= cfg_.n_max) throw CapacityError("positional index out of range for the VAE");
    Var h = nn::add(node_in_(t, t.constant(f.node_in)), pe_(t, f.pe));

    std::optional<Var> tok;
    std::vector<int> in_order, out_order, mixed_order;
    std::vector<nn::KeyRange> in_ranges, out_ranges, mixed_ranges;
    if (!f.e_src.empty()) {
        tok = edge_ln_(t, edge_mlp_(t, nn::add(nn::add(edge_src_(t, f.e_pe_src), edge_dst_(t, f.e_pe_dst)), edge_kind_(t, f.e_kind))));
        std::vector<std::vector<int>> ins(rows), outs(rows), both(rows);
        for (std::size_t e = 0; e < f.e_src.size(); ++e) {
            ins[static_cast<std::size_t>(f.e_dst[e])].push_back(static_cast<int>(e));
            outs[static_cast<std::size_t>(f.e_src[e])].push_back(static_cast<int>(e));
        }
        for (std::size_t n = 0; n < rows; ++n) {
            both[n] = ins[n];
            both[n].insert(both[n].end(), outs[n].begin(), outs[n].end());
        }
        group_edges(ins, in_order, in_ranges);
        group_edges(outs, out_order, out_ranges);
        group_edges(both, mixed_order, mixed_ranges);
    }
    std::optional<Var> tok_in, tok_out, tok_mixed;
    if (tok) {
        if (!cross_in_.empty()) tok_in = nn::gather_rows(*tok, in_order);
        if (!cross_out_.empty()) tok_out = nn::gather_rows(*tok, out_order);
        if (!cross_mixed_.empty()) tok_mixed = nn::gather_rows(*tok, mixed_order);
    }
    for (int b = 0; b < cfg_.enc_blocks; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        if (tok_in) h = cross_in_[bi](t, h, *tok_in, in_ranges);
        if (tok_out) h = cross_out_[bi](t, h, *tok_out, out_ranges);
        if (tok_mixed) h = cross_mixed_[bi](t, h, *tok_mixed, mixed_ranges);
        h = enc_self_[bi].self(t, h, f.self);
        h = enc_ff_[bi](t, h);
    }
    h = enc_ln_(t, h);
    Encoded e;
    e.mu = mu_(t, h);
    e.logvar = logvar_(t, h);
    if (rng != nullptr) {
        Mat eps(e.mu.rows(), e.mu.cols());
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng->normal();
        e.z = nn::add(e.mu, nn::mul_const(nn::exp(nn::scale(e.logvar, 0.5)), eps));
    } else {
        e.z = e.mu;
    }
    return e;
}

std::array<Var, kCategories> VaeModel::decode(Tape& t, std::span<const VaeExample> examples, Var z,
                                              const std::array<std::vector<std::pair<int, int>>, kCategories>& rows) const {
    const Flat f = flatten(examples);
    if (z.rows() != f.node_in.rows() || z.cols() != scene::kLatentDim) throw ShapeError("latent rows do not match the examples");
    Var d = nn::add(dec_in_(t, z), dec_pe_(t, f.pe));
    for (int b = 0; b < cfg_.dec_blocks; ++b) {
        d = dec_self_[static_cast<std::size_t>(b)].self(t, d, f.self);
        d = dec_ff_[static_cast<std::size_t>(b)](t, d);
    }
    d = dec_ln_(t, d);
    std::array<Var, kCategories> out;
    for (int c = 0; c < kCategories; ++c) {
        const auto& pr = rows[static_cast<std::size_t>(c)];
        if (pr.empty()) continue;
        std::vector<int> src, dst;
        for (auto [a, b] : pr) {
            src.push_back(a);
            dst.push_back(b);
        }
        const auto ci = static_cast<std::size_t>(c);
        Var pre = nn::add(nn::gather_rows(pair_a_[ci](t, d), src), nn::gather_rows(pair_b_[ci](t, d), dst));
        out[ci] = pair_out_[ci](t, nn::gelu(pre));
    }
    return out;
}

namespace {

struct FlatTargets {
    std::array<std::vector<std::pair<int, int>>, kCategories> rows;
    std::array<std::vector<int>, kCategories> labels;
    int total = 0;
};

FlatTargets flat_targets(std::span<const VaeExample> examples) {
    FlatTargets ft;
    int o = 0;
    for (const auto& ex : examples) {
        for (int c = 0; c < kCategories; ++c)
            for (const auto& tg : ex.targets[static_cast<std::size_t>(c)]) {
                ft.rows[static_cast<std::size_t>(c)].push_back({o + tg.src, o + tg.dst});
                ft.labels[static_cast<std::size_t>(c)].push_back(tg.label);
                ++ft.total;
            }
        o += ex.nodes();
    }
    return ft;
}

int argmax_row(const Mat& m, Eigen::Index r) {
    Eigen::Index best = 0;
    m.row(r).maxCoeff(&best);
    return static_cast<int>(best);
}

}  // namespace

VaeLoss vae_loss(const VaeModel& model, Tape& t, std::span<const VaeExample> examples, Rng* rng) {
    VaeLoss l;
    l.enc = model.encode(t, examples, rng);
    const FlatTargets ft = flat_targets(examples);
    l.targets = ft.total;
    std::vector<Var> terms;
    if (ft.total > 0) {
        const auto logits = model.decode(t, examples, l.enc.z, ft.rows);
        for (int c = 0; c < kCategories; ++c) {
            const auto ci = static_cast<std::size_t>(c);
            if (ft.labels[ci].empty()) continue;
            const std::vector<double> w(ft.labels[ci].size(), 1.0 / ft.total);
            terms.push_back(nn::cross_entropy(logits[ci], ft.labels[ci], w));
            const Mat& lv = logits[ci].value();
            for (Eigen::Index r = 0; r < lv.rows(); ++r)
                if (argmax_row(lv, r) == ft.labels[ci][static_cast<std::size_t>(r)]) ++l.correct;
        }
    }
    if (terms.empty()) {
        l.ce = t.constant(Mat::Zero(1, 1));
    } else {
        l.ce = terms[0];
        for (std::size_t i = 1; i < terms.size(); ++i) l.ce = nn::add(l.ce, terms[i]);
    }
    const auto n = static_cast<std::size_t>(l.enc.mu.rows());
    l.kl = nn::kl_standard_normal(l.enc.mu, l.enc.logvar, std::vector<double>(n, 1.0 / static_cast<double>(n)));
    l.total = nn::add(l.ce, nn::scale(l.kl, model.config().kl_weight));
    l.ce_value = l.ce.item();
    l.kl_value = l.kl.item();
    if (!std::isfinite(l.total.item())) throw Error("non-finite VAE loss");
    return l;
}

VaeAccuracy vae_accuracy(const VaeModel& model, std::span<const VaeExample> examples, int chunk) {
    VaeAccuracy acc;
    for (std::size_t b = 0; b < examples.size(); b += static_cast<std::size_t>(chunk)) {
        const auto part = examples.subspan(b, std::min(static_cast<std::size_t>(chunk), examples.size() - b));
        Tape t(false);
        const auto enc = model.encode(t, part, nullptr);
        const FlatTargets ft = flat_targets(part);
        if (ft.total == 0) continue;
        const auto logits = model.decode(t, part, enc.mu, ft.rows);
        for (int c = 0; c < kCategories; ++c) {
            const auto ci = static_cast<std::size_t>(c);
            if (ft.labels[ci].empty()) continue;
            const Mat& lv = logits[ci].value();
            for (Eigen::Index r = 0; r < lv.rows(); ++r) {
                const int label = ft.labels[ci][static_cast<std::size_t>(r)];
                const bool ok = argmax_row(lv, r) == label;
                ++acc.targets;
                acc.correct += ok;
                if (label != none_class(static_cast<Category>(c))) {
                    ++acc.edges;
                    acc.edges_correct += ok;
                }
            }
        }
    }
    return acc;
}

std::vector<std::vector<double>> encode_latents(const VaeModel& model, const VaeExample& ex) {
    Tape t(false);
    const auto enc = model.encode(t, std::span<const VaeExample>(&ex, 1), nullptr);
    const Mat& mu = enc.mu.value();
    std::vector<std::vector<double>> out(static_cast<std::size_t>(mu.rows()));
    for (Eigen::Index r = 0; r < mu.rows(); ++r) out[static_cast<std::size_t>(r)] = std::vector<double>(mu.row(r).data(), mu.row(r).data() + mu.cols());
    return out;
}

RelationGraph decode_relations(const VaeModel& model, const VaeExample& ex, const Mat& z,
                               const std::array<std::vector<std::pair<int, int>>, kCategories>& pairs) {
    Tape t(false);
    const auto logits = model.decode(t, std::span<const VaeExample>(&ex, 1), t.constant(z), pairs);
    RelationGraph g;
    g.nodes = ex.ids;
    for (int c = 0; c < kCategories; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const auto cat = static_cast<Category>(c);
        for (std::size_t k = 0; k < pairs[ci].size(); ++k) {
            const int label = argmax_row(logits[ci].value(), static_cast<Eigen::Index>(k));
            const std::string& src = ex.ids[static_cast<std::size_t>(pairs[ci][k].first)];
            const std::string& dst = ex.ids[static_cast<std::size_t>(pairs[ci][k].second)];
            if (cat == Category::alignment) {
                for (int s = 0; s < 3; ++s)
                    if (label & (1 << s)) g.edges.push_back({src, dst, cat, s});
            } else if (label != none_class(cat)) {
                g.edges.push_back({src, dst, cat, label});
            }
        }
    }
    g.canonicalize();
    return g;
}

Mat relation_ce_gradient(const VaeModel& model, const VaeExample& ex, const Mat& z, double* loss) {
    const auto one = std::span<const VaeExample>(&ex, 1);
    const FlatTargets ft = flat_targets(one);
    if (loss != nullptr) *loss = 0.0;
    if (ft.total == 0) return Mat::Zero(z.rows(), z.cols());
    Tape t;
    t.params_constant();
    const Var zv = t.input(z);
    const auto logits = model.decode(t, one, zv, ft.rows);
    std::vector<Var> terms;
    for (int c = 0; c < kCategories; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        if (ft.labels[ci].empty()) continue;
        const std::vector<double> w(ft.labels[ci].size(), 1.0 / ft.total);
        terms.push_back(nn::cross_entropy(logits[ci], ft.labels[ci], w));
    }
    Var ce = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) ce = nn::add(ce, terms[i]);
    if (loss != nullptr) *loss = ce.item();
    t.backward(ce);
    return t.grad(zv.id);
}

}  // namespace caslayout::gen
