#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caslayout/generative/diffusion.hpp"
#include "caslayout/relations.hpp"
#include "caslayout/sparse_graph.hpp"

namespace caslayout::gen {

using relations::Category;
using relations::RelationGraph;
using scene::Scene;
using sparse::ZoneTable;

inline constexpr int kCategories = relations::kCategoryCount;
/// Distinct (category, subcategory) edge kinds.
inline constexpr int kRelationKinds = 16;

enum class EncoderVariant { in_out, in_only, out_only, mixed };
std::string_view variant_name(EncoderVariant v);
EncoderVariant variant_from_name(std::string_view name);

/// Output classes of a category head. Alignment predicts the subset of
/// alignment labels as a bitmask (0 = None); the other heads predict one
/// subcategory or None (last class).
int head_classes(Category c);
int none_class(Category c);

struct VaeConfig {
    int width = 128;
    int heads = 4;
    int enc_blocks = 3;
    int dec_blocks = 3;
    EncoderVariant variant = EncoderVariant::in_out;
    double kl_weight = 1e-3;
    int n_max = scene::kDefaultNMax;
    Normalization norm;
};

struct PairTarget {
    int src = 0;  // node index within the example
    int dst = 0;
    int label = 0;
};

/// One scene prepared for the VAE. Nodes are the non-empty slots in slot order.
struct VaeExample {
    std::vector<std::string> ids;
    std::vector<int> slot;
    std::vector<int> pe;
    std::vector<bool> arch;
    Mat node_in;
    struct Edge {
        int src = 0;
        int dst = 0;
        int kind = 0;
    };
    std::vector<Edge> edges;
    std::array<std::vector<PairTarget>, kCategories> targets;

    int nodes() const { return static_cast<int>(ids.size()); }
    int target_count() const;
};

int relation_kind(Category c, int subcategory);

/// Node features: furniture carries its type only; architecture adds its OBB.
/// Throws Error on an edge whose endpoint is not a scene element.
VaeExample make_vae_example(const Scene& scene, const RelationGraph& graph, const Vocabulary& vocab,
                            const Normalization& norm);

/// Pairs scored by each head, from the zones of the scene: admitted furniture
/// pairs for direction, distance, alignment and symmetry (src id < dst id),
/// every furniture-architecture pair for arch_distance.
std::array<std::vector<std::pair<int, int>>, kCategories> candidate_pairs(const VaeExample& ex, const Scene& scene,
                                                                          const Vocabulary& vocab,
                                                                          const ZoneTable& table);

/// Fills ex.targets from `truth` (usually the sparse graph) over candidate_pairs.
void add_targets(VaeExample& ex, const Scene& scene, const RelationGraph& truth, const Vocabulary& vocab,
                 const ZoneTable& table);

/// Training example: sparse graph edges in, sparse graph targets out.
VaeExample make_training_example(const Scene& scene, const Vocabulary& vocab, const ZoneTable& table,
                                 const Normalization& norm);

class VaeModel {
public:
    VaeModel(const VaeConfig& cfg, const Vocabulary& vocab, std::uint64_t seed);
    VaeModel(VaeModel&&) = default;

    const VaeConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    struct Encoded {
        Var mu;
        Var logvar;
        Var z;
    };
    /// Rows follow the examples' nodes in order. With rng, z = mu + sigma * eps;
    /// without, z = mu.
    Encoded encode(Tape& t, std::span<const VaeExample> examples, Rng* rng) const;

    /// Logits per category for the given pairs (node rows of z).
    std::array<Var, kCategories> decode(Tape& t, std::span<const VaeExample> examples, Var z,
                                        const std::array<std::vector<std::pair<int, int>>, kCategories>& rows) const;

private:
    VaeConfig cfg_;
    ParamStore params_;
    nn::Linear node_in_;
    nn::Embedding pe_;
    nn::Embedding edge_src_, edge_dst_, edge_kind_;
    nn::Mlp edge_mlp_;
    nn::LayerNorm edge_ln_;
    std::vector<nn::AttentionBlock> cross_in_, cross_out_, cross_mixed_, enc_self_;
    std::vector<nn::FeedForward> enc_ff_;
    nn::LayerNorm enc_ln_;
    nn::Linear mu_, logvar_;
    nn::Linear dec_in_;
    nn::Embedding dec_pe_;
    std::vector<nn::AttentionBlock> dec_self_;
    std::vector<nn::FeedForward> dec_ff_;
    nn::LayerNorm dec_ln_;
    std::array<nn::Linear, kCategories> pair_a_, pair_b_, pair_out_;
};

struct VaeLoss {
    Var total;
    Var ce;
    Var kl;
    VaeModel::Encoded enc;
    double ce_value = 0.0;
    double kl_value = 0.0;
    int targets = 0;
    int correct = 0;
};

/// Mean cross-entropy over all targets plus kl_weight times the per-node KL
/// (summed over latent dimensions, averaged over nodes).
VaeLoss vae_loss(const VaeModel& model, Tape& t, std::span<const VaeExample> examples, Rng* rng);

struct VaeAccuracy {
    int targets = 0;
    int correct = 0;
    int edges = 0;          // targets that are not None
    int edges_correct = 0;
    double accuracy() const { return targets == 0 ? 1.0 : static_cast<double>(correct) / targets; }
    double edge_recall() const { return edges == 0 ? 1.0 : static_cast<double>(edges_correct) / edges; }
};

/// Deterministic (z = mu) reconstruction accuracy, evaluated in chunks.
VaeAccuracy vae_accuracy(const VaeModel& model, std::span<const VaeExample> examples, int chunk = 64);

/// Latents z = mu per non-empty slot, as stage-4 conditions.
std::vector<std::vector<double>> encode_latents(const VaeModel& model, const VaeExample& ex);

/// Edges predicted on the given pairs from latents (rows = ex nodes).
RelationGraph decode_relations(const VaeModel& model, const VaeExample& ex, const Mat& z,
                               const std::array<std::vector<std::pair<int, int>>, kCategories>& pairs);

/// Gradient of the mean cross-entropy of ex.targets with respect to the
/// latents z (rows = ex nodes). Zero when ex has no targets.
Mat relation_ce_gradient(const VaeModel& model, const VaeExample& ex, const Mat& z, double* loss = nullptr);

}  // namespace caslayout::gen
