#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "caslayout/nn/layers.hpp"
#include "caslayout/scene.hpp"

namespace caslayout::gen {

using nn::Mat;
using nn::ParamStore;
using nn::Tape;
using nn::Var;
using scene::FloorGrid;
using scene::StageVector;
using scene::Vocabulary;

/// gamma(t) = prod_{s<=t} (1 - beta_s) with beta linear from beta_start to
/// beta_end, both scaled by 1000/T (capped below 1).
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;   // beta[1..T]; beta[0] = 0
    std::vector<double> gamma;  // gamma[0..T]; gamma[0] = 1

    static NoiseSchedule linear(int T, double beta_start = 1e-4, double beta_end = 0.02);
    /// Throws Error unless 0 <= t <= T.
    double at(int t) const;
    /// Variance of the ancestral step t -> t-1.
    double posterior_variance(int t) const;
};

/// sqrt(gamma) x0 + sqrt(1 - gamma) eps where mask != 0; other entries are copied.
Mat q_sample(const NoiseSchedule& schedule, const Mat& x0, int t, const Mat& eps, const Mat& mask);

/// Scales applied before diffusion: translation / translation_scale,
/// (size - size_offset) / size_scale, type one-hot as 2v - 1.
struct Normalization {
    double translation_scale = 3.0;
    double size_offset = 1.0;
    double size_scale = 1.0;
};

/// Column layout of a stage's flattened node vector.
struct FieldLayout {
    int stage = 1;
    int type_width = 0;
    std::array<int, scene::kFieldCount> offset{};  // -1 when absent
    std::array<int, scene::kFieldCount> width{};
    int total = 0;

    static FieldLayout make(int stage, const Vocabulary& vocab);
    bool has(scene::Field f) const { return offset[static_cast<std::size_t>(f)] >= 0; }
    int off(scene::Field f) const { return offset[static_cast<std::size_t>(f)]; }
    int wid(scene::Field f) const { return width[static_cast<std::size_t>(f)]; }
};

struct EncodedNodes {
    Mat x;       // normalized values; zero where neither known nor target
    Mat known;   // 1 on known entries
    Mat target;  // 1 on target entries
    Mat flags;   // per row: known bits then target bits, one per field
    std::vector<int> pe;
    std::vector<int> arch_rows;
};

EncodedNodes encode_nodes(const FieldLayout& layout, const Normalization& norm, std::span<const StageVector> nodes);
/// Writes the target fields of rows [row0, row0 + nodes.size()) back into nodes.
/// Types decode by argmax; rotations are renormalized to unit length.
void decode_targets(const FieldLayout& layout, const Normalization& norm, const Mat& x, int row0,
                    std::vector<StageVector>& nodes);

struct StageConfig {
    int stage = 4;
    int width = 128;
    int heads = 4;
    int blocks = 5;
    bool floor_tokens = true;
    int patch = 8;
    int grid_rows = scene::kDefaultGridCells;
    int grid_cols = scene::kDefaultGridCells;
    int n_max = scene::kDefaultNMax;
    Normalization norm;
};

/// Node vectors of several scenes flattened into one row block each.
struct StageBatch {
    EncodedNodes enc;
    std::vector<int> begin;  // scene s owns rows [begin[s], begin[s+1])
    Mat floor;               // patch rows, patches_per_scene per scene
    int patches_per_scene = 0;
    Mat recon_target;        // arch rows: normalized size, translation, rotation
    Mat recon_weight;        // 1 / (m_s * scenes) per entry

    int scenes() const { return static_cast<int>(begin.size()) - 1; }
    int rows() const { return static_cast<int>(enc.x.rows()); }
};

class StageModel {
public:
    StageModel(const StageConfig& cfg, const Vocabulary& vocab, std::uint64_t seed);
    StageModel(StageModel&&) = default;

    const StageConfig& config() const { return cfg_; }
    const FieldLayout& layout() const { return layout_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    StageBatch make_batch(std::span<const std::vector<StageVector>> scenes, std::span<const FloorGrid* const> floors) const;

    struct Output {
        Var eps;    // rows x layout.total
        Var recon;  // arch rows x 8
    };
    /// `latents` (rows x 32) replaces the latent columns of x_t as the
    /// stage-4 condition; used by co-training.
    Output forward(Tape& t, const StageBatch& batch, Var x_t, const std::vector<int>& steps,
                   std::optional<Var> latents = std::nullopt) const;

private:
    StageConfig cfg_;
    FieldLayout layout_;
    ParamStore params_;
    nn::Linear in_type_, in_spatial_, in_extra_;
    nn::Embedding pe_;
    nn::Mlp time_;
    nn::Linear floor_in_;
    nn::Embedding floor_pos_;
    nn::LayerNorm floor_ln_;
    nn::Linear latent_in_;
    nn::LayerNorm latent_ln_;
    std::vector<nn::AttentionBlock> self_, latent_cross_, floor_cross_;
    std::vector<nn::FeedForward> ff_;
    nn::LayerNorm out_ln_;
    nn::Linear eps_head_, recon_head_;
};

struct StageLoss {
    Var eps;
    Var recon;
    double eps_value = 0.0;
    double recon_value = 0.0;
};

/// Noise-prediction MSE over target entries and architectural OBB
/// reconstruction, with one random step per scene. Throws on a non-finite loss.
StageLoss stage_losses(const StageModel& model, Tape& t, const StageBatch& batch, const NoiseSchedule& schedule,
                       Rng& rng, std::optional<Var> latents = std::nullopt);

/// Same, with fixed steps and noise (tests).
StageLoss stage_losses_at(const StageModel& model, Tape& t, const StageBatch& batch, const NoiseSchedule& schedule,
                          const std::vector<int>& steps, const Mat& eps, std::optional<Var> latents = std::nullopt);

struct SampleOptions {
    /// Called after each reverse step with the step index, the current x0
    /// estimate and the new state (mutable; only target entries are kept).
    std::function<void(int, const Mat&, Mat&)> guide;
};

/// Ancestral DDPM sampling of the target fields; everything else is returned
/// bit-unchanged.
std::vector<std::vector<StageVector>> ddpm_sample(const StageModel& model, const NoiseSchedule& schedule,
                                                  std::vector<std::vector<StageVector>> scenes,
                                                  std::span<const FloorGrid* const> floors, Rng& rng,
                                                  const SampleOptions& opts = {});

/// Per-row sampling primitive shared with the toy models: one reverse step on
/// the masked entries of x given the predicted noise.
void reverse_step(const NoiseSchedule& schedule, int t, const Mat& eps_hat, const Mat& mask, Mat& x, Rng& rng);

}  // namespace caslayout::gen
