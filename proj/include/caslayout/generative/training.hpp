#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "caslayout/generative/diffusion.hpp"
#include "caslayout/generative/vae.hpp"

namespace caslayout::gen {

/// Hyperparameters of one training run. Every field has a default; JSON
/// documents are merged over them and unknown keys are rejected.
struct RunConfig {
    std::string stage = "4";  // 1..4, vae, cotrain
    std::uint64_t seed = 0;
    std::string vocab = "living";
    std::string zones;    // ZoneTable JSON path; builtin when empty
    std::string catalog;  // Catalog JSON path; builtin when empty
    int T = 1000;

    int width = 128;
    int heads = 4;
    int blocks = 5;
    bool floor_tokens = true;
    int patch = 8;

    int vae_width = 128;
    int vae_heads = 4;
    int enc_blocks = 3;
    int dec_blocks = 3;
    std::string variant = "in_out";
    double kl_weight = 1e-3;

    double lr = 1e-4;
    double decay = 0.02;  // per epoch: lr_e = lr * (1 - decay)^e
    double weight_decay = 0.01;
    int batch = 32;
    int epochs = 50;
    long max_steps = 0;  // 0 = no cap
    bool freeze_vae = false;

    scene::AugmentPolicy augment;

    int n_max = scene::kDefaultNMax;
    int grid = scene::kDefaultGridCells;
    double meters_per_cell = scene::kDefaultMetersPerCell;

    std::string data;
    std::string out;

    /// Batch 256 for 2000 epochs; everything else as the defaults.
    static RunConfig paper_defaults();
    static RunConfig from_json(std::string_view text);
    static RunConfig load(const std::string& path);
    std::string to_json() const;

    StageConfig stage_config(int stage) const;
    VaeConfig vae_config() const;
    NoiseSchedule schedule() const { return NoiseSchedule::linear(T); }
};

/// Per-slot latents from the deterministic VAE encoding of a scene's sparse graph.
scene::RelationLatents scene_latents(const VaeModel& vae, const scene::Scene& s, const Vocabulary& vocab,
                                     const ZoneTable& zones);

struct CoLoss {
    double total = 0.0;
    double vae = 0.0;
    double eps = 0.0;
    double recon = 0.0;
};

/// One joint update: vae_loss + eps + recon of stage 4 conditioned on the
/// sampled latents z, with gradients reaching the encoder through z. A null
/// vae_opt (or frozen VAE parameters) leaves the VAE untouched.
CoLoss cotrain_step(VaeModel& vae, StageModel& stage4, nn::AdamW* vae_opt, nn::AdamW& stage_opt,
                    std::span<const scene::Scene> batch, const NoiseSchedule& schedule, const Vocabulary& vocab,
                    const ZoneTable& zones, Rng& rng);

/// Losses without updating anything, for additivity checks.
CoLoss cotrain_losses(const VaeModel& vae, const StageModel& stage4, std::span<const scene::Scene> batch,
                      const NoiseSchedule& schedule, const Vocabulary& vocab, const ZoneTable& zones, Rng& rng);

struct TrainLog {
    std::vector<double> epoch_loss;
    long steps = 0;
};

using Progress = std::function<void(int epoch, double loss)>;

TrainLog train_vae(VaeModel& vae, const std::vector<scene::Scene>& scenes, const RunConfig& cfg, const Vocabulary& vocab,
                   const ZoneTable& zones, const Progress& progress = {});

/// Stages 3 and 4 take their latents from `vae` (required for them).
TrainLog train_stage(StageModel& model, const std::vector<scene::Scene>& scenes, const RunConfig& cfg,
                     const Vocabulary& vocab, const ZoneTable& zones, const VaeModel* vae,
                     const Progress& progress = {});

/// Joint VAE + stage-4 training; with cfg.freeze_vae the VAE only supplies latents.
TrainLog cotrain(VaeModel& vae, StageModel& stage4, const std::vector<scene::Scene>& scenes, const RunConfig& cfg,
                 const Vocabulary& vocab, const ZoneTable& zones, const Progress& progress = {});

}  // namespace caslayout::gen
