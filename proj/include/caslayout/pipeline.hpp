#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "caslayout/errors.hpp"
#include "caslayout/generative/training.hpp"
#include "caslayout/synth.hpp"

namespace caslayout::pipeline {

using relations::RelationGraph;
using scene::Scene;
using scene::Vocabulary;

/// A stage or application failed; `stage()` is 1..4, 0 for the VAE.
class StageFailure : public Error {
public:
    StageFailure(int stage, const std::string& msg)
        : Error((stage == 0 ? std::string("vae") : "stage " + std::to_string(stage)) + ": " + msg), stage_(stage) {}
    int stage() const { return stage_; }

private:
    int stage_;
};

/// Trained models plus the vocabulary, zone table and catalog they were
/// trained with. Any model may be absent; applications throw when they need it.
struct Models {
    Vocabulary vocab;
    sparse::ZoneTable zones;
    synth::Catalog catalog;
    std::array<std::optional<gen::StageModel>, 4> stages;
    std::array<gen::NoiseSchedule, 4> schedules;
    std::optional<gen::VaeModel> vae;

    const gen::StageModel& stage(int s) const;
    const gen::NoiseSchedule& schedule(int s) const;
    const gen::VaeModel& relation_vae() const;

    /// Reads stage1..stage4 and vae (`<name>.ckpt` + `<name>.json`) from dir.
    static Models load(const std::string& dir);
};

/// Vocabulary, zones and catalog named by a run config (builtins when empty).
void resolve_resources(const gen::RunConfig& cfg, Vocabulary& vocab, sparse::ZoneTable& zones, synth::Catalog& catalog);

/// Writes `<dir>/<name>.ckpt` and its config `<dir>/<name>.json`.
void save_model(const std::string& dir, const std::string& name, const nn::ParamStore& params, const gen::RunConfig& cfg);

struct Options {
    /// Step size factor of the stage-3 relation guidance in completion.
    double guidance_scale = 0.1;
};

/// Stages 1 -> 4 on a room without free furniture.
Scene generate(const Scene& room, const Models& models, Rng& rng, const Options& opts = {});
/// Stages 3 -> 4; types, sizes and features are kept.
Scene rearrange(const Scene& scene, const Models& models, Rng& rng);
/// Stages 1 -> 4 around the conditioned elements, which stay bit-unchanged.
Scene complete(const Scene& partial, const Models& models, Rng& rng, const Options& opts = {});
/// Stage 4 conditioned on the VAE encoding (z = mu) of a user graph.
Scene graph_conditioned(const Scene& objects, const RelationGraph& graph, const Models& models, Rng& rng);

struct EditSpec {
    struct Override {
        std::string id;
        std::string field;  // type | size | feature | translation | rotation
        /// type: label or null (removes the element); rotation: degrees or
        /// [cos, sin]; others: number arrays.
        std::string value_json;
    };
    std::vector<std::string> preserve;
    std::vector<Override> overrides;

    static EditSpec from_json(std::string_view text);
};

/// Preserved elements stay bit-unchanged, overrides are applied, and every
/// other field of the remaining furniture is regenerated (stages 2 -> 4).
Scene edit(const Scene& scene, const EditSpec& spec, const Models& models, Rng& rng);

/// Sparse relations among the conditioned furniture and the architecture.
RelationGraph partial_relations(const Scene& scene, const Vocabulary& vocab, const sparse::ZoneTable& zones);

}  // namespace caslayout::pipeline
