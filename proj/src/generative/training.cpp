#include "caslayout/generative/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "caslayout/errors.hpp"

namespace caslayout::gen {

using json = nlohmann::json;
using scene::Scene;

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::paper_defaults() {
    RunConfig c;
    c.batch = 256;
    c.epochs = 2000;
    return c;
}

std::string RunConfig::to_json() const {
    json j = {
        {"stage", stage},
        {"seed", seed},
        {"vocab", vocab},
        {"zones", zones},
        {"catalog", catalog},
        {"T", T},
        {"model", {{"width", width}, {"heads", heads}, {"blocks", blocks}, {"floor_tokens", floor_tokens}, {"patch", patch}}},
        {"vae",
         {{"width", vae_width},
          {"heads", vae_heads},
          {"enc_blocks", enc_blocks},
          {"dec_blocks", dec_blocks},
          {"variant", variant},
          {"kl_weight", kl_weight}}},
        {"optim",
         {{"lr", lr},
          {"decay", decay},
          {"weight_decay", weight_decay},
          {"batch", batch},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"freeze_vae", freeze_vae}}},
        {"augment",
         {{"permute", augment.permute},
          {"rotate", augment.rotate},
          {"arch_mask_prob", augment.arch_mask_prob},
          {"floor_free_prob", augment.floor_free_prob},
          {"completion_prob", augment.completion_prob}}},
        {"scene", {{"n_max", n_max}, {"grid", grid}, {"meters_per_cell", meters_per_cell}}},
        {"data", data},
        {"out", out},
    };
    return j.dump(2);
}

namespace {

void merge(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw ParseError(path, "expected an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string p = path + "." + it.key();
        if (!base.contains(it.key())) throw ParseError(p, "unknown field");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge(slot, *it, p);
        } else {
            const bool ok = (slot.is_number() && it->is_number()) || (slot.is_boolean() && it->is_boolean()) ||
                            (slot.is_string() && it->is_string());
            if (!ok) throw ParseError(p, "wrong type, expected " + std::string(slot.type_name()));
            slot = *it;
        }
    }
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text) {
    json patch;
    try {
        patch = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError("$", std::string("invalid JSON: ") + e.what());
    }
    json j = json::parse(RunConfig{}.to_json());
    merge(j, patch, "$");
    RunConfig c;
    try {
        c.stage = j["stage"].get<std::string>();
        c.seed = j["seed"].get<std::uint64_t>();
        c.vocab = j["vocab"].get<std::string>();
        c.zones = j["zones"].get<std::string>();
        c.catalog = j["catalog"].get<std::string>();
        c.T = j["T"].get<int>();
        const auto& m = j["model"];
        c.width = m["width"].get<int>();
        c.heads = m["heads"].get<int>();
        c.blocks = m["blocks"].get<int>();
        c.floor_tokens = m["floor_tokens"].get<bool>();
        c.patch = m["patch"].get<int>();
        const auto& v = j["vae"];
        c.vae_width = v["width"].get<int>();
        c.vae_heads = v["heads"].get<int>();
        c.enc_blocks = v["enc_blocks"].get<int>();
        c.dec_blocks = v["dec_blocks"].get<int>();
        c.variant = v["variant"].get<std::string>();
        c.kl_weight = v["kl_weight"].get<double>();
        const auto& o = j["optim"];
        c.lr = o["lr"].get<double>();
        c.decay = o["decay"].get<double>();
        c.weight_decay = o["weight_decay"].get<double>();
        c.batch = o["batch"].get<int>();
        c.epochs = o["epochs"].get<int>();
        c.max_steps = o["max_steps"].get<long>();
        c.freeze_vae = o["freeze_vae"].get<bool>();
        const auto& a = j["augment"];
        c.augment.permute = a["permute"].get<bool>();
        c.augment.rotate = a["rotate"].get<bool>();
        c.augment.arch_mask_prob = a["arch_mask_prob"].get<double>();
        c.augment.floor_free_prob = a["floor_free_prob"].get<double>();
        c.augment.completion_prob = a["completion_prob"].get<double>();
        const auto& s = j["scene"];
        c.n_max = s["n_max"].get<int>();
        c.grid = s["grid"].get<int>();
        c.meters_per_cell = s["meters_per_cell"].get<double>();
        c.data = j["data"].get<std::string>();
        c.out = j["out"].get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError("$", e.what());
    }
    static const std::vector<std::string> stages = {"1", "2", "3", "4", "vae", "cotrain"};
    if (std::find(stages.begin(), stages.end(), c.stage) == stages.end())
        throw ParseError("$.stage", "expected one of 1, 2, 3, 4, vae, cotrain");
    if (c.T < 1) throw ParseError("$.T", "must be >= 1");
    if (c.batch < 1) throw ParseError("$.optim.batch", "must be >= 1");
    if (c.epochs < 0) throw ParseError("$.optim.epochs", "must be >= 0");
    if (c.lr <= 0) throw ParseError("$.optim.lr", "must be positive");
    if (c.decay < 0 || c.decay >= 1) throw ParseError("$.optim.decay", "must be in [0, 1)");
    variant_from_name(c.variant);
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

StageConfig RunConfig::stage_config(int stage) const {
    StageConfig c;
    c.stage = stage;
    c.width = width;
    c.heads = heads;
    c.blocks = blocks;
    c.floor_tokens = floor_tokens;
    c.patch = patch;
    c.grid_rows = grid;
    c.grid_cols = grid;
    c.n_max = n_max;
    return c;
}

VaeConfig RunConfig::vae_config() const {
    VaeConfig c;
    c.width = vae_width;
    c.heads = vae_heads;
    c.enc_blocks = enc_blocks;
    c.dec_blocks = dec_blocks;
    c.variant = variant_from_name(variant);
    c.kl_weight = kl_weight;
    c.n_max = n_max;
    return c;
}

// ---------------------------------------------------------------------------

scene::RelationLatents scene_latents(const VaeModel& vae, const Scene& s, const Vocabulary& vocab, const ZoneTable& zones) {
    const VaeExample ex = make_training_example(s, vocab, zones, vae.config().norm);
    const auto z = encode_latents(vae, ex);
    scene::RelationLatents out(s.elements.size());
    for (int i = 0; i < ex.nodes(); ++i) out[static_cast<std::size_t>(ex.slot[static_cast<std::size_t>(i)])] = z[static_cast<std::size_t>(i)];
    return out;
}

namespace {

scene::RelationLatents zero_latents(const Scene& s) {
    scene::RelationLatents out(s.elements.size());
    for (std::size_t i = 0; i < s.elements.size(); ++i)
        if (!s.elements[i].is_empty()) out[i].assign(scene::kLatentDim, 0.0);
    return out;
}

struct CoParts {
    VaeLoss vae;
    StageLoss stage;
    Var total;
};

CoParts co_forward(const VaeModel& vae, const StageModel& stage4, Tape& t, std::span<const Scene> batch,
                   const NoiseSchedule& schedule, const Vocabulary& vocab, const ZoneTable& zones, Rng& rng) {
    std::vector<VaeExample> examples;
    std::vector<std::vector<scene::StageVector>> nodes;
    std::vector<const scene::FloorGrid*> floors;
    for (const auto& s : batch) {
        examples.push_back(make_training_example(s, vocab, zones, vae.config().norm));
        const auto lat = zero_latents(s);
        nodes.push_back(scene::stage_ground_truth(s, 4, vocab, &lat));
        if (nodes.back().size() != static_cast<std::size_t>(examples.back().nodes()))
            throw Error("VAE nodes and stage-4 nodes disagree");
        floors.push_back(&s.floor);
    }
    const StageBatch sb = stage4.make_batch(nodes, floors);
    CoParts p;
    p.vae = vae_loss(vae, t, examples, &rng);
    p.stage = stage_losses(stage4, t, sb, schedule, rng, p.vae.enc.z);
    p.total = nn::add(p.vae.total, nn::add(p.stage.eps, p.stage.recon));
    return p;
}

CoLoss values(const CoParts& p) {
    return {p.total.item(), p.vae.total.item(), p.stage.eps_value, p.stage.recon_value};
}

nn::AdamW make_opt(const RunConfig& cfg) {
    nn::AdamWConfig a;
    a.lr = cfg.lr;
    a.weight_decay = cfg.weight_decay;
    return nn::AdamW(a);
}

std::vector<Scene> augmented(const std::vector<Scene>& scenes, const std::vector<std::size_t>& idx, std::size_t b0,
                             std::size_t b1, const scene::AugmentPolicy& policy, Rng& rng) {
    std::vector<Scene> out;
    for (std::size_t i = b0; i < b1; ++i) out.push_back(scene::augment(scenes[idx[i]], policy, rng));
    return out;
}

/// Shared epoch loop: `step` consumes one augmented batch and returns its loss.
TrainLog run_epochs(const std::vector<Scene>& scenes, const RunConfig& cfg, Rng& rng,
                    const std::vector<nn::AdamW*>& opts, const Progress& progress,
                    const std::function<double(std::span<const Scene>)>& step) {
    if (scenes.empty()) throw Error("training corpus is empty");
    TrainLog log;
    std::vector<std::size_t> idx(scenes.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto B = static_cast<std::size_t>(cfg.batch);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr * std::pow(1.0 - cfg.decay, epoch);
        for (auto* o : opts) o->set_lr(lr);
        rng.shuffle(std::span<std::size_t>(idx));
        double sum = 0.0;
        int count = 0;
        for (std::size_t b = 0; b < idx.size(); b += B) {
            if (cfg.max_steps > 0 && log.steps >= cfg.max_steps) break;
            const auto batch = augmented(scenes, idx, b, std::min(idx.size(), b + B), cfg.augment, rng);
            sum += step(batch);
            ++count;
            ++log.steps;
        }
        if (count == 0) break;
        log.epoch_loss.push_back(sum / count);
        if (progress) progress(epoch, log.epoch_loss.back());
    }
    return log;
}

}  // namespace

CoLoss cotrain_losses(const VaeModel& vae, const StageModel& stage4, std::span<const Scene> batch,
                      const NoiseSchedule& schedule, const Vocabulary& vocab, const ZoneTable& zones, Rng& rng) {
    Tape t(false);
    return values(co_forward(vae, stage4, t, batch, schedule, vocab, zones, rng));
}

CoLoss cotrain_step(VaeModel& vae, StageModel& stage4, nn::AdamW* vae_opt, nn::AdamW& stage_opt,
                    std::span<const Scene> batch, const NoiseSchedule& schedule, const Vocabulary& vocab,
                    const ZoneTable& zones, Rng& rng) {
    vae.params().zero_grad();
    stage4.params().zero_grad();
    Tape t;
    const CoParts p = co_forward(vae, stage4, t, batch, schedule, vocab, zones, rng);
    t.backward(p.total);
    if (vae_opt != nullptr) vae_opt->step(vae.params());
    stage_opt.step(stage4.params());
    return values(p);
}

TrainLog train_vae(VaeModel& vae, const std::vector<Scene>& scenes, const RunConfig& cfg, const Vocabulary& vocab,
                   const ZoneTable& zones, const Progress& progress) {
    Rng rng(cfg.seed);
    auto opt = make_opt(cfg);
    return run_epochs(scenes, cfg, rng, {&opt}, progress, [&](std::span<const Scene> batch) {
        std::vector<VaeExample> ex;
        for (const auto& s : batch) ex.push_back(make_training_example(s, vocab, zones, vae.config().norm));
        vae.params().zero_grad();
        Tape t;
        const auto l = vae_loss(vae, t, ex, &rng);
        t.backward(l.total);
        opt.step(vae.params());
        return l.total.item();
    });
}

TrainLog train_stage(StageModel& model, const std::vector<Scene>& scenes, const RunConfig& cfg, const Vocabulary& vocab,
                     const ZoneTable& zones, const VaeModel* vae, const Progress& progress) {
    const int stage = model.config().stage;
    if (stage >= 3 && vae == nullptr) throw Error("stage " + std::to_string(stage) + " training needs a trained VAE");
    Rng rng(cfg.seed);
    auto opt = make_opt(cfg);
    const auto schedule = cfg.schedule();
    return run_epochs(scenes, cfg, rng, {&opt}, progress, [&](std::span<const Scene> batch) {
        std::vector<std::vector<scene::StageVector>> nodes;
        std::vector<const scene::FloorGrid*> floors;
        for (const auto& s : batch) {
            if (stage >= 3) {
                const auto lat = scene_latents(*vae, s, vocab, zones);
                nodes.push_back(scene::stage_ground_truth(s, stage, vocab, &lat));
            } else {
                nodes.push_back(scene::stage_ground_truth(s, stage, vocab));
            }
            floors.push_back(&s.floor);
        }
        const auto sb = model.make_batch(nodes, floors);
        model.params().zero_grad();
        Tape t;
        const auto l = stage_losses(model, t, sb, schedule, rng);
        t.backward(nn::add(l.eps, l.recon));
        opt.step(model.params());
        return l.eps_value + l.recon_value;
    });
}

TrainLog cotrain(VaeModel& vae, StageModel& stage4, const std::vector<Scene>& scenes, const RunConfig& cfg,
                 const Vocabulary& vocab, const ZoneTable& zones, const Progress& progress) {
    if (stage4.config().stage != 4) throw Error("co-training needs the stage-4 model");
    Rng rng(cfg.seed);
    auto vae_opt = make_opt(cfg);
    auto stage_opt = make_opt(cfg);
    const auto schedule = cfg.schedule();
    vae.params().set_frozen("", cfg.freeze_vae);
    std::vector<nn::AdamW*> opts = {&stage_opt};
    if (!cfg.freeze_vae) opts.push_back(&vae_opt);
    auto log = run_epochs(scenes, cfg, rng, opts, progress, [&](std::span<const Scene> batch) {
        return cotrain_step(vae, stage4, cfg.freeze_vae ? nullptr : &vae_opt, stage_opt, batch, schedule, vocab, zones, rng)
            .total;
    });
    vae.params().set_frozen("", false);
    return log;
}

}  // namespace caslayout::gen
