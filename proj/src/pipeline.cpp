#include "caslayout/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace caslayout::pipeline {

using json = nlohmann::json;
using scene::ElementClass;
using scene::ElementKind;
using scene::Field;
using scene::RelationLatents;
using scene::SceneElement;
using scene::StageVector;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Models

const gen::StageModel& Models::stage(int s) const {
    if (s < 1 || s > 4) throw Error("stage must be 1..4");
    const auto& m = stages[static_cast<std::size_t>(s - 1)];
    if (!m) throw StageFailure(s, "model not loaded");
    return *m;
}

const gen::NoiseSchedule& Models::schedule(int s) const {
    stage(s);
    return schedules[static_cast<std::size_t>(s - 1)];
}

const gen::VaeModel& Models::relation_vae() const {
    if (!vae) throw StageFailure(0, "model not loaded");
    return *vae;
}

void resolve_resources(const gen::RunConfig& cfg, Vocabulary& vocab, sparse::ZoneTable& zones, synth::Catalog& catalog) {
    vocab = Vocabulary::resolve(cfg.vocab);
    zones = cfg.zones.empty() ? sparse::ZoneTable::builtin(vocab) : sparse::ZoneTable::load(cfg.zones);
    zones.validate(vocab);
    catalog = cfg.catalog.empty() ? synth::Catalog::builtin(vocab) : synth::Catalog::load(cfg.catalog);
}

void save_model(const std::string& dir, const std::string& name, const nn::ParamStore& params, const gen::RunConfig& cfg) {
    fs::create_directories(dir);
    nn::save_checkpoint(params, (fs::path(dir) / (name + ".ckpt")).string());
    const auto path = (fs::path(dir) / (name + ".json")).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << cfg.to_json() << "\n";
}

Models Models::load(const std::string& dir) {
    Models m;
    bool resolved = false;
    auto config_of = [&](const std::string& name) -> std::optional<gen::RunConfig> {
        const auto path = fs::path(dir) / (name + ".json");
        if (!fs::exists(path)) return std::nullopt;
        auto cfg = gen::RunConfig::load(path.string());
        if (!resolved) {
            resolve_resources(cfg, m.vocab, m.zones, m.catalog);
            resolved = true;
        }
        return cfg;
    };
    auto ckpt = [&](const std::string& name) { return (fs::path(dir) / (name + ".ckpt")).string(); };
    for (int s = 1; s <= 4; ++s) {
        const std::string name = "stage" + std::to_string(s);
        const auto cfg = config_of(name);
        if (!cfg) continue;
        gen::StageModel model(cfg->stage_config(s), m.vocab, cfg->seed);
        nn::load_checkpoint(model.params(), ckpt(name));
        m.stages[static_cast<std::size_t>(s - 1)].emplace(std::move(model));
        m.schedules[static_cast<std::size_t>(s - 1)] = cfg->schedule();
    }
    if (const auto cfg = config_of("vae")) {
        gen::VaeModel model(cfg->vae_config(), m.vocab, cfg->seed);
        nn::load_checkpoint(model.params(), ckpt("vae"));
        m.vae.emplace(std::move(model));
    }
    if (!resolved) throw Error("no models found in '" + dir + "'");
    return m;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::string fresh_id(const Scene& s, const std::string& label, int slot) {
    std::string id = label + "_" + std::to_string(slot);
    for (int k = 2; ; ++k) {
        const int at = s.index_of(id);
        if (at < 0 || at == slot) return id;
        id = label + "_" + std::to_string(slot) + "_" + std::to_string(k);
    }
}

template <class F>
auto in_stage(int stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageFailure&) {
        throw;
    } catch (const Error& e) {
        throw StageFailure(stage, e.what());
    }
}

std::vector<StageVector> sample(const Models& m, int stage, std::vector<StageVector> nodes, const Scene& s, Rng& rng,
                                const gen::SampleOptions& opts = {}) {
    std::vector<std::vector<StageVector>> batch{std::move(nodes)};
    const scene::FloorGrid* floor = &s.floor;
    auto out = gen::ddpm_sample(m.stage(stage), m.schedule(stage), std::move(batch),
                                std::span<const scene::FloorGrid* const>(&floor, 1), rng, opts);
    return std::move(out[0]);
}

void stage1(Scene& s, const Models& m, Rng& rng) {
    in_stage(1, [&] {
        const auto out = sample(m, 1, scene::encode_stage(s, 1, m.vocab), s, rng);
        for (const auto& v : out) {
            if (!v.target.has(Field::type)) continue;
            auto& e = s.elements[static_cast<std::size_t>(v.slot)];
            const int pe = e.pe;
            e = SceneElement{};
            e.pe = pe;
            const auto cls = ElementClass::from_type_slot(argmax(v.type), m.vocab);
            if (cls.kind != ElementKind::furniture) continue;
            e.cls = cls;
            e.known = scene::kKnownType;
        }
        for (const auto& v : out) {
            auto& e = s.elements[static_cast<std::size_t>(v.slot)];
            if (v.target.has(Field::type) && e.is_furniture())
                e.id = fresh_id(s, m.vocab.furniture_label(e.cls.label), v.slot);
        }
    });
}

void stage2(Scene& s, const Models& m, Rng& rng) {
    in_stage(2, [&] {
        const auto out = sample(m, 2, scene::encode_stage(s, 2, m.vocab), s, rng);
        for (const auto& v : out) {
            auto& e = s.elements[static_cast<std::size_t>(v.slot)];
            if (v.target.has(Field::size)) {
                e.obb.size = {v.size[0], v.size[1], v.size[2]};
                e.known |= scene::kKnownSize;
            }
            if (v.target.has(Field::feature)) {
                e.feature = m.catalog.nearest(m.vocab.furniture_label(e.cls.label), v.feature).feature;
                e.known |= scene::kKnownFeature;
            }
        }
    });
}

RelationLatents stage3(const Scene& s, const Models& m, Rng& rng, const gen::SampleOptions& opts = {}) {
    return in_stage(3, [&] {
        const auto out = sample(m, 3, scene::encode_stage(s, 3, m.vocab), s, rng, opts);
        RelationLatents lat(s.elements.size());
        for (const auto& v : out) lat[static_cast<std::size_t>(v.slot)] = v.latent;
        return lat;
    });
}

void stage4(Scene& s, const Models& m, const RelationLatents& lat, Rng& rng) {
    in_stage(4, [&] {
        const auto out = sample(m, 4, scene::encode_stage(s, 4, m.vocab, &lat), s, rng);
        for (const auto& v : out) {
            if (!v.target.has(Field::translation)) continue;
            auto& e = s.elements[static_cast<std::size_t>(v.slot)];
            e.obb.translation = {v.translation[0], v.translation[1], v.translation[2]};
            e.obb.heading = geometry::Heading::from_vector(v.rotation[0], v.rotation[1]);
            e.known |= scene::kKnownPlacement;
        }
    });
}

Scene conditioned_only(const Scene& s) {
    Scene p = s;
    for (auto& e : p.elements) {
        if (!e.is_furniture() || e.conditioned) continue;
        const int pe = e.pe;
        e = SceneElement{};
        e.pe = pe;
    }
    return p;
}

/// Stage-3 guidance toward the relations of the conditioned part of `s`.
struct Guidance {
    gen::VaeExample ex;
    bool active = false;

    Guidance(const Scene& s, const Models& m) {
        if (!m.vae) return;
        const auto& vae = *m.vae;
        ex = gen::make_vae_example(s, RelationGraph{}, m.vocab, vae.config().norm);
        const auto part = gen::make_training_example(conditioned_only(s), m.vocab, m.zones, vae.config().norm);
        std::map<std::string, int> row;
        for (int i = 0; i < ex.nodes(); ++i) row[ex.ids[static_cast<std::size_t>(i)]] = i;
        for (std::size_t c = 0; c < part.targets.size(); ++c)
            for (const auto& t : part.targets[c])
                ex.targets[c].push_back({row.at(part.ids[static_cast<std::size_t>(t.src)]),
                                         row.at(part.ids[static_cast<std::size_t>(t.dst)]), t.label});
        active = ex.target_count() > 0;
    }

    gen::SampleOptions options(const Models& m, double scale) const {
        gen::SampleOptions o;
        if (!active || scale == 0.0) return o;
        const int off = m.stage(3).layout().off(Field::latent);
        const auto& sched = m.schedule(3);
        o.guide = [this, &m, off, &sched, scale](int t, const nn::Mat& x0_hat, nn::Mat& x) {
            const nn::Mat z = x0_hat.middleCols(off, scene::kLatentDim);
            const nn::Mat g = gen::relation_ce_gradient(*m.vae, ex, z);
            x.middleCols(off, scene::kLatentDim) -= scale * std::sqrt(1.0 - sched.at(t)) * g;
        };
        return o;
    }
};

Scene cascade(const Scene& input, const Models& m, Rng& rng, double guidance_scale) {
    Scene s = input;
    stage1(s, m, rng);
    stage2(s, m, rng);
    const Guidance guide(s, m);
    const auto lat = stage3(s, m, rng, guide.options(m, guidance_scale));
    stage4(s, m, lat, rng);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Applications

Scene generate(const Scene& room, const Models& models, Rng& rng, const Options& opts) {
    return cascade(room, models, rng, opts.guidance_scale);
}

Scene complete(const Scene& partial, const Models& models, Rng& rng, const Options& opts) {
    return cascade(partial, models, rng, opts.guidance_scale);
}

Scene rearrange(const Scene& input, const Models& models, Rng& rng) {
    Scene s = input;
    const auto lat = stage3(s, models, rng);
    stage4(s, models, lat, rng);
    return s;
}

Scene graph_conditioned(const Scene& objects, const RelationGraph& graph, const Models& models, Rng& rng) {
    const auto& vae = models.relation_vae();
    const auto lat = in_stage(0, [&] {
        const auto ex = gen::make_vae_example(objects, graph, models.vocab, vae.config().norm);
        const auto z = gen::encode_latents(vae, ex);
        RelationLatents out(objects.elements.size());
        for (int i = 0; i < ex.nodes(); ++i)
            out[static_cast<std::size_t>(ex.slot[static_cast<std::size_t>(i)])] = z[static_cast<std::size_t>(i)];
        return out;
    });
    Scene s = objects;
    stage4(s, models, lat, rng);
    return s;
}

RelationGraph partial_relations(const Scene& scene, const Vocabulary& vocab, const sparse::ZoneTable& zones) {
    return sparse::extract_sparse(conditioned_only(scene), vocab, zones);
}

// ---------------------------------------------------------------------------
// Editing

EditSpec EditSpec::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError("$", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("$", "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "preserve" && it.key() != "overrides") throw ParseError("$." + it.key(), "unknown field");
    EditSpec spec;
    if (j.contains("preserve")) {
        if (!j["preserve"].is_array()) throw ParseError("$.preserve", "expected an array of ids");
        for (const auto& id : j["preserve"]) {
            if (!id.is_string()) throw ParseError("$.preserve", "expected an array of ids");
            spec.preserve.push_back(id.get<std::string>());
        }
    }
    if (j.contains("overrides")) {
        if (!j["overrides"].is_array()) throw ParseError("$.overrides", "expected an array");
        int k = 0;
        for (const auto& o : j["overrides"]) {
            const std::string path = "$.overrides[" + std::to_string(k++) + "]";
            if (!o.is_object() || !o.contains("id") || !o.contains("field") || !o.contains("value"))
                throw ParseError(path, "expected {id, field, value}");
            if (!o["id"].is_string() || !o["field"].is_string()) throw ParseError(path, "id and field must be strings");
            spec.overrides.push_back({o["id"].get<std::string>(), o["field"].get<std::string>(), o["value"].dump()});
        }
    }
    return spec;
}

namespace {

std::vector<double> numbers(const json& v, std::size_t n, const std::string& what) {
    if (!v.is_array() || v.size() != n) throw Error(what + " needs " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw Error(what + " needs " + std::to_string(n) + " numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

void apply_override(SceneElement& e, const EditSpec::Override& o, const Vocabulary& vocab) {
    const json v = json::parse(o.value_json);
    const std::string what = "override of " + o.id + "." + o.field;
    if (o.field == "type") {
        if (v.is_null()) {
            const int pe = e.pe;
            e = SceneElement{};
            e.pe = pe;
            return;
        }
        if (!v.is_string()) throw Error(what + " needs a label or null");
        const auto idx = vocab.furniture_index(v.get<std::string>());
        if (!idx) throw Error(what + ": unknown label '" + v.get<std::string>() + "'");
        e.cls = ElementClass::furniture(*idx);
    } else if (o.field == "size") {
        const auto x = numbers(v, 3, what);
        if (*std::min_element(x.begin(), x.end()) <= 0.0) throw Error(what + " must be positive");
        e.obb.size = {x[0], x[1], x[2]};
        e.known |= scene::kKnownSize;
    } else if (o.field == "feature") {
        e.feature = numbers(v, scene::kFeatureDim, what);
        e.known |= scene::kKnownFeature;
    } else if (o.field == "translation") {
        const auto x = numbers(v, 3, what);
        e.obb.translation = {x[0], x[1], x[2]};
        e.known |= scene::kKnownPlacement;
    } else if (o.field == "rotation") {
        if (v.is_number()) {
            e.obb.heading = geometry::Heading::from_degrees(v.get<double>());
        } else {
            const auto x = numbers(v, 2, what);
            if (std::hypot(x[0], x[1]) == 0.0) throw Error(what + " must be non-zero");
            e.obb.heading = geometry::Heading::from_vector(x[0], x[1]);
        }
        e.known |= scene::kKnownPlacement;
    } else {
        throw Error("unknown field '" + o.field + "' (type, size, feature, translation, rotation)");
    }
}

}  // namespace

Scene edit(const Scene& input, const EditSpec& spec, const Models& models, Rng& rng) {
    const std::set<std::string> preserve(spec.preserve.begin(), spec.preserve.end());
    for (const auto& id : preserve)
        if (const auto* e = input.find(id); e == nullptr || e->is_empty()) throw Error("preserve names unknown element '" + id + "'");
    std::map<std::string, std::vector<const EditSpec::Override*>> by_id;
    for (const auto& o : spec.overrides) {
        const auto* e = input.find(o.id);
        if (e == nullptr || !e->is_furniture()) throw Error("override names unknown furniture '" + o.id + "'");
        if (preserve.contains(o.id)) throw Error("element '" + o.id + "' is both preserved and overridden");
        by_id[o.id].push_back(&o);
    }

    Scene s = input;
    for (auto& e : s.elements) {
        if (!e.is_furniture() || preserve.contains(e.id)) {
            if (e.is_furniture()) e.conditioned = true;
            continue;
        }
        // Start from the type alone; overrides add back what they set.
        e.known = scene::kKnownType;
        e.conditioned = true;
        const auto it = by_id.find(e.id);
        if (it == by_id.end()) continue;
        for (const auto* o : it->second) {
            apply_override(e, *o, models.vocab);
            if (e.is_empty()) break;
        }
    }

    stage2(s, models, rng);
    const auto lat = stage3(s, models, rng);
    stage4(s, models, lat, rng);
    for (std::size_t i = 0; i < s.elements.size(); ++i) {
        auto& e = s.elements[i];
        if (!e.is_furniture()) continue;
        if (preserve.contains(e.id)) {
            e = input.elements[i];
        } else {
            e.conditioned = false;
            e.known = scene::kKnownAll;
        }
    }
    return s;
}

}  // namespace caslayout::pipeline
