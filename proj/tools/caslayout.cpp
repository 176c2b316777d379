// caslayout: dataset building, training, sampling and evaluation.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "caslayout/errors.hpp"
#include "caslayout/evaluation.hpp"
#include "caslayout/pipeline.hpp"

using namespace caslayout;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    int jobs = 1;
    std::string vocab = "living";
    std::string zones;
    int grid = scene::kDefaultGridCells;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

/// To --out when given, else stdout.
void emit(const Common& c, const std::string& text) {
    if (c.out.empty()) std::cout << text;
    else write_text(c.out, text);
}

std::string with_newline(std::string s) {
    if (s.empty() || s.back() != '\n') s += '\n';
    return s;
}

std::uint64_t resolve_seed(const Common& c) {
    if (c.seed_given) return c.seed;
    if (const char* env = std::getenv("CASLAYOUT_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            return v;
        } catch (const std::exception&) {
            throw Error(std::string("CASLAYOUT_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return 0;
}

scene::SceneOptions grid_options(int grid) { return {grid, grid}; }

/// A directory of *.json scenes (sorted by name), a JSON array of scenes, or one scene.
std::vector<scene::Scene> load_corpus(const std::string& path, const scene::Vocabulary& vocab, int grid) {
    std::vector<scene::Scene> out;
    const auto opts = grid_options(grid);
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) out.push_back(scene::load_scene_file(f.string(), vocab, opts));
        if (out.empty()) throw Error("no .json scenes in '" + path + "'");
        return out;
    }
    const auto text = read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(path, e.what());
    }
    if (j.is_array()) {
        for (const auto& s : j) out.push_back(scene::load_scene(s.dump(), vocab, opts));
    } else {
        out.push_back(scene::load_scene(text, vocab, opts));
    }
    return out;
}

std::string scenes_json(const std::vector<scene::Scene>& scenes, const scene::Vocabulary& vocab) {
    json arr = json::array();
    for (const auto& s : scenes) arr.push_back(json::parse(scene::save_scene(s, vocab)));
    return arr.dump(2) + "\n";
}

/// Results of `f(i)` for i in [0, n), computed on up to `jobs` threads.
template <class T, class F>
std::vector<T> parallel_map(int n, int jobs, F f) {
    std::vector<T> out(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    const int threads = std::max(1, std::min(jobs, n));
    auto work = [&](int w) {
        for (int i = w; i < n; i += threads) {
            try {
                out[static_cast<std::size_t>(i)] = f(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

/// Scenes to stdout / --out file, or one file per scene when --out is a directory-like path (no .json suffix).
void emit_scenes(const Common& c, const std::vector<scene::Scene>& scenes, const scene::Vocabulary& vocab) {
    if (!c.out.empty() && fs::path(c.out).extension() != ".json") {
        fs::create_directories(c.out);
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "scene_%05zu.json", i);
            write_text((fs::path(c.out) / name).string(), scene::save_scene(scenes[i], vocab));
        }
        return;
    }
    emit(c, scenes.size() == 1 ? scene::save_scene(scenes[0], vocab) : scenes_json(scenes, vocab));
}

sparse::ZoneTable zones_for(const Common& c, const scene::Vocabulary& vocab) {
    auto z = c.zones.empty() ? sparse::ZoneTable::builtin(vocab) : sparse::ZoneTable::load(c.zones);
    z.validate(vocab);
    return z;
}

int models_grid(const pipeline::Models& m) {
    for (const auto& s : m.stages)
        if (s) return s->config().grid_rows;
    return scene::kDefaultGridCells;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_extract(const Common& c, const std::string& path) {
    const auto vocab = scene::Vocabulary::resolve(c.vocab);
    const auto s = scene::load_scene_file(path, vocab, grid_options(c.grid));
    emit(c, with_newline(relations::graph_to_json(relations::extract_dense(s))));
}

void cmd_sparsify(const Common& c, const std::string& path) {
    const auto vocab = scene::Vocabulary::resolve(c.vocab);
    const auto s = scene::load_scene_file(path, vocab, grid_options(c.grid));
    emit(c, with_newline(relations::graph_to_json(sparse::extract_sparse(s, vocab, zones_for(c, vocab)))));
}

void cmd_entropy(const Common& c, const std::string& path, const std::string& category, const std::string& graph) {
    const auto vocab = scene::Vocabulary::resolve(c.vocab);
    const auto cat = relations::category_from_name(category);
    if (!cat) throw Error("unknown category '" + category + "'");
    if (graph != "dense" && graph != "sparse") throw Error("--graph must be dense or sparse");
    const auto zones = zones_for(c, vocab);
    const auto corpus = load_corpus(path, vocab, c.grid);
    std::vector<sparse::LabeledGraph> graphs;
    for (const auto& s : corpus) {
        auto g = graph == "dense" ? relations::extract_dense(s) : sparse::extract_sparse(s, vocab, zones);
        graphs.push_back(sparse::label_graph(std::move(g), s, vocab));
    }
    emit(c, with_newline(sparse::relation_entropy(graphs, *cat).to_json()));
}

void cmd_synth(const Common& c, const std::string& preset, int count, int n_max, double mpc, const std::string& catalog) {
    if (count < 1) throw Error("--count must be positive");
    const auto& vocab = synth::preset_vocabulary(preset);
    const auto cat = catalog.empty() ? synth::Catalog::builtin(vocab) : synth::Catalog::load(catalog);
    synth::SynthOptions o{n_max, c.grid, mpc};
    emit_scenes(c, synth::synth_corpus(preset, cat, count, resolve_seed(c), o), vocab);
}

void cmd_train(const Common& c, const std::string& stage, const std::string& config, const std::string& data,
               bool quiet) {
    auto cfg = config.empty() ? gen::RunConfig{} : gen::RunConfig::load(config);
    if (!stage.empty()) cfg.stage = stage;
    if (c.seed_given || std::getenv("CASLAYOUT_SEED") != nullptr) cfg.seed = resolve_seed(c);
    if (!data.empty()) cfg.data = data;
    if (!c.out.empty()) cfg.out = c.out;
    if (cfg.data.empty()) throw Error("no training data: pass --data or set \"data\" in the config");
    if (cfg.out.empty()) throw Error("no output directory: pass --out or set \"out\" in the config");
    cfg = gen::RunConfig::from_json(cfg.to_json());  // validates the overrides

    scene::Vocabulary vocab;
    sparse::ZoneTable zones;
    synth::Catalog catalog;
    pipeline::resolve_resources(cfg, vocab, zones, catalog);
    const auto scenes = load_corpus(cfg.data, vocab, cfg.grid);
    for (const auto& s : scenes)
        if (s.n_max != cfg.n_max) throw Error("scene n_max " + std::to_string(s.n_max) + " differs from config n_max " + std::to_string(cfg.n_max));

    gen::Progress progress;
    if (!quiet)
        progress = [](int epoch, double loss) {
            std::cerr << json({{"epoch", epoch}, {"loss", loss}}).dump() << "\n";
        };
    auto load_vae = [&](bool required) -> std::optional<gen::VaeModel> {
        const auto ckpt = fs::path(cfg.out) / "vae.ckpt";
        if (!fs::exists(ckpt)) {
            if (required) throw Error("stage " + cfg.stage + " needs a trained VAE at '" + ckpt.string() + "'");
            return std::nullopt;
        }
        const auto vcfg = gen::RunConfig::load((fs::path(cfg.out) / "vae.json").string());
        gen::VaeModel vae(vcfg.vae_config(), vocab, vcfg.seed);
        nn::load_checkpoint(vae.params(), ckpt.string());
        return vae;
    };

    gen::TrainLog log;
    if (cfg.stage == "vae") {
        gen::VaeModel vae(cfg.vae_config(), vocab, cfg.seed);
        log = gen::train_vae(vae, scenes, cfg, vocab, zones, progress);
        pipeline::save_model(cfg.out, "vae", vae.params(), cfg);
    } else if (cfg.stage == "cotrain") {
        auto pre = load_vae(false);
        gen::VaeModel vae = pre ? std::move(*pre) : gen::VaeModel(cfg.vae_config(), vocab, cfg.seed);
        gen::StageModel s4(cfg.stage_config(4), vocab, cfg.seed + 4);
        log = gen::cotrain(vae, s4, scenes, cfg, vocab, zones, progress);
        pipeline::save_model(cfg.out, "vae", vae.params(), cfg);
        pipeline::save_model(cfg.out, "stage4", s4.params(), cfg);
    } else {
        const int s = std::stoi(cfg.stage);
        gen::StageModel model(cfg.stage_config(s), vocab, cfg.seed + static_cast<std::uint64_t>(s));
        const auto vae = s >= 3 ? load_vae(true) : std::nullopt;
        log = gen::train_stage(model, scenes, cfg, vocab, zones, vae ? &*vae : nullptr, progress);
        pipeline::save_model(cfg.out, "stage" + cfg.stage, model.params(), cfg);
    }
    json j = {{"stage", cfg.stage}, {"steps", log.steps}, {"epoch_loss", log.epoch_loss}, {"out", cfg.out}};
    std::cout << j.dump() << "\n";
}

void cmd_sample(const Common& c, const std::string& models_dir, const std::string& room_path, int count,
                double guidance) {
    if (count < 1) throw Error("--count must be positive");
    const auto models = pipeline::Models::load(models_dir);
    const auto room = scene::load_scene_file(room_path, models.vocab, grid_options(models_grid(models)));
    Rng base(resolve_seed(c));
    pipeline::Options opts;
    opts.guidance_scale = guidance;
    const auto scenes = parallel_map<scene::Scene>(count, c.jobs, [&](int i) {
        Rng rng = Rng(base).fork(static_cast<std::uint64_t>(i));
        return pipeline::generate(room, models, rng, opts);
    });
    emit_scenes(c, scenes, models.vocab);
}

void cmd_rearrange(const Common& c, const std::string& models_dir, const std::string& path) {
    const auto models = pipeline::Models::load(models_dir);
    const auto s = scene::load_scene_file(path, models.vocab, grid_options(models_grid(models)));
    Rng rng(resolve_seed(c));
    emit(c, scene::save_scene(pipeline::rearrange(s, models, rng), models.vocab));
}

void cmd_complete(const Common& c, const std::string& models_dir, const std::string& path,
                  std::vector<std::string> keep, double guidance) {
    const auto models = pipeline::Models::load(models_dir);
    auto s = scene::load_scene_file(path, models.vocab, grid_options(models_grid(models)));
    if (keep.empty())
        for (const auto& e : s.elements)
            if (e.is_furniture()) keep.push_back(e.id);
    s = scene::mark_conditioned(s, keep);
    Rng rng(resolve_seed(c));
    pipeline::Options opts;
    opts.guidance_scale = guidance;
    emit(c, scene::save_scene(pipeline::complete(s, models, rng, opts), models.vocab));
}

void cmd_graph_gen(const Common& c, const std::string& models_dir, const std::string& objects, const std::string& graph) {
    const auto models = pipeline::Models::load(models_dir);
    const auto s = scene::load_scene_file(objects, models.vocab, grid_options(models_grid(models)));
    const auto g = relations::load_graph_file(graph);
    Rng rng(resolve_seed(c));
    emit(c, scene::save_scene(pipeline::graph_conditioned(s, g, models, rng), models.vocab));
}

void cmd_edit(const Common& c, const std::string& models_dir, const std::string& path, const std::string& spec) {
    const auto models = pipeline::Models::load(models_dir);
    const auto s = scene::load_scene_file(path, models.vocab, grid_options(models_grid(models)));
    const auto e = pipeline::EditSpec::from_json(read_text(spec));
    Rng rng(resolve_seed(c));
    emit(c, scene::save_scene(pipeline::edit(s, e, models, rng), models.vocab));
}

void cmd_eval(const Common& c, const std::string& path, const std::string& reference, const std::string& targets) {
    const auto vocab = scene::Vocabulary::resolve(c.vocab);
    const auto scenes = load_corpus(path, vocab, c.grid);
    struct Row {
        double iou = 0, out = 0, walk = 0;
        eval::Satisfaction sat;
    };
    std::optional<relations::RelationGraph> target;
    if (!targets.empty()) target = relations::load_graph_file(targets);
    const auto rows = parallel_map<Row>(static_cast<int>(scenes.size()), c.jobs, [&](int i) {
        const auto& s = scenes[static_cast<std::size_t>(i)];
        Row r{eval::scene_iou(s), eval::r_out(s), eval::r_walk(s), {}};
        if (target) r.sat = eval::relation_satisfaction(s, *target);
        return r;
    });
    double iou = 0, out = 0, walk = 0;
    eval::Satisfaction sat;
    json per = json::array();
    for (const auto& r : rows) {
        iou += r.iou;
        out += r.out;
        walk += r.walk;
        sat += r.sat;
        per.push_back({{"iou", r.iou}, {"r_out", r.out}, {"r_walk", r.walk}});
    }
    const double n = static_cast<double>(rows.size());
    json j = {{"scenes", rows.size()}, {"iou", iou / n}, {"r_out", out / n}, {"r_walk", walk / n}, {"per_scene", per}};
    if (!reference.empty()) j["tkl"] = eval::tkl(scenes, load_corpus(reference, vocab, c.grid), vocab);
    if (target) {
        json cats = json::object();
        for (int k = 0; k < relations::kCategoryCount; ++k) {
            const auto cat = static_cast<relations::Category>(k);
            cats[std::string(relations::category_name(cat))] = sat.percent(cat);
        }
        j["satisfaction"] = cats;
        j["satisfaction_overall"] = sat.overall();
    }
    emit(c, j.dump(2) + "\n");
}

void cmd_render(const Common& c, const std::string& path, const std::string& palette, int size, bool no_floor) {
    const auto vocab = scene::Vocabulary::resolve(c.vocab);
    const auto s = scene::load_scene_file(path, vocab, grid_options(c.grid));
    auto pal = palette.empty() ? eval::Palette::builtin() : eval::Palette::load(palette);
    if (no_floor) pal.draw_floor = false;
    const auto img = eval::render_topdown(s, vocab, pal, size);
    if (c.out.empty()) {
        std::cout << img.ppm();
    } else {
        write_text(c.out, img.ppm());
    }
}

void cmd_defaults(const Common& c, const std::string& what) {
    const auto vocab = scene::Vocabulary::resolve(c.vocab);
    std::string text;
    if (what == "palette") text = eval::Palette::builtin().to_json();
    else if (what == "catalog") text = synth::Catalog::builtin(vocab).to_json();
    else if (what == "zones") text = sparse::ZoneTable::builtin(vocab).to_json();
    else if (what == "config") text = gen::RunConfig{}.to_json();
    else if (what == "paper-config") text = gen::RunConfig::paper_defaults().to_json();
    else throw Error("unknown resource '" + what + "' (palette, catalog, zones, config, paper-config)");
    emit(c, with_newline(text));
}

void fail_json(const std::string& msg) { std::cerr << json({{"error", msg}}).dump() << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"caslayout: cascaded diffusion for indoor layouts"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");
    Common c;

    auto common = [&](CLI::App* sub, bool vocab = true) {
        sub->add_option("--seed", c.seed, "Random seed (fallback: CASLAYOUT_SEED, then 0)")
            ->each([&](const std::string&) { c.seed_given = true; });
        sub->add_option("-o,--out", c.out, "Output path (default: stdout)");
        if (vocab) {
            sub->add_option("--vocab", c.vocab, "Built-in vocabulary (living, bedroom) or JSON label list")
                ->capture_default_str();
            sub->add_option("--grid", c.grid, "Floor grid cells per side for scenes without a grid field")
                ->capture_default_str();
        }
    };

    std::string scene_path, corpus_path, models_dir, graph_path, spec_path, reference, targets, palette, category = "direction",
                graph_kind = "sparse", preset, catalog, stage, config, data;
    int count = 1, n_max = scene::kDefaultNMax, size = 256;
    double mpc = scene::kDefaultMetersPerCell, guidance = 0.1;
    bool no_floor = false, quiet = false;
    std::vector<std::string> keep;

    auto* extract = app.add_subcommand("extract", "Dense relation graph of a scene");
    extract->add_option("scene", scene_path, "Scene JSON")->required();
    common(extract);

    auto* sparsify = app.add_subcommand("sparsify", "Sparse relation graph of a scene");
    sparsify->add_option("scene", scene_path, "Scene JSON")->required();
    sparsify->add_option("--zones", c.zones, "Zone table JSON (default: built-in)");
    common(sparsify);

    auto* entropy = app.add_subcommand("entropy", "Relation entropy report of a corpus");
    entropy->add_option("corpus", corpus_path, "Directory of scene JSON files or a JSON array")->required();
    entropy->add_option("--category", category, "direction, distance, alignment, symmetry, arch_distance")
        ->capture_default_str();
    entropy->add_option("--graph", graph_kind, "dense or sparse")->capture_default_str();
    entropy->add_option("--zones", c.zones, "Zone table JSON (default: built-in)");
    common(entropy);

    auto* synth_cmd = app.add_subcommand("synth-data", "Synthetic scene corpus");
    synth_cmd->add_option("--preset", preset, "chair-table, chair-table-sides, sofa-triad, bedroom, two-zone")->required();
    synth_cmd->add_option("--count", count, "Number of scenes")->capture_default_str();
    synth_cmd->add_option("--n-max", n_max, "Slots per scene")->capture_default_str();
    synth_cmd->add_option("--mpc", mpc, "Meters per floor cell")->capture_default_str();
    synth_cmd->add_option("--catalog", catalog, "Catalog JSON (default: built-in)");
    common(synth_cmd, false);
    synth_cmd->add_option("--grid", c.grid, "Floor grid cells per side")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train a stage, the VAE, or co-train VAE + stage 4");
    train->add_option("--stage", stage, "1, 2, 3, 4, vae or cotrain (overrides the config)");
    train->add_option("--config", config, "RunConfig JSON, merged over the defaults");
    train->add_option("--data", data, "Training corpus (overrides the config)");
    train->add_flag("--quiet", quiet, "No per-epoch progress on stderr");
    common(train, false);

    auto* sample = app.add_subcommand("sample", "Generate furnished scenes for a room");
    sample->add_option("--models", models_dir, "Model directory")->required();
    sample->add_option("room", scene_path, "Room scene JSON")->required();
    sample->add_option("--count", count, "Number of scenes")->capture_default_str();
    sample->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str();
    sample->add_option("--guidance", guidance, "Completion guidance scale")->capture_default_str();
    common(sample, false);

    auto* rearrange = app.add_subcommand("rearrange", "Re-place the furniture of a scene (stages 3-4)");
    rearrange->add_option("--models", models_dir, "Model directory")->required();
    rearrange->add_option("scene", scene_path, "Scene JSON")->required();
    common(rearrange, false);

    auto* complete = app.add_subcommand("complete", "Add furniture around a partial layout");
    complete->add_option("--models", models_dir, "Model directory")->required();
    complete->add_option("scene", scene_path, "Partial scene JSON")->required();
    complete->add_option("--keep", keep, "Ids held fixed (default: all furniture in the file)")->delimiter(',');
    complete->add_option("--guidance", guidance, "Relation guidance scale")->capture_default_str();
    common(complete, false);

    auto* graph_gen = app.add_subcommand("graph-gen", "Place objects to satisfy a relation graph");
    graph_gen->add_option("--models", models_dir, "Model directory")->required();
    graph_gen->add_option("objects", scene_path, "Scene JSON listing the typed, sized objects")->required();
    graph_gen->add_option("graph", graph_path, "RelationGraph JSON")->required();
    common(graph_gen, false);

    auto* edit = app.add_subcommand("edit", "Apply attribute overrides and regenerate the rest");
    edit->add_option("--models", models_dir, "Model directory")->required();
    edit->add_option("scene", scene_path, "Scene JSON")->required();
    edit->add_option("spec", spec_path, "Edit JSON {preserve:[ids], overrides:[{id, field, value}]}")->required();
    common(edit, false);

    auto* evaluate = app.add_subcommand("eval", "Layout metrics of a corpus");
    evaluate->add_option("corpus", corpus_path, "Directory of scene JSON files or a JSON array")->required();
    evaluate->add_option("--reference", reference, "Reference corpus for TKL");
    evaluate->add_option("--targets", targets, "RelationGraph JSON scored against every scene");
    evaluate->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str();
    common(evaluate);

    auto* render = app.add_subcommand("render", "Top-down PPM render of a scene");
    render->add_option("scene", scene_path, "Scene JSON")->required();
    render->add_option("--palette", palette, "Palette JSON (default: built-in)");
    render->add_option("--size", size, "Image side in pixels")->capture_default_str();
    render->add_flag("--no-floor", no_floor, "Leave the floor unpainted");
    common(render);

    std::string what;
    auto* defaults = app.add_subcommand("defaults", "Print a built-in resource as JSON");
    defaults->add_option("what", what, "palette, catalog, zones, config or paper-config")->required();
    common(defaults);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail_json(e.what());
        return 1;
    }

    try {
        if (c.jobs < 1) throw Error("--jobs must be positive");
        if (*extract) cmd_extract(c, scene_path);
        else if (*sparsify) cmd_sparsify(c, scene_path);
        else if (*entropy) cmd_entropy(c, corpus_path, category, graph_kind);
        else if (*synth_cmd) cmd_synth(c, preset, count, n_max, mpc, catalog);
        else if (*train) cmd_train(c, stage, config, data, quiet);
        else if (*sample) cmd_sample(c, models_dir, scene_path, count, guidance);
        else if (*rearrange) cmd_rearrange(c, models_dir, scene_path);
        else if (*complete) cmd_complete(c, models_dir, scene_path, keep, guidance);
        else if (*graph_gen) cmd_graph_gen(c, models_dir, scene_path, graph_path);
        else if (*edit) cmd_edit(c, models_dir, scene_path, spec_path);
        else if (*evaluate) cmd_eval(c, corpus_path, reference, targets);
        else if (*render) cmd_render(c, scene_path, palette, size, no_floor);
        else if (*defaults) cmd_defaults(c, what);
    } catch (const std::exception& e) {
        fail_json(e.what());
        return 1;
    }
    return 0;
}
