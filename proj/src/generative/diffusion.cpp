#include "caslayout/generative/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "caslayout/errors.hpp"

namespace caslayout::gen {

using scene::ElementKind;
using scene::Field;

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 1) throw Error("schedule needs T >= 1, got " + std::to_string(T));
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.gamma.assign(static_cast<std::size_t>(T) + 1, 1.0);
    const double k = 1000.0 / T;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.beta[static_cast<std::size_t>(t)] = std::min(0.999, k * (beta_start + (beta_end - beta_start) * frac));
        s.gamma[static_cast<std::size_t>(t)] = s.gamma[static_cast<std::size_t>(t) - 1] * (1.0 - s.beta[static_cast<std::size_t>(t)]);
    }
    return s;
}

double NoiseSchedule::at(int t) const {
    if (t < 0 || t > T) throw Error("step " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
    return gamma[static_cast<std::size_t>(t)];
}

double NoiseSchedule::posterior_variance(int t) const {
    at(t);
    if (t <= 1) return 0.0;
    const auto i = static_cast<std::size_t>(t);
    return beta[i] * (1.0 - gamma[i - 1]) / (1.0 - gamma[i]);
}

Mat q_sample(const NoiseSchedule& schedule, const Mat& x0, int t, const Mat& eps, const Mat& mask) {
    if (eps.rows() != x0.rows() || eps.cols() != x0.cols() || mask.rows() != x0.rows() || mask.cols() != x0.cols())
        throw ShapeError("q_sample: x0, eps and mask shapes differ");
    const double g = schedule.at(t);
    const double a = std::sqrt(g), b = std::sqrt(1.0 - g);
    Mat out = x0;
    for (Eigen::Index i = 0; i < out.size(); ++i)
        if (mask.data()[i] != 0.0) out.data()[i] = a * x0.data()[i] + b * eps.data()[i];
    return out;
}

// ---------------------------------------------------------------------------
// Node codec

FieldLayout FieldLayout::make(int stage, const Vocabulary& vocab) {
    const scene::FieldSet present = scene::stage_layout(stage);
    FieldLayout l;
    l.stage = stage;
    l.type_width = vocab.type_width();
    const std::array<int, scene::kFieldCount> widths = {vocab.type_width(), scene::kFeatureDim, 3, 3, 2, scene::kLatentDim};
    int off = 0;
    for (int f = 0; f < scene::kFieldCount; ++f) {
        if (present.has(static_cast<Field>(f))) {
            l.offset[static_cast<std::size_t>(f)] = off;
            l.width[static_cast<std::size_t>(f)] = widths[static_cast<std::size_t>(f)];
            off += widths[static_cast<std::size_t>(f)];
        } else {
            l.offset[static_cast<std::size_t>(f)] = -1;
            l.width[static_cast<std::size_t>(f)] = 0;
        }
    }
    l.total = off;
    return l;
}

namespace {

constexpr std::array<Field, scene::kFieldCount> kFields = {Field::type,        Field::feature,  Field::size,
                                                           Field::translation, Field::rotation, Field::latent};

void put_field(const FieldLayout& l, const Normalization& n, const StageVector& v, Field f, double* row) {
    const int o = l.off(f);
    switch (f) {
        case Field::type:
            for (int i = 0; i < l.type_width; ++i) row[o + i] = 2.0 * v.type[static_cast<std::size_t>(i)] - 1.0;
            break;
        case Field::feature:
            for (int i = 0; i < scene::kFeatureDim; ++i) row[o + i] = v.feature[static_cast<std::size_t>(i)];
            break;
        case Field::size:
            for (int i = 0; i < 3; ++i) row[o + i] = (v.size[static_cast<std::size_t>(i)] - n.size_offset) / n.size_scale;
            break;
        case Field::translation:
            for (int i = 0; i < 3; ++i) row[o + i] = v.translation[static_cast<std::size_t>(i)] / n.translation_scale;
            break;
        case Field::rotation:
            row[o] = v.rotation[0];
            row[o + 1] = v.rotation[1];
            break;
        case Field::latent:
            for (int i = 0; i < scene::kLatentDim; ++i) row[o + i] = v.latent[static_cast<std::size_t>(i)];
            break;
    }
}

constexpr double kMinSize = 0.05;

void take_field(const FieldLayout& l, const Normalization& n, const double* row, Field f, StageVector& v) {
    const int o = l.off(f);
    switch (f) {
        case Field::type: {
            int best = 0;
            for (int i = 1; i < l.type_width; ++i)
                if (row[o + i] > row[o + best]) best = i;
            std::fill(v.type.begin(), v.type.end(), 0.0);
            v.type[static_cast<std::size_t>(best)] = 1.0;
            break;
        }
        case Field::feature:
            for (int i = 0; i < scene::kFeatureDim; ++i) v.feature[static_cast<std::size_t>(i)] = row[o + i];
            break;
        case Field::size:
            for (int i = 0; i < 3; ++i)
                v.size[static_cast<std::size_t>(i)] = std::max(kMinSize, row[o + i] * n.size_scale + n.size_offset);
            break;
        case Field::translation:
            for (int i = 0; i < 3; ++i) v.translation[static_cast<std::size_t>(i)] = row[o + i] * n.translation_scale;
            break;
        case Field::rotation: {
            const double c = row[o], s = row[o + 1];
            const double r = std::hypot(c, s);
            if (r > 0.0) v.rotation = {c / r, s / r};
            else v.rotation = {1.0, 0.0};
            break;
        }
        case Field::latent:
            for (int i = 0; i < scene::kLatentDim; ++i) v.latent[static_cast<std::size_t>(i)] = row[o + i];
            break;
    }
}

}  // namespace

EncodedNodes encode_nodes(const FieldLayout& layout, const Normalization& norm, std::span<const StageVector> nodes) {
    const auto n = static_cast<Eigen::Index>(nodes.size());
    EncodedNodes e;
    e.x = Mat::Zero(n, layout.total);
    e.known = Mat::Zero(n, layout.total);
    e.target = Mat::Zero(n, layout.total);
    e.flags = Mat::Zero(n, 2 * scene::kFieldCount);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& v = nodes[static_cast<std::size_t>(r)];
        e.pe.push_back(v.pe);
        if (v.kind == ElementKind::architectural) e.arch_rows.push_back(static_cast<int>(r));
        for (int fi = 0; fi < scene::kFieldCount; ++fi) {
            const Field f = kFields[static_cast<std::size_t>(fi)];
            if (!layout.has(f)) continue;
            const bool known = v.known.has(f), target = v.target.has(f);
            if (known) {
                e.known.row(r).segment(layout.off(f), layout.wid(f)).setOnes();
                e.flags(r, fi) = 1.0;
            }
            if (target) {
                e.target.row(r).segment(layout.off(f), layout.wid(f)).setOnes();
                e.flags(r, scene::kFieldCount + fi) = 1.0;
            }
            if (known || target) put_field(layout, norm, v, f, e.x.row(r).data());
        }
    }
    return e;
}

void decode_targets(const FieldLayout& layout, const Normalization& norm, const Mat& x, int row0,
                    std::vector<StageVector>& nodes) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        auto& v = nodes[i];
        const double* row = x.row(row0 + static_cast<Eigen::Index>(i)).data();
        for (Field f : kFields)
            if (layout.has(f) && v.target.has(f)) take_field(layout, norm, row, f, v);
    }
}

// ---------------------------------------------------------------------------
// Model

namespace {

constexpr int kSpatialIn = 3 + 3 + 2 + 2 * scene::kFieldCount;

int extra_width(int stage) {
    if (stage == 2) return scene::kFeatureDim;
    if (stage == 3 || stage == 4) return scene::kLatentDim;
    return 0;
}

}  // namespace

StageModel::StageModel(const StageConfig& cfg, const Vocabulary& vocab, std::uint64_t seed)
    : cfg_(cfg), layout_(FieldLayout::make(cfg.stage, vocab)) {
    if (cfg.width <= 0 || cfg.width % 4 != 0) throw Error("stage width must be a positive multiple of 4");
    if (cfg.blocks < 1) throw Error("stage model needs at least one block");
    if (cfg.floor_tokens && (cfg.patch <= 0 || cfg.grid_rows % cfg.patch != 0 || cfg.grid_cols % cfg.patch != 0))
        throw Error("floor grid must split into whole patches");
    Rng rng(seed);
    const int W = cfg.width;
    const std::string p = "s" + std::to_string(cfg.stage);
    const bool extra = extra_width(cfg.stage) > 0;
    const int w_type = extra ? W / 4 : W / 2;
    const int w_spatial = W / 2;
    in_type_ = nn::Linear(params_, p + ".in_type", layout_.type_width, w_type, rng);
    in_spatial_ = nn::Linear(params_, p + ".in_spatial", kSpatialIn, w_spatial, rng);
    if (extra) in_extra_ = nn::Linear(params_, p + ".in_extra", extra_width(cfg.stage), W - w_type - w_spatial, rng);
    pe_ = nn::Embedding(params_, p + ".pe", cfg.n_max, W, rng);
    time_ = nn::Mlp(params_, p + ".time", W, W, W, rng);
    if (cfg.floor_tokens) {
        floor_in_ = nn::Linear(params_, p + ".floor_in", cfg.patch * cfg.patch, W, rng);
        floor_pos_ = nn::Embedding(params_, p + ".floor_pos", (cfg.grid_rows / cfg.patch) * (cfg.grid_cols / cfg.patch), W, rng);
        floor_ln_ = nn::LayerNorm(params_, p + ".floor_ln", W, rng);
    }
    if (cfg.stage == 4) {
        latent_in_ = nn::Linear(params_, p + ".latent_in", scene::kLatentDim, W, rng);
        latent_ln_ = nn::LayerNorm(params_, p + ".latent_ln", W, rng);
    }
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string bp = p + ".block" + std::to_string(b);
        self_.emplace_back(params_, bp + ".self", W, cfg.heads, rng);
        if (cfg.stage == 4) latent_cross_.emplace_back(params_, bp + ".latent", W, cfg.heads, rng);
        if (cfg.floor_tokens) floor_cross_.emplace_back(params_, bp + ".floor", W, cfg.heads, rng);
        ff_.emplace_back(params_, bp + ".ff", W, rng);
    }
    out_ln_ = nn::LayerNorm(params_, p + ".out_ln", W, rng);
    eps_head_ = nn::Linear(params_, p + ".eps", W, layout_.total, rng);
    recon_head_ = nn::Linear(params_, p + ".recon", W, 8, rng);
}

StageBatch StageModel::make_batch(std::span<const std::vector<StageVector>> scenes,
                                  std::span<const FloorGrid* const> floors) const {
    if (cfg_.floor_tokens && floors.size() != scenes.size()) throw Error("one floor grid per scene required");
    StageBatch b;
    std::vector<StageVector> all;
    b.begin.push_back(0);
    for (const auto& s : scenes) {
        if (static_cast<int>(s.size()) > cfg_.n_max) throw CapacityError("scene has more nodes than n_max");
        all.insert(all.end(), s.begin(), s.end());
        b.begin.push_back(static_cast<int>(all.size()));
    }
    b.enc = encode_nodes(layout_, cfg_.norm, all);
    for (int pe : b.enc.pe)
        if (pe < 0 || pe >= cfg_.n_max) throw CapacityError("positional index " + std::to_string(pe) + " out of range");

    if (cfg_.floor_tokens) {
        const int pr = cfg_.grid_rows / cfg_.patch, pc = cfg_.grid_cols / cfg_.patch;
        b.patches_per_scene = pr * pc;
        b.floor = Mat::Zero(static_cast<Eigen::Index>(scenes.size()) * b.patches_per_scene, cfg_.patch * cfg_.patch);
        for (std::size_t s = 0; s < scenes.size(); ++s) {
            const FloorGrid& g = *floors[s];
            if (g.rows != cfg_.grid_rows || g.cols != cfg_.grid_cols)
                throw ShapeError("floor grid " + std::to_string(g.rows) + "x" + std::to_string(g.cols) + " does not match model grid " +
                                 std::to_string(cfg_.grid_rows) + "x" + std::to_string(cfg_.grid_cols));
            for (int i = 0; i < pr; ++i)
                for (int j = 0; j < pc; ++j) {
                    const auto row = static_cast<Eigen::Index>(s) * b.patches_per_scene + i * pc + j;
                    for (int a = 0; a < cfg_.patch; ++a)
                        for (int c = 0; c < cfg_.patch; ++c)
                            b.floor(row, a * cfg_.patch + c) = 2.0 * g.at(i * cfg_.patch + a, j * cfg_.patch + c) - 1.0;
                }
        }
    }

    const auto n_arch = static_cast<Eigen::Index>(b.enc.arch_rows.size());
    b.recon_target = Mat::Zero(n_arch, 8);
    b.recon_weight = Mat::Zero(n_arch, 8);
    const int S = b.scenes();
    for (Eigen::Index k = 0; k < n_arch; ++k) {
        const int r = b.enc.arch_rows[static_cast<std::size_t>(k)];
        b.recon_target.row(k).segment(0, 3) = b.enc.x.row(r).segment(layout_.off(Field::size), 3);
        b.recon_target.row(k).segment(3, 3) = b.enc.x.row(r).segment(layout_.off(Field::translation), 3);
        b.recon_target.row(k).segment(6, 2) = b.enc.x.row(r).segment(layout_.off(Field::rotation), 2);
        const int s = static_cast<int>(std::upper_bound(b.begin.begin(), b.begin.end(), r) - b.begin.begin()) - 1;
        int m = 0;
        for (int a : b.enc.arch_rows)
            if (a >= b.begin[static_cast<std::size_t>(s)] && a < b.begin[static_cast<std::size_t>(s) + 1]) ++m;
        b.recon_weight.row(k).setConstant(1.0 / (static_cast<double>(m) * S));
    }
    return b;
}

StageModel::Output StageModel::forward(Tape& t, const StageBatch& batch, Var x_t, const std::vector<int>& steps,
                                       std::optional<Var> latents) const {
    const int rows = batch.rows();
    const int S = batch.scenes();
    if (x_t.rows() != rows || x_t.cols() != layout_.total) throw ShapeError("stage input does not match batch layout");
    if (static_cast<int>(steps.size()) != S) throw ShapeError("one diffusion step per scene required");
    const int W = cfg_.width;

    std::vector<nn::KeyRange> self_ranges(static_cast<std::size_t>(rows));
    std::vector<nn::KeyRange> floor_ranges(static_cast<std::size_t>(rows));
    Mat temb(rows, W);
    for (int s = 0; s < S; ++s) {
        const auto e = nn::timestep_embedding(steps[static_cast<std::size_t>(s)], W);
        for (int r = batch.begin[static_cast<std::size_t>(s)]; r < batch.begin[static_cast<std::size_t>(s) + 1]; ++r) {
            self_ranges[static_cast<std::size_t>(r)] = {batch.begin[static_cast<std::size_t>(s)], batch.begin[static_cast<std::size_t>(s) + 1]};
            floor_ranges[static_cast<std::size_t>(r)] = {s * batch.patches_per_scene, (s + 1) * batch.patches_per_scene};
            for (int c = 0; c < W; ++c) temb(r, c) = e[static_cast<std::size_t>(c)];
        }
    }

    std::vector<Var> parts;
    parts.push_back(in_type_(t, nn::slice_cols(x_t, layout_.off(Field::type), layout_.type_width)));
    const std::vector<Var> spatial = {nn::slice_cols(x_t, layout_.off(Field::size), 3),
                                      nn::slice_cols(x_t, layout_.off(Field::translation), 3),
                                      nn::slice_cols(x_t, layout_.off(Field::rotation), 2), t.constant(batch.enc.flags)};
    parts.push_back(in_spatial_(t, nn::concat_cols(spatial)));
    std::optional<Var> lat;
    if (cfg_.stage == 2) parts.push_back(in_extra_(t, nn::slice_cols(x_t, layout_.off(Field::feature), scene::kFeatureDim)));
    if (cfg_.stage == 3 || cfg_.stage == 4) {
        lat = latents ? *latents : nn::slice_cols(x_t, layout_.off(Field::latent), scene::kLatentDim);
        if (lat->rows() != rows || lat->cols() != scene::kLatentDim) throw ShapeError("latent override has the wrong shape");
        parts.push_back(in_extra_(t, *lat));
    }
    Var pe = pe_(t, batch.enc.pe);
    Var h = nn::add(nn::add(nn::concat_cols(parts), pe), time_(t, t.constant(std::move(temb))));

    std::optional<Var> floor_tokens, latent_tokens;
    if (cfg_.floor_tokens) {
        std::vector<int> pos(static_cast<std::size_t>(S * batch.patches_per_scene));
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i % static_cast<std::size_t>(batch.patches_per_scene));
        floor_tokens = floor_ln_(t, nn::add(floor_in_(t, t.constant(batch.floor)), floor_pos_(t, pos)));
    }
    if (cfg_.stage == 4) latent_tokens = latent_ln_(t, nn::add(latent_in_(t, *lat), pe));

    for (int b = 0; b < cfg_.blocks; ++b) {
        h = self_[static_cast<std::size_t>(b)].self(t, h, self_ranges);
        if (latent_tokens) h = latent_cross_[static_cast<std::size_t>(b)](t, h, *latent_tokens, self_ranges);
        if (floor_tokens) h = floor_cross_[static_cast<std::size_t>(b)](t, h, *floor_tokens, floor_ranges);
        h = ff_[static_cast<std::size_t>(b)](t, h);
    }
    h = out_ln_(t, h);
    Output out;
    out.eps = eps_head_(t, h);
    if (!batch.enc.arch_rows.empty()) out.recon = recon_head_(t, nn::gather_rows(h, batch.enc.arch_rows));
    return out;
}

// ---------------------------------------------------------------------------
// Losses and sampling

namespace {

Mat noised(const NoiseSchedule& schedule, const StageBatch& batch, const std::vector<int>& steps, const Mat& eps) {
    Mat x = batch.enc.x;
    for (int s = 0; s < batch.scenes(); ++s) {
        const double g = schedule.at(steps[static_cast<std::size_t>(s)]);
        const double a = std::sqrt(g), b = std::sqrt(1.0 - g);
        for (int r = batch.begin[static_cast<std::size_t>(s)]; r < batch.begin[static_cast<std::size_t>(s) + 1]; ++r)
            for (Eigen::Index c = 0; c < x.cols(); ++c)
                if (batch.enc.target(r, c) != 0.0) x(r, c) = a * batch.enc.x(r, c) + b * eps(r, c);
    }
    return x;
}

}  // namespace

StageLoss stage_losses_at(const StageModel& model, Tape& t, const StageBatch& batch, const NoiseSchedule& schedule,
                          const std::vector<int>& steps, const Mat& eps, std::optional<Var> latents) {
    for (int s : steps)
        if (s < 1 || s > schedule.T) throw Error("training step " + std::to_string(s) + " outside [1, T]");
    Var x_t = t.constant(noised(schedule, batch, steps, eps));
    auto out = model.forward(t, batch, x_t, steps, latents);
    StageLoss l;
    const double n_target = batch.enc.target.sum();
    if (n_target > 0) {
        l.eps = nn::scale(nn::weighted_sq_sum(nn::sub(out.eps, t.constant(eps)), batch.enc.target), 1.0 / n_target);
    } else {
        l.eps = t.constant(Mat::Zero(1, 1));
    }
    if (out.recon.id >= 0) {
        l.recon = nn::weighted_sq_sum(nn::sub(out.recon, t.constant(batch.recon_target)), batch.recon_weight);
    } else {
        l.recon = t.constant(Mat::Zero(1, 1));
    }
    l.eps_value = l.eps.item();
    l.recon_value = l.recon.item();
    if (!std::isfinite(l.eps_value) || !std::isfinite(l.recon_value)) throw Error("non-finite diffusion loss");
    return l;
}

StageLoss stage_losses(const StageModel& model, Tape& t, const StageBatch& batch, const NoiseSchedule& schedule,
                       Rng& rng, std::optional<Var> latents) {
    std::vector<int> steps(static_cast<std::size_t>(batch.scenes()));
    for (auto& s : steps) s = rng.uniform_int(1, schedule.T);
    Mat eps(batch.rows(), model.layout().total);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
    return stage_losses_at(model, t, batch, schedule, steps, eps, latents);
}

void reverse_step(const NoiseSchedule& schedule, int t, const Mat& eps_hat, const Mat& mask, Mat& x, Rng& rng) {
    const auto i = static_cast<std::size_t>(t);
    schedule.at(t);
    if (t < 1) throw Error("reverse step needs t >= 1");
    const double coef = schedule.beta[i] / std::sqrt(1.0 - schedule.gamma[i]);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - schedule.beta[i]);
    const double sigma = std::sqrt(schedule.posterior_variance(t));
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (mask.data()[k] == 0.0) continue;
        double v = inv_sqrt_alpha * (x.data()[k] - coef * eps_hat.data()[k]);
        if (t > 1) v += sigma * rng.normal();
        x.data()[k] = v;
    }
}

std::vector<std::vector<StageVector>> ddpm_sample(const StageModel& model, const NoiseSchedule& schedule,
                                                  std::vector<std::vector<StageVector>> scenes,
                                                  std::span<const FloorGrid* const> floors, Rng& rng,
                                                  const SampleOptions& opts) {
    if (scenes.empty()) return scenes;
    const StageBatch batch = model.make_batch(scenes, floors);
    const Mat& mask = batch.enc.target;
    Mat x = batch.enc.x;
    for (Eigen::Index k = 0; k < x.size(); ++k)
        if (mask.data()[k] != 0.0) x.data()[k] = rng.normal();
    if (mask.sum() > 0) {
        for (int t = schedule.T; t >= 1; --t) {
            Tape tape(false);
            const std::vector<int> steps(static_cast<std::size_t>(batch.scenes()), t);
            const Mat eps_hat = model.forward(tape, batch, tape.constant(x), steps).eps.value();
            Mat x0_hat;
            if (opts.guide) {
                const double g = schedule.at(t);
                x0_hat = (x - std::sqrt(1.0 - g) * eps_hat) / std::sqrt(g);
            }
            reverse_step(schedule, t, eps_hat, mask, x, rng);
            if (opts.guide) {
                opts.guide(t, x0_hat, x);
                for (Eigen::Index k = 0; k < x.size(); ++k)
                    if (mask.data()[k] == 0.0) x.data()[k] = batch.enc.x.data()[k];
            }
        }
    }
    for (std::size_t s = 0; s < scenes.size(); ++s)
        decode_targets(model.layout(), model.config().norm, x, batch.begin[s], scenes[s]);
    return scenes;
}

}  // namespace caslayout::gen
