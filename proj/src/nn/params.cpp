#include "caslayout/nn/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "caslayout/errors.hpp"

namespace caslayout::nn {

Param& ParamStore::add(const std::string& name, int rows, int cols, Init init, Rng& rng, double stddev) {
    if (index_.contains(name)) throw Error("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = Mat::Zero(rows, cols);
    p->grad = Mat::Zero(rows, cols);
    p->m = Mat::Zero(rows, cols);
    p->v = Mat::Zero(rows, cols);
    switch (init) {
        case Init::zeros: break;
        case Init::ones: p->value.setOnes(); break;
        case Init::trunc_normal:
            for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.truncated_normal(stddev);
            break;
        case Init::normal:
            for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.normal() * stddev;
            break;
    }
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

Param& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return *params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return *params_[it->second];
}

std::vector<Param*> ParamStore::all() {
    std::vector<Param*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<const Param*> ParamStore::all() const {
    std::vector<const Param*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p->grad.setZero();
}

void ParamStore::set_frozen(const std::string& prefix, bool frozen) {
    for (auto& p : params_)
        if (p->name.starts_with(prefix)) p->frozen = frozen;
}

void ParamStore::copy_values_from(const ParamStore& other) {
    for (auto& p : params_)
        if (other.contains(p->name)) {
            const auto& src = other.get(p->name);
            if (src.value.rows() != p->value.rows() || src.value.cols() != p->value.cols())
                throw ShapeError("parameter '" + p->name + "' shape differs");
            p->value = src.value;
        }
}

void AdamW::step(ParamStore& store) {
    auto params = store.all();
    for (const auto* p : params)
        if (!p->frozen && !p->grad.allFinite()) throw Error("non-finite gradient in '" + p->name + "'");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto* p : params) {
        if (p->frozen) continue;
        double* w = p->value.data();
        const double* g = p->grad.data();
        double* m = p->m.data();
        double* v = p->v.data();
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            w[i] -= cfg_.lr * cfg_.weight_decay * w[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            w[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'C', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ParseError("checkpoint", "truncated record");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    return v;
}

}  // namespace

std::string checkpoint_bytes(const ParamStore& store) {
    std::string out(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    for (const auto* p : store.all()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
        out += p->name;
        put<std::uint8_t>(out, kDtypeF64);
        put<std::uint32_t>(out, 2);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
        for (Eigen::Index i = 0; i < p->value.size(); ++i) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p->value.data()[i]));
    }
    return out;
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write checkpoint '" + path + "'");
    const std::string bytes = checkpoint_bytes(store);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void load_checkpoint_bytes(ParamStore& store, const std::string& in) {
    if (in.size() < 8 || std::memcmp(in.data(), kMagic, 4) != 0) throw ParseError("checkpoint", "bad magic");
    std::size_t pos = 4;
    const auto version = take<std::uint32_t>(in, pos);
    if (version != kVersion) throw ParseError("checkpoint", "unsupported version " + std::to_string(version));
    std::size_t loaded = 0;
    while (pos < in.size()) {
        const auto len = take<std::uint32_t>(in, pos);
        if (pos + len > in.size()) throw ParseError("checkpoint", "truncated name");
        const std::string name = in.substr(pos, len);
        pos += len;
        if (take<std::uint8_t>(in, pos) != kDtypeF64) throw ParseError("checkpoint." + name, "unsupported dtype");
        const auto rank = take<std::uint32_t>(in, pos);
        if (rank != 2) throw ParseError("checkpoint." + name, "expected rank 2");
        const auto rows = take<std::uint64_t>(in, pos);
        const auto cols = take<std::uint64_t>(in, pos);
        if (!store.contains(name)) throw ParseError("checkpoint." + name, "parameter not in model");
        Param& p = store.get(name);
        if (static_cast<std::uint64_t>(p.value.rows()) != rows || static_cast<std::uint64_t>(p.value.cols()) != cols)
            throw ShapeError("checkpoint." + name + ": shape mismatch");
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = std::bit_cast<double>(take<std::uint64_t>(in, pos));
        ++loaded;
    }
    if (loaded != store.size())
        throw ParseError("checkpoint", "holds " + std::to_string(loaded) + " of " + std::to_string(store.size()) + " parameters");
}

void load_checkpoint(ParamStore& store, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError(path, "cannot open checkpoint");
    std::stringstream ss;
    ss << f.rdbuf();
    load_checkpoint_bytes(store, ss.str());
}

}  // namespace caslayout::nn
