#include "caslayout/nn/layers.hpp"

#include <cmath>

#include "caslayout/errors.hpp"

namespace caslayout::nn {

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng)
    : w(&store.add(name + ".w", in, out, Init::trunc_normal, rng)), b(&store.add(name + ".b", 1, out, Init::zeros, rng)) {}

Var Linear::operator()(Tape& t, Var x) const { return linear(x, t.param(*w), t.param(*b)); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim, Rng& rng)
    : gain(&store.add(name + ".g", 1, dim, Init::ones, rng)), bias(&store.add(name + ".b", 1, dim, Init::zeros, rng)) {}

Var LayerNorm::operator()(Tape& t, Var x) const { return layer_norm(x, t.param(*gain), t.param(*bias)); }

Mlp::Mlp(ParamStore& store, const std::string& name, int in, int hidden, int out, Rng& rng)
    : fc1(store, name + ".fc1", in, hidden, rng), fc2(store, name + ".fc2", hidden, out, rng) {}

Var Mlp::operator()(Tape& t, Var x) const { return fc2(t, gelu(fc1(t, x))); }

Embedding::Embedding(ParamStore& store, const std::string& name, int count, int dim, Rng& rng)
    : table(&store.add(name + ".table", count, dim, Init::normal, rng)) {}

Var Embedding::operator()(Tape& t, const std::vector<int>& ids) const { return gather_rows(t.param(*table), ids); }

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int dim, int heads_, Rng& rng)
    : q(store, name + ".q", dim, dim, rng),
      k(store, name + ".k", dim, dim, rng),
      v(store, name + ".v", dim, dim, rng),
      o(store, name + ".o", dim, dim, rng),
      heads(heads_) {
    if (heads <= 0 || dim % heads != 0)
        throw ShapeError("attention width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
}

Var MultiHeadAttention::operator()(Tape& t, Var x_q, Var x_kv) const {
    std::vector<KeyRange> ranges(static_cast<std::size_t>(x_q.rows()), KeyRange{0, static_cast<int>(x_kv.rows())});
    return (*this)(t, x_q, x_kv, ranges);
}

Var MultiHeadAttention::operator()(Tape& t, Var x_q, Var x_kv, const std::vector<KeyRange>& ranges) const {
    if (x_q.cols() != q.in() || x_kv.cols() != k.in())
        throw ShapeError("attention expects width " + std::to_string(q.in()) + ", got q " + std::to_string(x_q.cols()) +
                         " and kv " + std::to_string(x_kv.cols()));
    return o(t, attention(q(t, x_q), k(t, x_kv), v(t, x_kv), heads, ranges));
}

AttentionBlock::AttentionBlock(ParamStore& store, const std::string& name, int dim, int heads, Rng& rng)
    : norm_q(store, name + ".ln", dim, rng), attn(store, name + ".attn", dim, heads, rng) {}

Var AttentionBlock::operator()(Tape& t, Var x, Var kv) const { return add(x, attn(t, norm_q(t, x), kv)); }

Var AttentionBlock::operator()(Tape& t, Var x, Var kv, const std::vector<KeyRange>& ranges) const {
    return add(x, attn(t, norm_q(t, x), kv, ranges));
}

Var AttentionBlock::self(Tape& t, Var x) const {
    Var h = norm_q(t, x);
    return add(x, attn(t, h, h));
}

Var AttentionBlock::self(Tape& t, Var x, const std::vector<KeyRange>& ranges) const {
    Var h = norm_q(t, x);
    return add(x, attn(t, h, h, ranges));
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, int dim, Rng& rng)
    : norm(store, name + ".ln", dim, rng), mlp(store, name + ".mlp", dim, 2 * dim, dim, rng) {}

Var FeedForward::operator()(Tape& t, Var x) const { return add(x, mlp(t, norm(t, x))); }

std::vector<double> timestep_embedding(double t, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw ShapeError("timestep embedding width must be even and positive");
    const int half = dim / 2;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int k = 0; k < half; ++k) {
        const double w = std::pow(10000.0, -static_cast<double>(k) / half);
        out[static_cast<std::size_t>(k)] = std::sin(t * w);
        out[static_cast<std::size_t>(k + half)] = std::cos(t * w);
    }
    return out;
}

Mat timestep_rows(double t, int dim, int rows) {
    const auto e = timestep_embedding(t, dim);
    Mat out(rows, dim);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < dim; ++c) out(r, c) = e[static_cast<std::size_t>(c)];
    return out;
}

}  // namespace caslayout::nn
