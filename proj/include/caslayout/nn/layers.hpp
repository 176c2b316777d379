#pragma once

#include <string>
#include <vector>

#include "caslayout/nn/autodiff.hpp"

namespace caslayout::nn {

/// y = x W + b, W is in x out.
struct Linear {
    Param* w = nullptr;
    Param* b = nullptr;

    Linear() = default;
    Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
    Var operator()(Tape& t, Var x) const;
    int in() const { return static_cast<int>(w->value.rows()); }
    int out() const { return static_cast<int>(w->value.cols()); }
};

struct LayerNorm {
    Param* gain = nullptr;
    Param* bias = nullptr;

    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, int dim, Rng& rng);
    Var operator()(Tape& t, Var x) const;
};

/// Linear, GELU, Linear.
struct Mlp {
    Linear fc1;
    Linear fc2;

    Mlp() = default;
    Mlp(ParamStore& store, const std::string& name, int in, int hidden, int out, Rng& rng);
    Var operator()(Tape& t, Var x) const;
};

struct Embedding {
    Param* table = nullptr;

    Embedding() = default;
    Embedding(ParamStore& store, const std::string& name, int count, int dim, Rng& rng);
    Var operator()(Tape& t, const std::vector<int>& ids) const;
};

/// Multi-head attention with separate Q/K/V/output projections.
struct MultiHeadAttention {
    Linear q, k, v, o;
    int heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& store, const std::string& name, int dim, int heads, Rng& rng);
    /// Every query attends to every kv row.
    Var operator()(Tape& t, Var x_q, Var x_kv) const;
    Var operator()(Tape& t, Var x_q, Var x_kv, const std::vector<KeyRange>& ranges) const;
};

/// Pre-norm residual block: x + attn(LN x, kv), then x + mlp(LN x).
struct AttentionBlock {
    LayerNorm norm_q;
    MultiHeadAttention attn;

    AttentionBlock() = default;
    AttentionBlock(ParamStore& store, const std::string& name, int dim, int heads, Rng& rng);
    Var operator()(Tape& t, Var x, Var kv) const;
    Var operator()(Tape& t, Var x, Var kv, const std::vector<KeyRange>& ranges) const;
    Var self(Tape& t, Var x) const;
    Var self(Tape& t, Var x, const std::vector<KeyRange>& ranges) const;
};

struct FeedForward {
    LayerNorm norm;
    Mlp mlp;

    FeedForward() = default;
    FeedForward(ParamStore& store, const std::string& name, int dim, Rng& rng);
    Var operator()(Tape& t, Var x) const;
};

/// Sinusoidal features: first dim/2 entries sin(t * w_k), then cos(t * w_k),
/// w_k = 10000^(-k / (dim/2)).
std::vector<double> timestep_embedding(double t, int dim);
Mat timestep_rows(double t, int dim, int rows);

}  // namespace caslayout::nn
