#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "caslayout/nn/params.hpp"

namespace caslayout::nn {

class Tape;

/// Handle to a node on a Tape. Values are 2-D row-major matrices; a scalar is 1x1.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double item() const;
};

/// Reverse-mode recording. Build a graph with the ops below, then call
/// backward() once on a 1x1 loss; parameter gradients are added to Param::grad.
class Tape {
public:
    using Backward = std::function<void(Tape&, int)>;

    /// With grad disabled nothing is recorded for backward.
    explicit Tape(bool grad = true) : grad_enabled_(grad) {}

    Var constant(Mat value);
    /// Leaf whose gradient is read back with grad(); with params_constant(),
    /// parameters are treated as constants.
    Var input(Mat value);
    void params_constant() { param_grads_ = false; }
    /// One node per parameter per tape.
    Var param(Param& p);

    void backward(Var loss);

    const Mat& value(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.ref != nullptr ? *n.ref : n.value;
    }
    /// Gradient of a node after backward (zeros when it received none).
    Mat grad(int id) const;
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs; }
    std::size_t size() const { return nodes_.size(); }

    /// For op implementations.
    Var push(Mat value, std::initializer_list<Var> parents, Backward back);
    Var push(Mat value, std::span<const Var> parents, Backward back);
    void accumulate(int id, const Mat& g);
    const Mat& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

private:
    struct Node {
        Mat value;
        const Mat* ref = nullptr;  // parameter nodes read the parameter in place
        Mat grad;
        bool has_grad = false;
        bool needs = false;
        Param* param = nullptr;
        Backward back;
    };
    std::vector<Node> nodes_;
    std::unordered_map<Param*, int> param_nodes_;
    bool grad_enabled_ = true;
    bool param_grads_ = true;
};

// Elementwise and linear algebra
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a + broadcast of the 1 x cols row r.
Var add_row(Var a, Var r);
/// a * c elementwise with a constant matrix.
Var mul_const(Var a, const Mat& c);
Var linear(Var x, Var w, Var b);
Var gelu(Var a);
Var tanh(Var a);
Var exp(Var a);

// Shape
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, int start, int count);
Var slice_rows(Var a, int start, int count);
/// Row gather; backward scatter-adds.
Var gather_rows(Var a, const std::vector<int>& rows);

// Normalization
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var a);

// Reductions and losses
Var sum(Var a);
Var mean(Var a);
/// sum(w * a^2) with constant weights w.
Var weighted_sq_sum(Var a, const Mat& w);
/// sum_i w_i * (logsumexp(logits_i) - logits_i[target_i]); rows with w_i = 0 are skipped.
Var cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<double>& weights);
/// sum_i w_i * sum_d 0.5 (mu^2 + exp(logvar) - 1 - logvar).
Var kl_standard_normal(Var mu, Var logvar, const std::vector<double>& row_weights);

/// Half-open key row range attended by one query row.
struct KeyRange {
    int begin = 0;
    int end = 0;
};

/// Multi-head scaled dot-product attention over already projected q, k, v.
/// Query row i attends to key rows ranges[i]; an empty range yields a zero row.
Var attention(Var q, Var k, Var v, int heads, const std::vector<KeyRange>& ranges);

}  // namespace caslayout::nn
