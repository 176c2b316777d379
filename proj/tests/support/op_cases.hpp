#pragma once

#include <string>
#include <vector>

#include "caslayout/nn/layers.hpp"
#include "gradcheck.hpp"

namespace gradcheck {

namespace nn = caslayout::nn;

struct Case {
    std::vector<Mat> inputs;
    Fn fn;
};

struct OpCase {
    std::string name;
    double tolerance;
    std::function<Case(Rng&)> make;
};

inline int dim(Rng& rng, int lo, int hi) { return rng.uniform_int(lo, hi); }

inline std::vector<OpCase> op_cases() {
    std::vector<OpCase> c;
    c.push_back({"matmul", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), k = dim(r, 1, 5), m = dim(r, 1, 4);
                     return Case{{random_mat(r, n, k), random_mat(r, k, m)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::matmul(v[0], v[1]); }};
                 }});
    c.push_back({"add", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), m = dim(r, 1, 4);
                     return Case{{random_mat(r, n, m), random_mat(r, n, m)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::add(v[0], v[1]); }};
                 }});
    c.push_back({"sub", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), m = dim(r, 1, 4);
                     return Case{{random_mat(r, n, m), random_mat(r, n, m)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::sub(v[0], v[1]); }};
                 }});
    c.push_back({"mul", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), m = dim(r, 1, 4);
                     return Case{{random_mat(r, n, m), random_mat(r, n, m)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::mul(v[0], v[1]); }};
                 }});
    c.push_back({"scale", 1e-4, [](Rng& r) {
                     const double s = r.uniform(-2, 2);
                     return Case{{random_mat(r, dim(r, 1, 4), dim(r, 1, 4))},
                                 [s](Tape&, const std::vector<Var>& v) { return nn::scale(v[0], s); }};
                 }});
    c.push_back({"add_row", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), m = dim(r, 1, 4);
                     return Case{{random_mat(r, n, m), random_mat(r, 1, m)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::add_row(v[0], v[1]); }};
                 }});
    c.push_back({"mul_const", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), m = dim(r, 1, 4);
                     Mat k = random_mat(r, n, m);
                     return Case{{random_mat(r, n, m)},
                                 [k](Tape&, const std::vector<Var>& v) { return nn::mul_const(v[0], k); }};
                 }});
    c.push_back({"linear", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), i = dim(r, 1, 5), o = dim(r, 1, 4);
                     return Case{{random_mat(r, n, i), random_mat(r, i, o), random_mat(r, 1, o)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::linear(v[0], v[1], v[2]); }};
                 }});
    c.push_back({"gelu", 1e-4, [](Rng& r) {
                     return Case{{random_mat(r, dim(r, 1, 4), dim(r, 1, 5), 2.0)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::gelu(v[0]); }};
                 }});
    c.push_back({"tanh", 1e-4, [](Rng& r) {
                     return Case{{random_mat(r, dim(r, 1, 4), dim(r, 1, 5))},
                                 [](Tape&, const std::vector<Var>& v) { return nn::tanh(v[0]); }};
                 }});
    c.push_back({"exp", 1e-4, [](Rng& r) {
                     return Case{{random_mat(r, dim(r, 1, 4), dim(r, 1, 5))},
                                 [](Tape&, const std::vector<Var>& v) { return nn::exp(v[0]); }};
                 }});
    c.push_back({"concat_cols", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4);
                     return Case{{random_mat(r, n, dim(r, 1, 3)), random_mat(r, n, dim(r, 1, 3))},
                                 [](Tape&, const std::vector<Var>& v) { return nn::concat_cols(v); }};
                 }});
    c.push_back({"concat_rows", 1e-4, [](Rng& r) {
                     const int m = dim(r, 1, 4);
                     return Case{{random_mat(r, dim(r, 1, 3), m), random_mat(r, dim(r, 1, 3), m)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::concat_rows(v); }};
                 }});
    c.push_back({"slice_cols", 1e-4, [](Rng& r) {
                     const int m = dim(r, 2, 6), s = dim(r, 0, m - 1), k = dim(r, 1, m - s);
                     return Case{{random_mat(r, dim(r, 1, 3), m)},
                                 [s, k](Tape&, const std::vector<Var>& v) { return nn::slice_cols(v[0], s, k); }};
                 }});
    c.push_back({"slice_rows", 1e-4, [](Rng& r) {
                     const int n = dim(r, 2, 6), s = dim(r, 0, n - 1), k = dim(r, 1, n - s);
                     return Case{{random_mat(r, n, dim(r, 1, 3))},
                                 [s, k](Tape&, const std::vector<Var>& v) { return nn::slice_rows(v[0], s, k); }};
                 }});
    c.push_back({"gather_rows", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4);
                     std::vector<int> idx(static_cast<std::size_t>(dim(r, 1, 6)));
                     for (auto& i : idx) i = r.uniform_int(0, n - 1);
                     return Case{{random_mat(r, n, dim(r, 1, 3))},
                                 [idx](Tape&, const std::vector<Var>& v) { return nn::gather_rows(v[0], idx); }};
                 }});
    c.push_back({"layer_norm", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), m = dim(r, 2, 6);
                     return Case{{random_mat(r, n, m), random_mat(r, 1, m), random_mat(r, 1, m)},
                                 [](Tape&, const std::vector<Var>& v) { return nn::layer_norm(v[0], v[1], v[2]); }};
                 }});
    c.push_back({"softmax_rows", 1e-4, [](Rng& r) {
                     return Case{{random_mat(r, dim(r, 1, 4), dim(r, 1, 5))},
                                 [](Tape&, const std::vector<Var>& v) { return nn::softmax_rows(v[0]); }};
                 }});
    c.push_back({"sum", 1e-4, [](Rng& r) {
                     return Case{{random_mat(r, dim(r, 1, 4), dim(r, 1, 4))},
                                 [](Tape&, const std::vector<Var>& v) { return nn::sum(v[0]); }};
                 }});
    c.push_back({"mean", 1e-4, [](Rng& r) {
                     return Case{{random_mat(r, dim(r, 1, 4), dim(r, 1, 4))},
                                 [](Tape&, const std::vector<Var>& v) { return nn::mean(v[0]); }};
                 }});
    c.push_back({"weighted_sq_sum", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), m = dim(r, 1, 4);
                     Mat w = random_mat(r, n, m).cwiseAbs();
                     return Case{{random_mat(r, n, m)},
                                 [w](Tape&, const std::vector<Var>& v) { return nn::weighted_sq_sum(v[0], w); }};
                 }});
    c.push_back({"cross_entropy", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 5), k = dim(r, 2, 5);
                     std::vector<int> tg(static_cast<std::size_t>(n));
                     std::vector<double> w(static_cast<std::size_t>(n));
                     for (int i = 0; i < n; ++i) {
                         tg[static_cast<std::size_t>(i)] = r.uniform_int(0, k - 1);
                         w[static_cast<std::size_t>(i)] = r.uniform(0.1, 2.0);
                     }
                     return Case{{random_mat(r, n, k)}, [tg, w](Tape&, const std::vector<Var>& v) {
                                     return nn::cross_entropy(v[0], tg, w);
                                 }};
                 }});
    c.push_back({"kl_standard_normal", 1e-4, [](Rng& r) {
                     const int n = dim(r, 1, 4), m = dim(r, 1, 4);
                     std::vector<double> w(static_cast<std::size_t>(n));
                     for (auto& x : w) x = r.uniform(0.1, 2.0);
                     return Case{{random_mat(r, n, m), random_mat(r, n, m, 0.5)}, [w](Tape&, const std::vector<Var>& v) {
                                     return nn::kl_standard_normal(v[0], v[1], w);
                                 }};
                 }});
    c.push_back({"attention", 1e-5, [](Rng& r) {
                     const int heads = dim(r, 1, 3), dh = dim(r, 1, 3), d = heads * dh;
                     const int nq = dim(r, 1, 4), nk = dim(r, 1, 5);
                     std::vector<nn::KeyRange> ranges(static_cast<std::size_t>(nq));
                     for (auto& kr : ranges) {
                         kr.begin = r.uniform_int(0, nk);
                         kr.end = r.uniform_int(kr.begin, nk);
                     }
                     return Case{{random_mat(r, nq, d), random_mat(r, nk, d), random_mat(r, nk, d)},
                                 [heads, ranges](Tape&, const std::vector<Var>& v) {
                                     return nn::attention(v[0], v[1], v[2], heads, ranges);
                                 }};
                 }});
    c.push_back({"mlp", 1e-5, [](Rng& r) {
                     const int i = dim(r, 1, 4), h = dim(r, 2, 6), o = dim(r, 1, 4);
                     std::vector<Mat> in{random_mat(r, dim(r, 1, 4), i), random_mat(r, i, h), random_mat(r, 1, h),
                                         random_mat(r, h, o), random_mat(r, 1, o)};
                     return Case{in,
                                 [](Tape&, const std::vector<Var>& v) {
                                     Var h = nn::gelu(nn::linear(v[0], v[1], v[2]));
                                     return nn::linear(h, v[3], v[4]);
                                 }};
                 }});
    c.push_back({"multi_head_attention", 1e-5, [](Rng& r) {
                     const int heads = dim(r, 1, 2), d = heads * dim(r, 1, 3);
                     const int nq = dim(r, 1, 4), nk = dim(r, 1, 4);
                     std::vector<Mat> in{random_mat(r, nq, d), random_mat(r, nk, d)};
                     for (int p = 0; p < 4; ++p) {
                         in.push_back(random_mat(r, d, d, 0.7));
                         in.push_back(random_mat(r, 1, d, 0.3));
                     }
                     return Case{in, [heads](Tape&, const std::vector<Var>& v) {
                                     Var q = nn::linear(v[0], v[2], v[3]);
                                     Var k = nn::linear(v[1], v[4], v[5]);
                                     Var val = nn::linear(v[1], v[6], v[7]);
                                     std::vector<nn::KeyRange> all(static_cast<std::size_t>(q.rows()),
                                                                   nn::KeyRange{0, static_cast<int>(k.rows())});
                                     return nn::linear(nn::attention(q, k, val, heads, all), v[8], v[9]);
                                 }};
                 }});
    return c;
}

}  // namespace gradcheck
