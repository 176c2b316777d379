#include "caslayout/nn/autodiff.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "caslayout/errors.hpp"

namespace caslayout::nn {

namespace {

std::string shape(const Mat& m) { return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")"; }

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape(a) + " and " + shape(b));
}

void same_shape(const char* op, Var a, Var b) {
    if (a.tape != b.tape) throw Error(std::string(op) + ": operands on different tapes");
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a.value(), b.value());
}

}  // namespace

const Mat& Var::value() const { return tape->value(id); }

double Var::item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar " + shape(value()));
    return value()(0, 0);
}

Var Tape::constant(Mat value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::input(Mat value) {
    Node n;
    n.value = std::move(value);
    n.needs = grad_enabled_;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    Node n;
    n.ref = &p.value;
    n.needs = grad_enabled_ && param_grads_ && !p.frozen;
    n.param = &p;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size() - 1);
    param_nodes_[&p] = id;
    return {this, id};
}

Var Tape::push(Mat value, std::initializer_list<Var> parents, Backward back) {
    return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(back));
}

Var Tape::push(Mat value, std::span<const Var> parents, Backward back) {
    Node n;
    n.value = std::move(value);
    for (const Var& p : parents) {
        if (p.tape != this) throw Error("operand recorded on a different tape");
        n.needs = n.needs || nodes_[static_cast<std::size_t>(p.id)].needs;
    }
    if (n.needs) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(int id, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        n.grad += g;
    }
}

Mat Tape::grad(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.has_grad) return n.grad;
    return Mat::Zero(value(id).rows(), value(id).cols());
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw Error("backward on a foreign variable");
    if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward needs a scalar loss, got " + shape(loss.value()));
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad.resize(0, 0);
    }
    accumulate(loss.id, Mat::Ones(1, 1));
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.has_grad) continue;
        if (n.param != nullptr) {
            if (!n.param->frozen) n.param->grad += n.grad;
        } else if (n.back) {
            n.back(*this, i);
        }
    }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
    Mat out = a.value() * b.value();
    return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        if (t.needs_grad(a.id)) t.accumulate(a.id, g * b.value().transpose());
        if (t.needs_grad(b.id)) t.accumulate(b.id, a.value().transpose() * g);
    });
}

Var add(Var a, Var b) {
    same_shape("add", a, b);
    return a.tape->push(a.value() + b.value(), {a, b}, [a, b](Tape& t, int self) {
        t.accumulate(a.id, t.upstream(self));
        t.accumulate(b.id, t.upstream(self));
    });
}

Var sub(Var a, Var b) {
    same_shape("sub", a, b);
    return a.tape->push(a.value() - b.value(), {a, b}, [a, b](Tape& t, int self) {
        t.accumulate(a.id, t.upstream(self));
        if (t.needs_grad(b.id)) t.accumulate(b.id, -t.upstream(self));
    });
}

Var mul(Var a, Var b) {
    same_shape("mul", a, b);
    Mat out = a.value().cwiseProduct(b.value());
    return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        if (t.needs_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(b.value()));
        if (t.needs_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(a.value()));
    });
}

Var scale(Var a, double s) {
    return a.tape->push(a.value() * s, {a}, [a, s](Tape& t, int self) { t.accumulate(a.id, t.upstream(self) * s); });
}

Var add_row(Var a, Var r) {
    if (r.rows() != 1 || r.cols() != a.cols()) shape_error("add_row", a.value(), r.value());
    Mat out = a.value().rowwise() + r.value().row(0);
    return a.tape->push(std::move(out), {a, r}, [a, r](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        t.accumulate(a.id, g);
        if (t.needs_grad(r.id)) t.accumulate(r.id, g.colwise().sum());
    });
}

Var mul_const(Var a, const Mat& c) {
    if (a.rows() != c.rows() || a.cols() != c.cols()) shape_error("mul_const", a.value(), c);
    return a.tape->push(a.value().cwiseProduct(c), {a},
                        [a, c](Tape& t, int self) { t.accumulate(a.id, t.upstream(self).cwiseProduct(c)); });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

namespace {
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;
}  // namespace

Var gelu(Var a) {
    constexpr double k = kGeluK, c = kGeluC;
    const Mat& x = a.value();
    Mat th = (k * (x.array() + c * x.array().cube())).tanh().matrix();
    Mat out = (0.5 * x.array() * (1.0 + th.array())).matrix();
    return a.tape->push(std::move(out), {a}, [a, th](Tape& t, int self) {
        const auto& x = a.value().array();
        const auto d = 0.5 * (1.0 + th.array()) + 0.5 * x * (1.0 - th.array().square()) * kGeluK * (1.0 + 3.0 * kGeluC * x.square());
        t.accumulate(a.id, (t.upstream(self).array() * d).matrix());
    });
}

Var tanh(Var a) {
    Mat out = a.value().array().tanh().matrix();
    return a.tape->push(out, {a}, [a, out](Tape& t, int self) {
        t.accumulate(a.id, (t.upstream(self).array() * (1.0 - out.array().square())).matrix());
    });
}

Var exp(Var a) {
    Mat out = a.value().array().exp().matrix();
    return a.tape->push(out, {a},
                        [a, out](Tape& t, int self) { t.accumulate(a.id, t.upstream(self).cwiseProduct(out)); });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
        cols += p.cols();
    }
    Mat out(rows, cols);
    Eigen::Index c = 0;
    std::vector<Eigen::Index> offsets;
    for (const Var& p : parts) {
        offsets.push_back(c);
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return parts[0].tape->push(std::move(out), parts, [ps, offsets](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        for (std::size_t i = 0; i < ps.size(); ++i)
            if (t.needs_grad(ps[i].id)) t.accumulate(ps[i].id, g.middleCols(offsets[i], ps[i].cols()));
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    const Eigen::Index cols = parts[0].cols();
    Eigen::Index rows = 0;
    for (const Var& p : parts) {
        if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
        rows += p.rows();
    }
    Mat out(rows, cols);
    Eigen::Index r = 0;
    std::vector<Eigen::Index> offsets;
    for (const Var& p : parts) {
        offsets.push_back(r);
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return parts[0].tape->push(std::move(out), parts, [ps, offsets](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        for (std::size_t i = 0; i < ps.size(); ++i)
            if (t.needs_grad(ps[i].id)) t.accumulate(ps[i].id, g.middleRows(offsets[i], ps[i].rows()));
    });
}

Var slice_cols(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.cols())
        throw ShapeError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " + shape(a.value()));
    Mat out = a.value().middleCols(start, count);
    return a.tape->push(std::move(out), {a}, [a, start, count](Tape& t, int self) {
        Mat g = Mat::Zero(a.rows(), a.cols());
        g.middleCols(start, count) = t.upstream(self);
        t.accumulate(a.id, g);
    });
}

Var slice_rows(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.rows())
        throw ShapeError("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " + shape(a.value()));
    Mat out = a.value().middleRows(start, count);
    return a.tape->push(std::move(out), {a}, [a, start, count](Tape& t, int self) {
        Mat g = Mat::Zero(a.rows(), a.cols());
        g.middleRows(start, count) = t.upstream(self);
        t.accumulate(a.id, g);
    });
}

Var gather_rows(Var a, const std::vector<int>& rows) {
    Mat out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= a.rows())
            throw ShapeError("gather_rows index " + std::to_string(rows[i]) + " out of " + shape(a.value()));
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
    }
    return a.tape->push(std::move(out), {a}, [a, rows](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        Mat ga = Mat::Zero(a.rows(), a.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accumulate(a.id, ga);
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (gain.rows() != 1 || gain.cols() != d) shape_error("layer_norm gain", x.value(), gain.value());
    if (bias.rows() != 1 || bias.cols() != d) shape_error("layer_norm bias", x.value(), bias.value());
    Mat xhat(n, d);
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = x.value().row(i).mean();
        const double var = (x.value().row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
    }
    Mat out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    return x.tape->push(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        if (t.needs_grad(gain.id)) t.accumulate(gain.id, g.cwiseProduct(xhat).colwise().sum());
        if (t.needs_grad(bias.id)) t.accumulate(bias.id, g.colwise().sum());
        if (t.needs_grad(x.id)) {
            Mat dxhat = g.array().rowwise() * gain.value().row(0).array();
            Mat dx(x.rows(), x.cols());
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                const double m1 = dxhat.row(i).mean();
                const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                dx.row(i) = (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
            }
            t.accumulate(x.id, dx);
        }
    });
}

Var softmax_rows(Var a) {
    Mat out(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double mx = a.value().row(i).maxCoeff();
        out.row(i) = (a.value().row(i).array() - mx).exp();
        out.row(i) /= out.row(i).sum();
    }
    return a.tape->push(out, {a}, [a, out](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        Mat dx(out.rows(), out.cols());
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double dot = g.row(i).dot(out.row(i));
            dx.row(i) = out.row(i).array() * (g.row(i).array() - dot);
        }
        t.accumulate(a.id, dx);
    });
}

Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape->push(std::move(out), {a}, [a](Tape& t, int self) {
        t.accumulate(a.id, Mat::Constant(a.rows(), a.cols(), t.upstream(self)(0, 0)));
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw ShapeError("mean of an empty matrix");
    return scale(sum(a), 1.0 / n);
}

Var weighted_sq_sum(Var a, const Mat& w) {
    if (a.rows() != w.rows() || a.cols() != w.cols()) shape_error("weighted_sq_sum", a.value(), w);
    Mat out(1, 1);
    out(0, 0) = (w.array() * a.value().array().square()).sum();
    return a.tape->push(std::move(out), {a}, [a, w](Tape& t, int self) {
        t.accumulate(a.id, (2.0 * t.upstream(self)(0, 0)) * w.cwiseProduct(a.value()));
    });
}

Var cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<double>& weights) {
    const Eigen::Index n = logits.rows();
    if (static_cast<Eigen::Index>(targets.size()) != n || static_cast<Eigen::Index>(weights.size()) != n)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + shape(logits.value()));
    Mat probs(n, logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int tgt = targets[static_cast<std::size_t>(i)];
        if (tgt < 0 || tgt >= logits.cols()) throw ShapeError("cross_entropy target out of range");
        const double mx = logits.value().row(i).maxCoeff();
        probs.row(i) = (logits.value().row(i).array() - mx).exp();
        const double z = probs.row(i).sum();
        probs.row(i) /= z;
        const double w = weights[static_cast<std::size_t>(i)];
        if (w != 0.0) total += w * (std::log(z) + mx - logits.value()(i, tgt));
    }
    Mat out(1, 1);
    out(0, 0) = total;
    return logits.tape->push(std::move(out), {logits}, [logits, targets, weights, probs](Tape& t, int self) {
        const double up = t.upstream(self)(0, 0);
        Mat g = probs;
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            g(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
            g.row(i) *= up * weights[static_cast<std::size_t>(i)];
        }
        t.accumulate(logits.id, g);
    });
}

Var kl_standard_normal(Var mu, Var logvar, const std::vector<double>& row_weights) {
    same_shape("kl_standard_normal", mu, logvar);
    if (static_cast<Eigen::Index>(row_weights.size()) != mu.rows()) throw ShapeError("kl_standard_normal: weight count");
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(row_weights.data(), mu.rows());
    Mat per = 0.5 * (mu.value().array().square() + logvar.value().array().exp() - 1.0 - logvar.value().array()).matrix();
    Mat out(1, 1);
    out(0, 0) = (per.array().colwise() * w.array()).sum();
    return mu.tape->push(std::move(out), {mu, logvar}, [mu, logvar, w](Tape& t, int self) {
        const double up = t.upstream(self)(0, 0);
        if (t.needs_grad(mu.id)) t.accumulate(mu.id, (mu.value().array().colwise() * w.array() * up).matrix());
        if (t.needs_grad(logvar.id))
            t.accumulate(logvar.id,
                         ((0.5 * (logvar.value().array().exp() - 1.0)).colwise() * w.array() * up).matrix());
    });
}

Var attention(Var q, Var k, Var v, int heads, const std::vector<KeyRange>& ranges) {
    const Eigen::Index nq = q.rows(), d = q.cols();
    if (k.cols() != d || v.cols() != d) shape_error("attention", q.value(), k.value());
    if (k.rows() != v.rows()) shape_error("attention k/v", k.value(), v.value());
    if (heads <= 0 || d % heads != 0) throw ShapeError("attention: width " + std::to_string(d) + " not divisible by heads");
    if (static_cast<Eigen::Index>(ranges.size()) != nq) throw ShapeError("attention: one key range per query row");
    for (const auto& r : ranges)
        if (r.begin < 0 || r.end < r.begin || r.end > k.rows()) throw ShapeError("attention: key range out of bounds");
    const int dh = static_cast<int>(d / heads);
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

    // probs laid out per query, per head, per key in range
    std::vector<std::size_t> offset(static_cast<std::size_t>(nq) + 1, 0);
    for (Eigen::Index i = 0; i < nq; ++i) {
        const auto& r = ranges[static_cast<std::size_t>(i)];
        offset[static_cast<std::size_t>(i) + 1] = offset[static_cast<std::size_t>(i)] + static_cast<std::size_t>((r.end - r.begin) * heads);
    }
    auto probs = std::make_shared<std::vector<double>>(offset.back());
    Mat out = Mat::Zero(nq, d);
    const Mat& Q = q.value();
    const Mat& K = k.value();
    const Mat& V = v.value();
    for (Eigen::Index i = 0; i < nq; ++i) {
        const auto& r = ranges[static_cast<std::size_t>(i)];
        const int len = r.end - r.begin;
        if (len == 0) continue;
        for (int h = 0; h < heads; ++h) {
            double* p = probs->data() + offset[static_cast<std::size_t>(i)] + static_cast<std::size_t>(h * len);
            const auto qh = Q.row(i).segment(h * dh, dh);
            double mx = -INFINITY;
            for (int j = 0; j < len; ++j) {
                p[j] = sc * qh.dot(K.row(r.begin + j).segment(h * dh, dh));
                mx = std::max(mx, p[j]);
            }
            double z = 0.0;
            for (int j = 0; j < len; ++j) {
                p[j] = std::exp(p[j] - mx);
                z += p[j];
            }
            auto oh = out.row(i).segment(h * dh, dh);
            for (int j = 0; j < len; ++j) {
                p[j] /= z;
                oh += p[j] * V.row(r.begin + j).segment(h * dh, dh);
            }
        }
    }
    return q.tape->push(std::move(out), {q, k, v}, [q, k, v, heads, ranges, offset, probs, dh, sc](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        const Mat& Q = q.value();
        const Mat& K = k.value();
        const Mat& V = v.value();
        Mat dq = Mat::Zero(Q.rows(), Q.cols());
        Mat dk = Mat::Zero(K.rows(), K.cols());
        Mat dv = Mat::Zero(V.rows(), V.cols());
        std::vector<double> dp;
        for (Eigen::Index i = 0; i < Q.rows(); ++i) {
            const auto& r = ranges[static_cast<std::size_t>(i)];
            const int len = r.end - r.begin;
            if (len == 0) continue;
            dp.resize(static_cast<std::size_t>(len));
            for (int h = 0; h < heads; ++h) {
                const double* p = probs->data() + offset[static_cast<std::size_t>(i)] + static_cast<std::size_t>(h * len);
                const auto go = g.row(i).segment(h * dh, dh);
                double dot = 0.0;
                for (int j = 0; j < len; ++j) {
                    dv.row(r.begin + j).segment(h * dh, dh) += p[j] * go;
                    dp[static_cast<std::size_t>(j)] = go.dot(V.row(r.begin + j).segment(h * dh, dh));
                    dot += p[j] * dp[static_cast<std::size_t>(j)];
                }
                auto dqh = dq.row(i).segment(h * dh, dh);
                const auto qh = Q.row(i).segment(h * dh, dh);
                for (int j = 0; j < len; ++j) {
                    const double ds = p[j] * (dp[static_cast<std::size_t>(j)] - dot) * sc;
                    dqh += ds * K.row(r.begin + j).segment(h * dh, dh);
                    dk.row(r.begin + j).segment(h * dh, dh) += ds * qh;
                }
            }
        }
        t.accumulate(q.id, dq);
        t.accumulate(k.id, dk);
        t.accumulate(v.id, dv);
    });
}

}  // namespace caslayout::nn
