#include "caslayout/generative/toy.hpp"

#include <cmath>

#include "caslayout/errors.hpp"

namespace caslayout::gen {

ToyDdpm::ToyDdpm(int dim, int width, std::uint64_t seed) : dim_(dim) {
    Rng rng(seed);
    l1_ = nn::Linear(params_, "toy.l1", dim + time_dim_, width, rng);
    l2_ = nn::Linear(params_, "toy.l2", width, width, rng);
    l3_ = nn::Linear(params_, "toy.l3", width, dim, rng);
}

Var ToyDdpm::forward(Tape& t, const Mat& x_t, const std::vector<int>& steps) const {
    if (x_t.cols() != dim_ || static_cast<std::size_t>(x_t.rows()) != steps.size())
        throw ShapeError("toy denoiser input does not match its width or step count");
    Mat in(x_t.rows(), dim_ + time_dim_);
    in.leftCols(dim_) = x_t;
    for (Eigen::Index r = 0; r < x_t.rows(); ++r) {
        const auto e = nn::timestep_embedding(steps[static_cast<std::size_t>(r)], time_dim_);
        for (int c = 0; c < time_dim_; ++c) in(r, dim_ + c) = e[static_cast<std::size_t>(c)];
    }
    Var h = nn::gelu(l1_(t, t.constant(std::move(in))));
    h = nn::gelu(l2_(t, h));
    return l3_(t, h);
}

Var ToyDdpm::loss(Tape& t, const Mat& x0, const NoiseSchedule& schedule, Rng& rng) const {
    std::vector<int> steps(static_cast<std::size_t>(x0.rows()));
    Mat eps(x0.rows(), x0.cols());
    Mat x_t(x0.rows(), x0.cols());
    for (Eigen::Index r = 0; r < x0.rows(); ++r) {
        const int s = rng.uniform_int(1, schedule.T);
        steps[static_cast<std::size_t>(r)] = s;
        const double g = schedule.at(s);
        for (Eigen::Index c = 0; c < x0.cols(); ++c) {
            eps(r, c) = rng.normal();
            x_t(r, c) = std::sqrt(g) * x0(r, c) + std::sqrt(1.0 - g) * eps(r, c);
        }
    }
    Var d = nn::sub(forward(t, x_t, steps), t.constant(eps));
    return nn::scale(nn::weighted_sq_sum(d, Mat::Ones(x0.rows(), x0.cols())), 1.0 / static_cast<double>(x0.size()));
}

Mat ToyDdpm::sample(int n, const NoiseSchedule& schedule, Rng& rng) const {
    Mat x(n, dim_);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const Mat mask = Mat::Ones(n, dim_);
    for (int t = schedule.T; t >= 1; --t) {
        Tape tape(false);
        const Mat eps_hat = forward(tape, x, std::vector<int>(static_cast<std::size_t>(n), t)).value();
        reverse_step(schedule, t, eps_hat, mask, x, rng);
    }
    return x;
}

double histogram_tv(const std::vector<double>& samples, double lo, double hi, int bins,
                    const std::function<double(double)>& cdf) {
    if (samples.empty() || bins < 1 || !(hi > lo)) throw Error("histogram_tv needs samples and a non-empty range");
    std::vector<double> count(static_cast<std::size_t>(bins) + 1, 0.0);
    const double w = (hi - lo) / bins;
    for (double s : samples) {
        if (s < lo || s >= hi) {
            count.back() += 1.0;
            continue;
        }
        const int b = std::min(bins - 1, static_cast<int>((s - lo) / w));
        count[static_cast<std::size_t>(b)] += 1.0;
    }
    double tv = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double p = cdf(lo + (b + 1) * w) - cdf(lo + b * w);
        tv += std::abs(count[static_cast<std::size_t>(b)] / samples.size() - p);
    }
    tv += std::abs(count.back() / samples.size() - (1.0 - (cdf(hi) - cdf(lo))));
    return 0.5 * tv;
}

}  // namespace caslayout::gen
