#pragma once

#include <functional>
#include <vector>

#include "caslayout/generative/diffusion.hpp"

namespace caslayout::gen {

/// Unconditional epsilon-prediction MLP over `dim`-dimensional points.
class ToyDdpm {
public:
    ToyDdpm(int dim, int width, std::uint64_t seed);

    int dim() const { return dim_; }
    ParamStore& params() { return params_; }

    Var forward(Tape& t, const Mat& x_t, const std::vector<int>& steps) const;
    /// One noise-prediction loss on x0 (rows = points) at random steps.
    Var loss(Tape& t, const Mat& x0, const NoiseSchedule& schedule, Rng& rng) const;
    Mat sample(int n, const NoiseSchedule& schedule, Rng& rng) const;

private:
    int dim_;
    int time_dim_ = 32;
    ParamStore params_;
    nn::Linear l1_, l2_, l3_;
};

/// Total variation between the histogram of samples on [lo, hi) and the
/// bin masses of a reference CDF (mass outside the range counts as its own bin).
double histogram_tv(const std::vector<double>& samples, double lo, double hi, int bins,
                    const std::function<double(double)>& cdf);

}  // namespace caslayout::gen
