#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "caslayout/rng.hpp"

namespace caslayout::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Param {
    std::string name;
    Mat value;
    Mat grad;
    Mat m;  // AdamW moments
    Mat v;
    bool frozen = false;
};

enum class Init { zeros, ones, trunc_normal, normal };

/// Named parameters in insertion order.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Param& add(const std::string& name, int rows, int cols, Init init, Rng& rng, double stddev = 0.02);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.contains(name); }

    std::vector<Param*> all();
    std::vector<const Param*> all() const;
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();
    void set_frozen(const std::string& prefix, bool frozen);

    /// Copies values of every parameter whose name exists in `other`.
    void copy_values_from(const ParamStore& other);

private:
    std::vector<std::unique_ptr<Param>> params_;
    std::map<std::string, std::size_t> index_;
};

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled weight decay Adam. Frozen parameters are skipped.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}
    /// Throws Error on a non-finite gradient before touching any parameter.
    void step(ParamStore& store);
    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    long steps() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    long t_ = 0;
};

/// Checkpoint: "CLCK", u32 version, then records of
/// (u32 name length, name, u8 dtype, u32 rank, u64 dims..., LE payload).
void save_checkpoint(const ParamStore& store, const std::string& path);
std::string checkpoint_bytes(const ParamStore& store);
/// Loads values into an existing store; names and shapes must match.
void load_checkpoint(ParamStore& store, const std::string& path);
void load_checkpoint_bytes(ParamStore& store, const std::string& bytes);

}  // namespace caslayout::nn
