#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pushpomdp/autodiff.hpp"
#include "pushpomdp/geometry.hpp"

namespace pushpomdp::nn {

using ad::Graph;
using ad::Tensor;

/// Floor added after softplus so standard deviations stay strictly positive.
constexpr double kStdFloor = 1e-4;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// y = x W + b, with W stored (in x out).
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);

    std::size_t in_features() const { return weight.rows(); }
    std::size_t out_features() const { return weight.cols(); }
    Tensor forward(Graph& g, const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Linear layers with ReLU between them (none after the last).
struct Mlp {
    std::vector<Linear> layers;

    Mlp() = default;
    Mlp(const std::vector<std::size_t>& widths, Rng& rng);

    Tensor forward(Graph& g, const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Multi-head scaled dot-product attention with learned Q/K/V/output projections.
struct MultiHeadAttention {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    std::size_t heads = 1;

    MultiHeadAttention() = default;
    /// Throws std::invalid_argument unless `dim` is divisible by `heads`.
    MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng);

    std::size_t dim() const { return query.out_features(); }
    std::size_t head_dim() const { return dim() / heads; }

    /// queries: (q x dim); keys, values: (k x dim). Returns (q x dim).
    Tensor forward(Graph& g, const Tensor& queries, const Tensor& keys, const Tensor& values) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Diagonal Gaussian; rows are independent distributions when batched.
struct GaussianDiag {
    Tensor mean;
    Tensor std;
};

/// Splits (rows x 2d) raw head output into mean and softplus(raw) + kStdFloor.
GaussianDiag gaussian_from_raw(Graph& g, const Tensor& raw);

/// mean + std * eps with eps ~ N(0, I); differentiable in mean and std.
Tensor reparam_sample(Graph& g, const GaussianDiag& dist, Rng& rng);

Tensor gaussian_logpdf(Graph& g, const GaussianDiag& dist, const Tensor& x,
                       const std::vector<bool>& wrapped_cols = {});

Tensor kl_diag(Graph& g, const GaussianDiag& q1, const GaussianDiag& q2);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled weight decay, applied as p -= lr * weight_decay * p.
    double weight_decay = 0.0;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;
};

/// Bias-corrected Adam update of `params` from their accumulated gradients.
/// Parameters without a gradient buffer are treated as having zero gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace pushpomdp::nn
