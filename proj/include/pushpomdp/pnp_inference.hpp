#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pushpomdp/pnp.hpp"

namespace pushpomdp {

/// Tape-free forward pass of a trained PnpModel on plain Eigen matrices.
///
/// Holds a snapshot of the weights taken at construction. Results agree with
/// PnpModel::encode / decode to rounding.
class PnpInference {
public:
    explicit PnpInference(const PnpModel& model);

    const PnpConfig& config() const { return cfg_; }

    LatentDist encode(std::span<const PushRecord> records) const;
    LatentDist encode(const History& h) const { return encode(h.records()); }
    OutcomeDist decode(std::span<const double> z, const std::array<double, 3>& action) const;

private:
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using RowVector = Eigen::RowVectorXd;

    struct Layer {
        Matrix weight;
        RowVector bias;
    };
    struct Block {
        Layer query, key, value, output;
        std::size_t heads = 1;
        std::vector<Layer> ffn;
    };

    static Layer copy_layer(const nn::Linear& l);
    static std::vector<Layer> copy_mlp(const nn::Mlp& m);
    static Matrix run_mlp(const std::vector<Layer>& mlp, Matrix x);

    PnpConfig cfg_;
    std::vector<Layer> embed_;
    std::vector<Block> blocks_;
    RowVector default_token_;
    std::vector<Layer> latent_head_;
    std::vector<Layer> decoder_;
};

}  // namespace pushpomdp
