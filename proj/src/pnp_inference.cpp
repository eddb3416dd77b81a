#include "pushpomdp/pnp_inference.hpp"

#include <cmath>
#include <stdexcept>

namespace pushpomdp {

namespace {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

PnpInference::Layer PnpInference::copy_layer(const nn::Linear& l) {
    Layer out;
    out.weight = Eigen::Map<const Matrix>(l.weight.value().data(), l.weight.rows(), l.weight.cols());
    out.bias = Eigen::Map<const RowVector>(l.bias.value().data(), l.bias.cols());
    return out;
}

std::vector<PnpInference::Layer> PnpInference::copy_mlp(const nn::Mlp& m) {
    std::vector<Layer> out;
    for (const auto& l : m.layers) {
        out.push_back(copy_layer(l));
    }
    return out;
}

PnpInference::Matrix PnpInference::run_mlp(const std::vector<Layer>& mlp, Matrix x) {
    for (std::size_t i = 0; i < mlp.size(); ++i) {
        Matrix y = x * mlp[i].weight;
        y.rowwise() += mlp[i].bias;
        if (i + 1 < mlp.size()) {
            y = y.cwiseMax(0.0);
        }
        x = std::move(y);
    }
    return x;
}

PnpInference::PnpInference(const PnpModel& model) : cfg_(model.cfg_) {
    embed_ = copy_mlp(model.embed_);
    for (const auto& b : model.blocks_) {
        Block blk;
        blk.query = copy_layer(b.attention.query);
        blk.key = copy_layer(b.attention.key);
        blk.value = copy_layer(b.attention.value);
        blk.output = copy_layer(b.attention.output);
        blk.heads = b.attention.heads;
        blk.ffn = copy_mlp(b.feed_forward);
        blocks_.push_back(std::move(blk));
    }
    default_token_ = Eigen::Map<const RowVector>(model.default_token_.value().data(), model.default_token_.cols());
    latent_head_ = copy_mlp(model.latent_head_);
    decoder_ = copy_mlp(model.decoder_);
}

LatentDist PnpInference::encode(std::span<const PushRecord> records) const {
    RowVector agg;
    if (records.empty()) {
        agg = default_token_;
    } else {
        const std::size_t w = cfg_.token_width();
        Matrix x(records.size(), w);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto f = token_features(cfg_, records[i]);
            for (std::size_t j = 0; j < w; ++j) {
                x(i, j) = f[j];
            }
        }
        Matrix h = run_mlp(embed_, std::move(x));
        const Eigen::Index n = h.rows();
        for (const auto& b : blocks_) {
            Matrix q = h * b.query.weight;
            q.rowwise() += b.query.bias;
            Matrix k = h * b.key.weight;
            k.rowwise() += b.key.bias;
            Matrix v = h * b.value.weight;
            v.rowwise() += b.value.bias;
            const Eigen::Index dk = q.cols() / static_cast<Eigen::Index>(b.heads);
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
            Matrix joined(n, q.cols());
            for (Eigen::Index hd = 0; hd < static_cast<Eigen::Index>(b.heads); ++hd) {
                Matrix s = (q.middleCols(hd * dk, dk) * k.middleCols(hd * dk, dk).transpose()) * inv_sqrt;
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double mx = s.row(r).maxCoeff();
                    s.row(r) = (s.row(r).array() - mx).exp();
                    s.row(r) /= s.row(r).sum();
                }
                joined.middleCols(hd * dk, dk) = s * v.middleCols(hd * dk, dk);
            }
            Matrix att = joined * b.output.weight;
            att.rowwise() += b.output.bias;
            h += att;
            h += run_mlp(b.ffn, h);
        }
        agg = h.colwise().mean();
    }
    const Matrix raw = run_mlp(latent_head_, agg);
    const std::size_t z = cfg_.latent_dim;
    LatentDist out;
    out.mean.resize(z);
    out.std.resize(z);
    for (std::size_t i = 0; i < z; ++i) {
        out.mean[i] = raw(0, static_cast<Eigen::Index>(i));
        out.std[i] = softplus(raw(0, static_cast<Eigen::Index>(z + i))) + nn::kStdFloor;
    }
    return out;
}

OutcomeDist PnpInference::decode(std::span<const double> z, const std::array<double, 3>& action) const {
    if (z.size() != cfg_.latent_dim) {
        throw std::invalid_argument("pnp decode: latent has the wrong size");
    }
    Matrix x(1, static_cast<Eigen::Index>(cfg_.decoder_input_width()));
    Eigen::Index c = 0;
    for (double v : z) {
        x(0, c++) = v;
    }
    x(0, c++) = action[0];
    x(0, c++) = action[1];
    x(0, c++) = action[2] / cfg_.travel_scale;
    for (double v : cfg_.observable) {
        x(0, c++) = v;
    }
    const Matrix raw = run_mlp(decoder_, std::move(x));
    OutcomeDist out;
    const double s[3] = {cfg_.position_scale, cfg_.position_scale, 1.0};
    for (Eigen::Index j = 0; j < 3; ++j) {
        out.mean[j] = raw(0, j) * s[j];
        out.std[j] = (softplus(raw(0, 3 + j)) + nn::kStdFloor) * s[j];
    }
    return out;
}

}  // namespace pushpomdp
