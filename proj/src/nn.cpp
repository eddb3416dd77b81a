#include "pushpomdp/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace pushpomdp::nn {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(in, out, 0.0, true), bias(1, out, 0.0, true) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& w : weight.value()) {
        w = u(rng);
    }
}

Tensor Linear::forward(Graph& g, const Tensor& x) const {
    return g.add_row(g.matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

Mlp::Mlp(const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) {
        throw std::invalid_argument("Mlp needs at least input and output widths");
    }
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        layers.emplace_back(widths[i], widths[i + 1], rng);
    }
}

Tensor Mlp::forward(Graph& g, const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(g, h);
        if (i + 1 < layers.size()) {
            h = g.relu(h);
        }
    }
    return h;
}

void Mlp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].collect(prefix + "." + std::to_string(i), out);
    }
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t n_heads, Rng& rng)
    : heads(n_heads) {
    if (n_heads == 0 || dim % n_heads != 0) {
        throw std::invalid_argument("attention dim " + std::to_string(dim) + " not divisible by " +
                                    std::to_string(n_heads) + " heads");
    }
    query = Linear(dim, dim, rng);
    key = Linear(dim, dim, rng);
    value = Linear(dim, dim, rng);
    output = Linear(dim, dim, rng);
}

Tensor MultiHeadAttention::forward(Graph& g, const Tensor& queries, const Tensor& keys,
                                   const Tensor& values) const {
    if (queries.cols() != dim() || keys.cols() != dim() || values.cols() != dim()) {
        throw std::invalid_argument("attention: input width does not match model dim");
    }
    if (keys.rows() != values.rows() || keys.rows() == 0) {
        throw std::invalid_argument("attention: keys and values need the same non-zero length");
    }
    const Tensor q = query.forward(g, queries);
    const Tensor k = key.forward(g, keys);
    const Tensor v = value.forward(g, values);
    const std::size_t dk = head_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Tensor> per_head;
    per_head.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = g.slice_cols(q, h * dk, dk);
        const Tensor kh = g.slice_cols(k, h * dk, dk);
        const Tensor vh = g.slice_cols(v, h * dk, dk);
        const Tensor weights = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv_sqrt));
        per_head.push_back(g.matmul(weights, vh));
    }
    const Tensor joined = heads == 1 ? per_head.front() : g.concat_cols(per_head);
    return output.forward(g, joined);
}

void MultiHeadAttention::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    query.collect(prefix + ".query", out);
    key.collect(prefix + ".key", out);
    value.collect(prefix + ".value", out);
    output.collect(prefix + ".output", out);
}

GaussianDiag gaussian_from_raw(Graph& g, const Tensor& raw) {
    if (raw.cols() % 2 != 0) {
        throw std::invalid_argument("gaussian_from_raw: expected an even number of columns");
    }
    const std::size_t d = raw.cols() / 2;
    GaussianDiag out;
    out.mean = g.slice_cols(raw, 0, d);
    out.std = g.add_scalar(g.softplus(g.slice_cols(raw, d, d)), kStdFloor);
    return out;
}

Tensor reparam_sample(Graph& g, const GaussianDiag& dist, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Tensor eps(dist.mean.rows(), dist.mean.cols());
    for (double& e : eps.value()) {
        e = n01(rng);
    }
    return g.add(dist.mean, g.mul(dist.std, eps));
}

Tensor gaussian_logpdf(Graph& g, const GaussianDiag& dist, const Tensor& x,
                       const std::vector<bool>& wrapped_cols) {
    return g.gaussian_logpdf(dist.mean, dist.std, x, wrapped_cols);
}

Tensor kl_diag(Graph& g, const GaussianDiag& q1, const GaussianDiag& q2) {
    return g.kl_diag(q1.mean, q1.std, q2.mean, q2.std);
}

void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        for (const Tensor& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (state.m[i].size() != p.size()) {
            throw std::invalid_argument("adam_step: optimizer state does not match parameter shape");
        }
        auto value = p.value();
        auto grad = p.grad_view();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double gj = grad.empty() ? 0.0 : grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            value[j] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * value[j]);
        }
    }
}

}  // namespace pushpomdp::nn
