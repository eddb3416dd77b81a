#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finite_diff.hpp"
#include "pushpomdp/nn.hpp"
#include "pushpomdp/pnp.hpp"

using namespace pushpomdp;
using ad::Graph;
using ad::Tensor;
using testsupport::check_gradients;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(r * c);
    for (auto& x : v) x = u(rng);
    return Tensor::from(r, c, v, true);
}

// Reduces any tensor to a scalar with a non-trivial gradient everywhere.
Tensor reduce(Graph& g, const Tensor& t, const Tensor& w) { return g.sum(g.mul(g.tanh(t), w)); }

}  // namespace

TEST(Autodiff, ForwardValues) {
    Graph g;
    const Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
    const Tensor b = Tensor::from(2, 2, {5, 6, 7, 8});
    const Tensor m = g.matmul(a, b);
    EXPECT_EQ(m.at(0, 0), 19);
    EXPECT_EQ(m.at(1, 1), 50);
    const Tensor nt = g.matmul_nt(a, b);
    EXPECT_EQ(nt.at(0, 1), 1 * 7 + 2 * 8);
    const Tensor sm = g.softmax_rows(Tensor::from(1, 2, {0.0, std::log(3.0)}));
    EXPECT_NEAR(sm.at(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(g.softplus(Tensor::scalar(0.0)).item(), std::log(2.0), 1e-15);
    EXPECT_NEAR(g.wrap_angle(Tensor::scalar(3 * kPi / 2)).item(), -kPi / 2, 1e-12);
    const Tensor kl = g.kl_diag(Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(0.0), Tensor::scalar(2.0));
    EXPECT_NEAR(kl.item(), std::log(2.0) + (1.0 + 1.0) / 8.0 - 0.5, 1e-14);
    const Tensor lp = g.gaussian_logpdf(Tensor::scalar(0.0), Tensor::scalar(1.0), Tensor::scalar(1.0));
    EXPECT_NEAR(lp.item(), -0.5 - 0.5 * std::log(2 * kPi), 1e-14);
}

TEST(Autodiff, BackwardRejectsNonScalar) {
    Graph g;
    Tensor a(2, 2, 1.0, true);
    Tensor b = g.scale(a, 2.0);
    EXPECT_THROW(g.backward(b), std::invalid_argument);
}

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
    std::mt19937_64 rng(11);
    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(3, 4, rng, 0.5, 1.5);
    Tensor row = random_tensor(1, 4, rng);
    Tensor w = random_tensor(3, 4, rng);
    w = Tensor::from(3, 4, std::vector<double>(w.value().begin(), w.value().end()));
    const auto r = check_gradients({a, b, row}, [&](Graph& g) {
        Tensor t = g.add(g.mul(a, b), g.sub(g.square(a), g.scale(b, 0.3)));
        t = g.add_row(t, row);
        t = g.add(t, g.log(b));
        t = g.add(t, g.exp(g.scale(a, 0.5)));
        t = g.add(t, g.softplus(a));
        t = g.add(t, g.relu(g.add_scalar(a, 0.05)));
        t = g.add(t, g.softmax_rows(g.mul(a, b)));
        return reduce(g, t, w);
    });
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_EQ(r.nonsmooth, 0u);
}

TEST(Autodiff, StructuralOpsMatchFiniteDifferences) {
    std::mt19937_64 rng(12);
    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(4, 2, rng);
    Tensor c = random_tensor(5, 4, rng);
    Tensor row = random_tensor(1, 3, rng);
    Tensor w = Tensor::from(1, 5, {0.3, -0.2, 0.9, 0.1, -0.7});
    const auto r = check_gradients({a, b, c, row}, [&](Graph& g) {
        Tensor ab = g.matmul(a, b);                       // 3x2
        Tensor act = g.matmul_nt(c, a);                   // 5x3
        Tensor tr = g.transpose(ab);                      // 2x3
        Tensor cat = g.concat_rows({tr, g.slice_rows(act, 1, 3), g.broadcast_rows(row, 1)});  // 6x3
        Tensor wide = g.concat_cols({g.slice_cols(cat, 0, 2), g.broadcast_rows(g.mean_rows(cat), 6)});  // 6x5
        Tensor red = g.transpose(g.add(g.slice_cols(wide, 1, 1), g.slice_cols(wide, 3, 1)));  // 1x6
        red = g.slice_cols(red, 0, 5);
        return g.sum(g.mul(g.tanh(red), w));
    });
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_EQ(r.nonsmooth, 0u);
}

TEST(Autodiff, DensityOpsMatchFiniteDifferences) {
    std::mt19937_64 rng(13);
    Tensor m1 = random_tensor(2, 3, rng);
    Tensor s1 = random_tensor(2, 3, rng, 0.3, 1.2);
    Tensor m2 = random_tensor(2, 3, rng);
    Tensor s2 = random_tensor(2, 3, rng, 0.3, 1.2);
    Tensor x = random_tensor(2, 3, rng, -3.0, 3.0);
    const auto r = check_gradients({m1, s1, m2, s2, x}, [&](Graph& g) {
        Tensor kl = g.kl_diag(m1, s1, m2, s2);
        Tensor lp = g.gaussian_logpdf(m1, s1, x, {false, false, true});
        return g.add(kl, g.scale(lp, 0.7));
    });
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_EQ(r.nonsmooth, 0u);
}

TEST(Autodiff, GradientsAccumulateOverReuse) {
    Graph g;
    Tensor a = Tensor::from(1, 1, {3.0}, true);
    Tensor loss = g.add(g.mul(a, a), a);  // d/da = 2a + 1
    g.backward(loss);
    EXPECT_DOUBLE_EQ(a.grad_view()[0], 7.0);
}

TEST(Autodiff, NonRecordingGraphKeepsValues) {
    Graph g(false);
    Tensor a = Tensor::from(1, 2, {1.0, 2.0}, true);
    Tensor s = g.sum(g.square(a));
    EXPECT_DOUBLE_EQ(s.item(), 5.0);
    EXPECT_EQ(g.node_count(), 0u);
}

TEST(Nn, RandomMlpsMatchFiniteDifferences) {
    std::mt19937_64 shape_rng(14);
    int scored = 0;
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<std::size_t> width(1, 6);
        std::vector<std::size_t> widths{width(shape_rng)};
        const std::size_t depth = 1 + shape_rng() % 3;
        for (std::size_t i = 0; i < depth; ++i) widths.push_back(width(shape_rng));
        Rng rng(100 + trial);
        nn::Mlp mlp(widths, rng);
        std::mt19937_64 drng(200 + trial);
        Tensor x = random_tensor(3, widths.front(), drng);
        std::vector<Tensor> params{x};
        // Random biases too; zero biases put dead units exactly on the ReLU kink.
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (const auto& l : mlp.layers) {
            for (auto& b : ad::Tensor(l.bias).value()) b = u(drng);
            params.push_back(l.weight);
            params.push_back(l.bias);
        }
        const auto r = check_gradients(params, [&](Graph& g) { return g.sum(g.tanh(mlp.forward(g, x))); });
        if (r.nonsmooth > 0) continue;  // ReLU kink inside the stencil
        ++scored;
        EXPECT_LT(r.max_rel_error, 1e-4) << "trial " << trial;
    }
    EXPECT_GE(scored, 7);
}

TEST(Nn, AttentionMatchesFiniteDifferences) {
    Rng rng(15);
    nn::MultiHeadAttention mha(4, 2, rng);
    std::mt19937_64 drng(16);
    Tensor q = random_tensor(2, 4, drng);
    Tensor kv = random_tensor(3, 4, drng);
    std::vector<nn::NamedTensor> named;
    mha.collect("mha", named);
    std::vector<Tensor> params{q, kv};
    for (auto& n : named) params.push_back(n.tensor);
    const auto r = check_gradients(params, [&](Graph& g) { return g.sum(g.tanh(mha.forward(g, q, kv, kv))); });
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_EQ(r.nonsmooth, 0u);
    EXPECT_THROW(nn::MultiHeadAttention(5, 2, rng), std::invalid_argument);
}

TEST(Nn, AdamFirstStepMovesByLearningRate) {
    Tensor p = Tensor::from(1, 2, {1.0, -1.0}, true);
    p.grad()[0] = 0.5;
    p.grad()[1] = -2.0;
    std::vector<Tensor> params{p};
    nn::AdamState st;
    nn::adam_step(params, st, {.lr = 0.1});
    // Bias-corrected first step is lr * sign(g) up to eps.
    EXPECT_NEAR(p.value()[0], 0.9, 1e-7);
    EXPECT_NEAR(p.value()[1], -0.9, 1e-7);
}

TEST(Pnp, TinyElboGradientMatchesFiniteDifferences) {
    PnpConfig cfg;
    cfg.latent_dim = 2;
    cfg.embed_dim = 8;
    cfg.attention_layers = 1;
    cfg.heads = 1;
    cfg.ffn_dim = 8;
    cfg.decoder_hidden = {8};
    PnpModel model(cfg, 21);
    Rng data_rng(22);
    const PushDataset ds = gen_dataset(1, 4, BlockSpec{}, NoiseSpec{}, SimulatorConfig{}, data_rng);
    const auto& recs = ds.blocks[0].records;
    const std::span<const PushRecord> ctx(recs.data(), 2);
    const auto params = model.parameters();
    const auto r = check_gradients(params, [&](Graph& g) {
        Rng rng(23);  // same reparameterization noise for every evaluation
        return elbo_loss(g, model, ctx, recs, rng);
    });
    EXPECT_LT(r.max_rel_error, 1e-3);
    EXPECT_EQ(r.nonsmooth, 0u);
    EXPECT_GT(r.checked, 100u);
}
