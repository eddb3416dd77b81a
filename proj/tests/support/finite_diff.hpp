#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pushpomdp/autodiff.hpp"

namespace testsupport {

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Entries skipped because the loss is not smooth within the stencil.
    std::size_t nonsmooth = 0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Finite differences on every entry of every parameter against the taped gradient.
/// `loss` must rebuild the graph from scratch on each call and be deterministic.
inline GradCheck check_gradients(const std::vector<pushpomdp::ad::Tensor>& params,
                                 const std::function<pushpomdp::ad::Tensor(pushpomdp::ad::Graph&)>& loss,
                                 double h = 1e-3, double abs_floor = 1e-6) {
    using pushpomdp::ad::Graph;
    for (auto p : params) p.zero_grad();
    {
        Graph g;
        auto l = loss(g);
        g.backward(l);
    }
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) {
        auto gv = p.grad_view();
        analytic.emplace_back(gv.begin(), gv.end());
        if (analytic.back().empty()) analytic.back().assign(p.size(), 0.0);
    }
    auto eval = [&] {
        Graph g(false);
        return loss(g).item();
    };
    GradCheck out;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t];
        auto v = p.value();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            auto at = [&](double offset) {
                v[i] = keep + offset;
                return eval();
            };
            // Fourth-order stencil; lets h stay large enough to keep rounding noise down.
            auto stencil = [&](double s) { return (at(-2 * s) - 8 * at(-s) + 8 * at(s) - at(2 * s)) / (12.0 * s); };
            const double numeric = stencil(h);
            const double finer = stencil(0.5 * h);
            v[i] = keep;
            const double a = analytic[t][i];
            // Two step sizes that disagree mean a ReLU kink lies inside the stencil; the
            // derivative is undefined there, so the entry is reported instead of scored.
            if (std::abs(numeric - finer) > 1e-3 * std::max({std::abs(numeric), std::abs(finer), abs_floor})) {
                ++out.nonsmooth;
                continue;
            }
            const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst_param = t;
                out.worst_index = i;
                out.worst_analytic = a;
                out.worst_numeric = numeric;
            }
            ++out.checked;
        }
    }
    return out;
}

}  // namespace testsupport
