#include "pushpomdp/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pushpomdp/geometry.hpp"

namespace pushpomdp::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

constexpr double kHalfLogTwoPi = 0.91893853320467274178032973640562;

MatMap map(std::span<double> s, std::size_t r, std::size_t c) {
    return MatMap(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

ConstMatMap cmap(std::span<const double> s, std::size_t r, std::size_t c) {
    return ConstMatMap(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

double softplus_value(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
    impl_->rows = rows;
    impl_->cols = cols;
    impl_->value.assign(rows * cols, fill);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    if (values.size() != rows * cols) {
        throw std::invalid_argument("Tensor::from: value count does not match shape");
    }
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->rows = rows;
    t.impl_->cols = cols;
    t.impl_->value.assign(values.begin(), values.end());
    t.impl_->requires_grad = requires_grad;
    return t;
}

double Tensor::item() const {
    if (size() != 1) {
        throw std::invalid_argument("Tensor::item on a non-scalar tensor");
    }
    return impl_->value[0];
}

std::span<double> Tensor::grad() const {
    if (impl_->grad.empty()) {
        impl_->grad.assign(impl_->value.size(), 0.0);
    }
    return impl_->grad;
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Graph::make_output(std::size_t rows, std::size_t cols, std::initializer_list<const Tensor*> inputs) {
    bool needs = false;
    if (record_) {
        for (const Tensor* t : inputs) {
            needs = needs || t->requires_grad();
        }
    }
    return Tensor(rows, cols, 0.0, needs);
}

void Graph::push(std::function<void()> fn) {
    tape_.push_back(std::move(fn));
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ");
    }
    Tensor out = make_output(a.rows(), b.cols(), {&a, &b});
    map(out.value(), a.rows(), b.cols()).noalias() =
        cmap(a.value(), a.rows(), a.cols()) * cmap(b.value(), b.rows(), b.cols());
    if (out.requires_grad()) {
        push([out, a, b]() mutable {
            if (!out.has_grad()) return;
            auto go = cmap(out.grad_view(), out.rows(), out.cols());
            if (a.requires_grad()) {
                map(a.grad(), a.rows(), a.cols()).noalias() += go * cmap(b.value(), b.rows(), b.cols()).transpose();
            }
            if (b.requires_grad()) {
                map(b.grad(), b.rows(), b.cols()).noalias() += cmap(a.value(), a.rows(), a.cols()).transpose() * go;
            }
        });
    }
    return out;
}

Tensor Graph::matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: column counts differ");
    }
    Tensor out = make_output(a.rows(), b.rows(), {&a, &b});
    map(out.value(), a.rows(), b.rows()).noalias() =
        cmap(a.value(), a.rows(), a.cols()) * cmap(b.value(), b.rows(), b.cols()).transpose();
    if (out.requires_grad()) {
        push([out, a, b]() mutable {
            if (!out.has_grad()) return;
            auto go = cmap(out.grad_view(), out.rows(), out.cols());
            if (a.requires_grad()) {
                map(a.grad(), a.rows(), a.cols()).noalias() += go * cmap(b.value(), b.rows(), b.cols());
            }
            if (b.requires_grad()) {
                map(b.grad(), b.rows(), b.cols()).noalias() += go.transpose() * cmap(a.value(), a.rows(), a.cols());
            }
        });
    }
    return out;
}

Tensor Graph::transpose(const Tensor& a) {
    Tensor out = make_output(a.cols(), a.rows(), {&a});
    map(out.value(), a.cols(), a.rows()) = cmap(a.value(), a.rows(), a.cols()).transpose();
    if (out.requires_grad()) {
        push([out, a]() mutable {
            if (!out.has_grad()) return;
            map(a.grad(), a.rows(), a.cols()) += cmap(out.grad_view(), out.rows(), out.cols()).transpose();
        });
    }
    return out;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = make_output(a.rows(), a.cols(), {&a, &b});
    auto o = out.value();
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
    if (out.requires_grad()) {
        push([out, a, b]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad_view();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = make_output(a.rows(), a.cols(), {&a, &b});
    auto o = out.value();
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
    if (out.requires_grad()) {
        push([out, a, b]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad_view();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = make_output(a.rows(), a.cols(), {&a, &b});
    auto o = out.value();
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
    if (out.requires_grad()) {
        push([out, a, b]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad_view();
            if (a.requires_grad()) {
                auto ga = a.grad();
                auto bv = b.value();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                auto av = a.value();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        });
    }
    return out;
}

Tensor Graph::scale(const Tensor& a, double s) {
    Tensor out = make_output(a.rows(), a.cols(), {&a});
    auto o = out.value();
    auto av = a.value();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * s;
    if (out.requires_grad()) {
        push([out, a, s]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad_view();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        });
    }
    return out;
}

Tensor Graph::add_scalar(const Tensor& a, double s) {
    Tensor out = make_output(a.rows(), a.cols(), {&a});
    auto o = out.value();
    auto av = a.value();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + s;
    if (out.requires_grad()) {
        push([out, a]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad_view();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return out;
}

Tensor Graph::add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw std::invalid_argument("add_row: row must be 1xN matching the tensor width");
    }
    Tensor out = make_output(a.rows(), a.cols(), {&a, &row});
    const std::size_t n = a.cols();
    auto o = out.value();
    auto av = a.value();
    auto rv = row.value();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) o[r * n + c] = av[r * n + c] + rv[c];
    }
    if (out.requires_grad()) {
        push([out, a, row]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad_view();
            const std::size_t n = a.cols();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (row.requires_grad()) {
                auto gr = row.grad();
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (std::size_t c = 0; c < n; ++c) gr[c] += g[r * n + c];
                }
            }
        });
    }
    return out;
}

Tensor Graph::broadcast_rows(const Tensor& row, std::size_t rows) {
    if (row.rows() != 1) {
        throw std::invalid_argument("broadcast_rows: input must be a single row");
    }
    Tensor out = make_output(rows, row.cols(), {&row});
    const std::size_t n = row.cols();
    auto o = out.value();
    auto rv = row.value();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(rv.begin(), rv.end(), o.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    if (out.requires_grad()) {
        push([out, row, rows]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad_view();
            auto gr = row.grad();
            const std::size_t n = row.cols();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < n; ++c) gr[c] += g[r * n + c];
            }
        });
    }
    return out;
}

namespace {

template <class Fwd, class Deriv>
Tensor unary(Graph& g, const Tensor& a, Tensor out, std::vector<std::function<void()>>* sink, Fwd fwd,
             Deriv deriv) {
    auto o = out.value();
    auto av = a.value();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i]);
    (void)g;
    if (out.requires_grad()) {
        sink->push_back([out, a, deriv]() mutable {
            if (!out.has_grad()) return;
            auto go = out.grad_view();
            auto ga = a.grad();
            auto av = a.value();
            auto ov = out.value();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * deriv(av[i], ov[i]);
        });
    }
    return out;
}

}  // namespace

Tensor Graph::relu(const Tensor& a) {
    return unary(*this, a, make_output(a.rows(), a.cols(), {&a}), &tape_,
                 [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Graph::tanh(const Tensor& a) {
    return unary(*this, a, make_output(a.rows(), a.cols(), {&a}), &tape_,
                 [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor Graph::softplus(const Tensor& a) {
    return unary(*this, a, make_output(a.rows(), a.cols(), {&a}), &tape_, softplus_value,
                 [](double x, double) { return sigmoid(x); });
}

Tensor Graph::exp(const Tensor& a) {
    return unary(*this, a, make_output(a.rows(), a.cols(), {&a}), &tape_,
                 [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor Graph::log(const Tensor& a) {
    return unary(*this, a, make_output(a.rows(), a.cols(), {&a}), &tape_,
                 [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor Graph::square(const Tensor& a) {
    return unary(*this, a, make_output(a.rows(), a.cols(), {&a}), &tape_,
                 [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor Graph::wrap_angle(const Tensor& a) {
    return unary(*this, a, make_output(a.rows(), a.cols(), {&a}), &tape_,
                 [](double x) { return pushpomdp::wrap_angle(x); }, [](double, double) { return 1.0; });
}

Tensor Graph::softmax_rows(const Tensor& a) {
    Tensor out = make_output(a.rows(), a.cols(), {&a});
    const std::size_t n = a.cols();
    auto o = out.value();
    auto av = a.value();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double mx = av[r * n];
        for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, av[r * n + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            o[r * n + c] = std::exp(av[r * n + c] - mx);
            z += o[r * n + c];
        }
        for (std::size_t c = 0; c < n; ++c) o[r * n + c] /= z;
    }
    if (out.requires_grad()) {
        push([out, a]() mutable {
            if (!out.has_grad()) return;
            const std::size_t n = a.cols();
            auto go = out.grad_view();
            auto y = out.value();
            auto ga = a.grad();
            for (std::size_t r = 0; r < a.rows(); ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < n; ++c) dot += go[r * n + c] * y[r * n + c];
                for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += y[r * n + c] * (go[r * n + c] - dot);
            }
        });
    }
    return out;
}

Tensor Graph::slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
    if (start + count > a.cols()) {
        throw std::invalid_argument("slice_cols: range exceeds tensor width");
    }
    Tensor out = make_output(a.rows(), count, {&a});
    auto o = out.value();
    auto av = a.value();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < count; ++c) o[r * count + c] = av[r * a.cols() + start + c];
    }
    if (out.requires_grad()) {
        push([out, a, start, count]() mutable {
            if (!out.has_grad()) return;
            auto go = out.grad_view();
            auto ga = a.grad();
            for (std::size_t r = 0; r < a.rows(); ++r) {
                for (std::size_t c = 0; c < count; ++c) ga[r * a.cols() + start + c] += go[r * count + c];
            }
        });
    }
    return out;
}

Tensor Graph::slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
    if (start + count > a.rows()) {
        throw std::invalid_argument("slice_rows: range exceeds tensor height");
    }
    Tensor out = make_output(count, a.cols(), {&a});
    auto o = out.value();
    auto av = a.value();
    const std::size_t n = a.cols();
    std::copy(av.begin() + static_cast<std::ptrdiff_t>(start * n),
              av.begin() + static_cast<std::ptrdiff_t>((start + count) * n), o.begin());
    if (out.requires_grad()) {
        push([out, a, start]() mutable {
            if (!out.has_grad()) return;
            auto go = out.grad_view();
            auto ga = a.grad();
            const std::size_t off = start * a.cols();
            for (std::size_t i = 0; i < go.size(); ++i) ga[off + i] += go[i];
        });
    }
    return out;
}

Tensor Graph::concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: nothing to concatenate");
    }
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    bool needs = false;
    for (const Tensor& p : parts) {
        if (p.rows() != rows) {
            throw std::invalid_argument("concat_cols: row counts differ");
        }
        cols += p.cols();
        needs = needs || p.requires_grad();
    }
    Tensor out(rows, cols, 0.0, record_ && needs);
    auto o = out.value();
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        auto pv = p.value();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < p.cols(); ++c) o[r * cols + off + c] = pv[r * p.cols() + c];
        }
        off += p.cols();
    }
    if (out.requires_grad()) {
        push([out, parts]() mutable {
            if (!out.has_grad()) return;
            auto go = out.grad_view();
            const std::size_t cols = out.cols();
            std::size_t off = 0;
            for (Tensor p : parts) {
                if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (std::size_t r = 0; r < p.rows(); ++r) {
                        for (std::size_t c = 0; c < p.cols(); ++c) gp[r * p.cols() + c] += go[r * cols + off + c];
                    }
                }
                off += p.cols();
            }
        });
    }
    return out;
}

Tensor Graph::concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows: nothing to concatenate");
    }
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    bool needs = false;
    for (const Tensor& p : parts) {
        if (p.cols() != cols) {
            throw std::invalid_argument("concat_rows: column counts differ");
        }
        rows += p.rows();
        needs = needs || p.requires_grad();
    }
    Tensor out(rows, cols, 0.0, record_ && needs);
    auto o = out.value();
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        auto pv = p.value();
        std::copy(pv.begin(), pv.end(), o.begin() + static_cast<std::ptrdiff_t>(off));
        off += pv.size();
    }
    if (out.requires_grad()) {
        push([out, parts]() mutable {
            if (!out.has_grad()) return;
            auto go = out.grad_view();
            std::size_t off = 0;
            for (Tensor p : parts) {
                if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[off + i];
                }
                off += p.size();
            }
        });
    }
    return out;
}

Tensor Graph::mean_rows(const Tensor& a) {
    if (a.rows() == 0) {
        throw std::invalid_argument("mean_rows: empty tensor");
    }
    Tensor out = make_output(1, a.cols(), {&a});
    const std::size_t n = a.cols();
    const double inv = 1.0 / static_cast<double>(a.rows());
    auto o = out.value();
    auto av = a.value();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) o[c] += av[r * n + c];
    }
    for (std::size_t c = 0; c < n; ++c) o[c] *= inv;
    if (out.requires_grad()) {
        push([out, a, inv]() mutable {
            if (!out.has_grad()) return;
            const std::size_t n = a.cols();
            auto go = out.grad_view();
            auto ga = a.grad();
            for (std::size_t r = 0; r < a.rows(); ++r) {
                for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += go[c] * inv;
            }
        });
    }
    return out;
}

Tensor Graph::sum(const Tensor& a) {
    Tensor out = make_output(1, 1, {&a});
    double s = 0.0;
    for (double v : a.value()) s += v;
    out.value()[0] = s;
    if (out.requires_grad()) {
        push([out, a]() mutable {
            if (!out.has_grad()) return;
            const double g = out.grad_view()[0];
            for (double& ga : a.grad()) ga += g;
        });
    }
    return out;
}

Tensor Graph::gaussian_logpdf(const Tensor& mean, const Tensor& std, const Tensor& x,
                              const std::vector<bool>& wrapped_cols) {
    require_same_shape(mean, std, "gaussian_logpdf");
    require_same_shape(mean, x, "gaussian_logpdf");
    const std::size_t n = mean.cols();
    auto residual = [wrapped_cols, n](double xv, double mv, std::size_t idx) {
        const double r = xv - mv;
        const std::size_t c = idx % n;
        return c < wrapped_cols.size() && wrapped_cols[c] ? pushpomdp::wrap_angle(r) : r;
    };
    Tensor out = make_output(1, 1, {&mean, &std, &x});
    auto mv = mean.value();
    auto sv = std.value();
    auto xv = x.value();
    double total = 0.0;
    for (std::size_t i = 0; i < mv.size(); ++i) {
        const double r = residual(xv[i], mv[i], i);
        total += -kHalfLogTwoPi - std::log(sv[i]) - r * r / (2.0 * sv[i] * sv[i]);
    }
    out.value()[0] = total;
    if (out.requires_grad()) {
        push([out, mean, std, x, residual]() mutable {
            if (!out.has_grad()) return;
            const double g = out.grad_view()[0];
            auto mv = mean.value();
            auto sv = std.value();
            auto xv = x.value();
            for (std::size_t i = 0; i < mv.size(); ++i) {
                const double r = residual(xv[i], mv[i], i);
                const double s2 = sv[i] * sv[i];
                if (mean.requires_grad()) mean.grad()[i] += g * r / s2;
                if (x.requires_grad()) x.grad()[i] -= g * r / s2;
                if (std.requires_grad()) std.grad()[i] += g * (-1.0 / sv[i] + r * r / (s2 * sv[i]));
            }
        });
    }
    return out;
}

Tensor Graph::kl_diag(const Tensor& m1, const Tensor& s1, const Tensor& m2, const Tensor& s2) {
    require_same_shape(m1, s1, "kl_diag");
    require_same_shape(m1, m2, "kl_diag");
    require_same_shape(m1, s2, "kl_diag");
    Tensor out = make_output(1, 1, {&m1, &s1, &m2, &s2});
    double total = 0.0;
    {
        auto a = m1.value();
        auto sa = s1.value();
        auto b = m2.value();
        auto sb = s2.value();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            total += std::log(sb[i] / sa[i]) + (sa[i] * sa[i] + d * d) / (2.0 * sb[i] * sb[i]) - 0.5;
        }
    }
    out.value()[0] = total;
    if (out.requires_grad()) {
        push([out, m1, s1, m2, s2]() mutable {
            if (!out.has_grad()) return;
            const double g = out.grad_view()[0];
            auto a = m1.value();
            auto sa = s1.value();
            auto b = m2.value();
            auto sb = s2.value();
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = a[i] - b[i];
                const double sb2 = sb[i] * sb[i];
                if (m1.requires_grad()) m1.grad()[i] += g * d / sb2;
                if (m2.requires_grad()) m2.grad()[i] -= g * d / sb2;
                if (s1.requires_grad()) s1.grad()[i] += g * (-1.0 / sa[i] + sa[i] / sb2);
                if (s2.requires_grad()) s2.grad()[i] += g * (1.0 / sb[i] - (sa[i] * sa[i] + d * d) / (sb2 * sb[i]));
            }
        });
    }
    return out;
}

void Graph::backward(Tensor& loss) {
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar, got " + std::to_string(loss.rows()) + "x" +
                                    std::to_string(loss.cols()));
    }
    if (!loss.requires_grad()) {
        return;
    }
    loss.grad()[0] += 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        (*it)();
    }
    tape_.clear();
}

}  // namespace pushpomdp::ad
