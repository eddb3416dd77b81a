#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <vector>

namespace pushpomdp::ad {

/// Cache-line aligned storage so vectorized kernels see the same alignment, and hence
/// the same summation order, on every run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
    template <class U>
    bool operator==(const AlignedAllocator<U>&) const { return true; }
};

/// Dense row-major matrix of doubles with an optional gradient buffer.
///
/// Copies share storage; a Tensor is a handle in the same sense as a framework
/// tensor. Scalars are 1x1 and row vectors 1xN.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0, bool requires_grad = false);

    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v) { return from(1, 1, {v}); }

    bool defined() const { return impl_ != nullptr; }
    std::size_t rows() const { return impl_->rows; }
    std::size_t cols() const { return impl_->cols; }
    std::size_t size() const { return impl_->rows * impl_->cols; }
    std::vector<std::size_t> shape() const { return {rows(), cols()}; }

    std::span<double> value() { return impl_->value; }
    std::span<const double> value() const { return impl_->value; }
    double& at(std::size_t r, std::size_t c) { return impl_->value[r * impl_->cols + c]; }
    double at(std::size_t r, std::size_t c) const { return impl_->value[r * impl_->cols + c]; }
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    /// Gradient buffer, allocated (zeroed) on first access.
    std::span<double> grad() const;
    std::span<const double> grad_view() const { return impl_->grad; }
    void zero_grad();

    bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

private:
    struct Impl {
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::vector<double, AlignedAllocator<double>> value;
        std::vector<double, AlignedAllocator<double>> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
};

/// Records operations in creation order (a valid topological order) and replays
/// their backward rules in reverse. One backward pass per graph.
class Graph {
public:
    explicit Graph(bool record = true) : record_(record) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return record_; }
    std::size_t node_count() const { return tape_.size(); }

    Tensor matmul(const Tensor& a, const Tensor& b);
    /// a * b^T without materializing the transpose.
    Tensor matmul_nt(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double s);
    Tensor add_scalar(const Tensor& a, double s);
    /// Adds a 1xN row to every row of an MxN tensor.
    Tensor add_row(const Tensor& a, const Tensor& row);
    Tensor broadcast_rows(const Tensor& row, std::size_t rows);

    Tensor relu(const Tensor& a);
    Tensor tanh(const Tensor& a);
    Tensor softplus(const Tensor& a);
    Tensor exp(const Tensor& a);
    Tensor log(const Tensor& a);
    Tensor square(const Tensor& a);
    /// Elementwise wrap into [-pi, pi); gradient passes through unchanged.
    Tensor wrap_angle(const Tensor& a);

    Tensor softmax_rows(const Tensor& a);
    Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
    Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
    Tensor concat_cols(const std::vector<Tensor>& parts);
    Tensor concat_rows(const std::vector<Tensor>& parts);
    Tensor mean_rows(const Tensor& a);
    Tensor sum(const Tensor& a);

    /// Sum over all entries of the diagonal-Gaussian log density of x.
    /// Columns flagged in `wrapped_cols` use the angle-wrapped residual.
    Tensor gaussian_logpdf(const Tensor& mean, const Tensor& std, const Tensor& x,
                           const std::vector<bool>& wrapped_cols = {});
    /// KL(N(m1, s1^2) || N(m2, s2^2)) summed over entries.
    Tensor kl_diag(const Tensor& m1, const Tensor& s1, const Tensor& m2, const Tensor& s2);

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule.
    /// Throws std::invalid_argument for a non-scalar loss.
    void backward(Tensor& loss);

private:
    Tensor make_output(std::size_t rows, std::size_t cols, std::initializer_list<const Tensor*> inputs);
    void push(std::function<void()> fn);

    bool record_;
    std::vector<std::function<void()>> tape_;
};

}  // namespace pushpomdp::ad
