#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "ldm/common.hpp"

namespace ldm {

namespace detail {

struct Node {
    std::vector<int64_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on first backward touch
    bool requires_grad = false;

    int64_t size() const { return int64_t(value.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

using NodePtr = std::shared_ptr<Node>;

struct TapeRecord {
    NodePtr out;
    std::function<void()> pull;  // reads out->grad, accumulates into input grads
};

/// Eager define-by-run tape. One tape per thread; ops append a record whenever
/// any input participates in gradient tracking and taping is enabled.
class Tape {
public:
    static Tape& current();

    void push(NodePtr out, std::function<void()> pull) {
        records_.push_back({std::move(out), std::move(pull)});
    }
    bool enabled() const { return enabled_; }
    void set_enabled(bool on) { enabled_ = on; }
    size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }
    const std::vector<TapeRecord>& records() const { return records_; }

private:
    std::vector<TapeRecord> records_;
    bool enabled_ = true;
};

}  // namespace detail

/// Dense row-major float64 tensor with optional reverse-mode gradient.
/// Copies are shallow (shared storage); ops allocate fresh outputs.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor from_data(std::vector<double> data, std::vector<int64_t> shape);
    static Tensor scalar(double v) { return from_data({v}, {}); }
    /// Gradient-tracking leaf (network parameter or probed input).
    static Tensor param(std::vector<double> data, std::vector<int64_t> shape);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const { return node_->shape; }
    int rank() const { return int(node_->shape.size()); }
    int64_t dim(int i) const { return node_->shape[size_t(i)]; }
    int64_t size() const { return node_->size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    std::span<const double> data() const { return node_->value; }
    std::span<double> data_mut() { return node_->value; }
    std::span<const double> grad() const { return node_->grad; }

    double item() const {
        if (!node_ || node_->size() != 1) fail(ErrorKind::NotScalar, "item() on non-scalar tensor");
        return node_->value[0];
    }
    double at(int64_t i) const { return node_->value[size_t(i)]; }
    double at(int64_t i, int64_t j) const { return node_->value[size_t(i * node_->shape[1] + j)]; }

    void zero_grad() {
        if (node_) node_->grad.clear();
    }

    detail::NodePtr node() const { return node_; }
    explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

private:
    detail::NodePtr node_;
};

/// RAII switch for pure (untaped) evaluation.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::Tape::current().enabled()) { detail::Tape::current().set_enabled(false); }
    ~NoGradGuard() { detail::Tape::current().set_enabled(prev_); }

private:
    bool prev_;
};

/// Accumulates gradients of every tape ancestor of `loss`; `loss` must be scalar.
/// The tape is cleared afterwards unless retain_tape is set.
void backward(const Tensor& loss, bool retain_tape = false);
void clear_tape();
size_t tape_size();

// elementwise (b broadcast onto a when b's shape is a trailing suffix of a's)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor lgamma(const Tensor& a);
/// x^p elementwise for x >= 0, p >= 1.
Tensor pow_scalar(const Tensor& a, double p);

/// Forward identity; pullback is the zero map (no tape record).
Tensor stopgrad(const Tensor& a);

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// (sign, logabsdet); gradient of logabsdet w.r.t. a is inv(a)^T.
std::pair<double, Tensor> slogdet(const Tensor& a);
/// x with a*x = b; partial-pivot LU, pivot threshold 1e-12.
Tensor solve(const Tensor& a, const Tensor& b);

// reductions and reshaping
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor rowwise_sum(const Tensor& a);   // [n,d] -> [n]
Tensor colwise_sum(const Tensor& a);   // [n,d] -> [d]
Tensor colwise_mean(const Tensor& a);  // [n,d] -> [d]
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);

// row-indexed helpers ([n,d] with per-row scalars v[n])
Tensor scale_rows(const Tensor& a, const Tensor& v);
Tensor shift_rows(const Tensor& a, const Tensor& v);
/// Row maxima as a constant (no gradient); used for stable log-sum-exp shifts.
Tensor rowwise_max_const(const Tensor& a);
Tensor logsumexp_rows(const Tensor& a);  // [n,d] -> [n], stable

/// [n,d] -> [n,n] matrix of squared euclidean distances, computed from
/// coordinate differences (translation-invariant to roundoff).
Tensor pairwise_sqdist(const Tensor& a);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& idx);
/// Square matrix with diagonal overwritten by constant v (no gradient to diagonal).
Tensor set_diag(const Tensor& a, double v);
Tensor diag_matrix(const Tensor& v);  // [n] -> [n,n]
Tensor take_diag(const Tensor& a);    // [n,n] -> [n]

// composed conveniences
Tensor sigmoid(const Tensor& a);   // 0.5*(1+tanh(x/2))
Tensor softplus(const Tensor& a);  // relu(x) + log1p(exp(-|x|)), elementwise stable
Tensor trace(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return mul_scalar(a, 1.0 / s); }

}  // namespace ldm
