#include "ldm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "ldm/linalg.hpp"

namespace ldm {

namespace detail {

Tape& Tape::current() {
    static thread_local Tape tape;
    return tape;
}

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

NodePtr make_node(std::vector<int64_t> shape, std::vector<double> value) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

bool taping(const Tensor& a) { return Tape::current().enabled() && a.requires_grad(); }

}  // namespace
}  // namespace detail

using detail::Node;
using detail::NodePtr;
using detail::Tape;

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return Tensor(detail::make_node(std::move(shape), std::vector<double>(size_t(n), 0.0)));
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return Tensor(detail::make_node(std::move(shape), std::vector<double>(size_t(n), v)));
}

Tensor Tensor::from_data(std::vector<double> data, std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != int64_t(data.size()))
        fail(ErrorKind::ShapeMismatch, "from_data: " + std::to_string(data.size()) + " values for shape of " +
                                           std::to_string(n));
    return Tensor(detail::make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::param(std::vector<double> data, std::vector<int64_t> shape) {
    Tensor t = from_data(std::move(data), std::move(shape));
    t.node()->requires_grad = true;
    return t;
}

void backward(const Tensor& loss, bool retain_tape) {
    if (!loss.defined() || loss.size() != 1) fail(ErrorKind::NotScalar, "backward: loss must be a scalar");
    if (!loss.requires_grad()) fail(ErrorKind::DisconnectedTape, "backward: loss is not connected to the tape");
    auto& tape = Tape::current();
    // Intermediate (record-output) grads are per-pass scratch; only leaves accumulate.
    for (const auto& rec : tape.records()) rec.out->grad.clear();
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    const auto& recs = tape.records();
    for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
        if (it->out->grad.empty()) continue;  // not an ancestor of the loss
        it->pull();
    }
    if (!retain_tape) tape.clear();
}

void clear_tape() { Tape::current().clear(); }
size_t tape_size() { return Tape::current().size(); }

namespace {

NodePtr out_like(const std::vector<int64_t>& shape, int64_t n) {
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value.resize(size_t(n));
    return node;
}

void mark_and_record(const NodePtr& out, bool any_grad, std::function<void()> pull) {
    if (any_grad && Tape::current().enabled()) {
        out->requires_grad = true;
        Tape::current().push(out, std::move(pull));
    }
}

// Broadcast contract: b must either match a exactly or (after stripping b's
// leading 1-dims) be a trailing suffix of a's shape. Keeps pullbacks auditable.
int64_t broadcast_block(const Tensor& a, const Tensor& b, const char* opname) {
    const auto& sa = a.shape();
    std::vector<int64_t> sb = b.shape();
    while (!sb.empty() && sb.front() == 1) sb.erase(sb.begin());
    if (sb.size() > sa.size()) fail(ErrorKind::ShapeMismatch, std::string(opname) + ": rhs rank exceeds lhs");
    size_t off = sa.size() - sb.size();
    for (size_t i = 0; i < sb.size(); ++i)
        if (sb[i] != sa[off + i])
            fail(ErrorKind::ShapeMismatch, std::string(opname) + ": rhs shape is not a trailing suffix of lhs");
    int64_t block = 1;
    for (int64_t d : sb) block *= d;
    return block;
}

// fval(x,y) forward; dfa/dfb give local partials as functions of (x, y, out).
template <typename F, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F fval, DA dfa, DB dfb) {
    int64_t block = broadcast_block(a, b, name);
    int64_t n = a.size();
    auto out = out_like(a.shape(), n);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out->value.data();
    for (int64_t i = 0; i < n; ++i) po[i] = fval(pa[i], pb[i % block]);

    bool ag = a.requires_grad(), bg = b.requires_grad();
    NodePtr na = a.node(), nb = b.node(), no = out;
    mark_and_record(out, ag || bg, [na, nb, no, block, ag, bg, dfa, dfb]() {
        int64_t n = no->size();
        const double* g = no->grad.data();
        const double* pa = na->value.data();
        const double* pb = nb->value.data();
        const double* po = no->value.data();
        if (ag) {
            na->ensure_grad();
            double* da = na->grad.data();
            for (int64_t i = 0; i < n; ++i) da[i] += g[i] * dfa(pa[i], pb[i % block], po[i]);
        }
        if (bg) {
            nb->ensure_grad();
            double* db = nb->grad.data();
            for (int64_t i = 0; i < n; ++i) db[i % block] += g[i] * dfb(pa[i], pb[i % block], po[i]);
        }
    });
    return Tensor(out);
}

template <typename F, typename D>
Tensor unary_op(const Tensor& a, const char* /*name*/, F fval, D dfa) {
    int64_t n = a.size();
    auto out = out_like(a.shape(), n);
    const double* pa = a.data().data();
    double* po = out->value.data();
    for (int64_t i = 0; i < n; ++i) po[i] = fval(pa[i]);

    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no, dfa]() {
        na->ensure_grad();
        int64_t n = no->size();
        const double* g = no->grad.data();
        const double* pa = na->value.data();
        const double* po = no->value.data();
        double* da = na->grad.data();
        for (int64_t i = 0; i < n; ++i) da[i] += g[i] * dfa(pa[i], po[i]);
    });
    return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (b.size() > a.size()) return add(b, a);
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (b.size() > a.size()) return mul(b, a);
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double y : b.data())
        if (y == 0.0) fail(ErrorKind::DomainError, "div: zero divisor");
    return binary_op(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(
        a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(
        a, "mul_scalar", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Tensor log(const Tensor& a) {
    for (double x : a.data())
        if (x <= 0.0) fail(ErrorKind::DomainError, "log: non-positive input");
    return unary_op(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        a, "tanh", [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor neg(const Tensor& a) {
    return unary_op(
        a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor square(const Tensor& a) {
    return unary_op(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
    for (double x : a.data())
        if (x < 0.0) fail(ErrorKind::DomainError, "sqrt: negative input");
    return unary_op(
        a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double o) { return 0.5 / o; });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        a, "abs", [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor lgamma(const Tensor& a) {
    return unary_op(
        a, "lgamma", [](double x) { return linalg::lanczos_lgamma(x); },
        [](double x, double) { return linalg::digamma(x); });
}

Tensor pow_scalar(const Tensor& a, double p) {
    if (p < 1.0) fail(ErrorKind::DomainError, "pow_scalar: p must be >= 1");
    for (double x : a.data())
        if (x < 0.0) fail(ErrorKind::DomainError, "pow_scalar: negative base");
    return unary_op(
        a, "pow_scalar", [p](double x) { return std::pow(x, p); },
        [p](double x, double) { return x > 0.0 ? p * std::pow(x, p - 1.0) : (p == 1.0 ? 1.0 : 0.0); });
}

Tensor stopgrad(const Tensor& a) {
    auto out = out_like(a.shape(), a.size());
    out->value = std::vector<double>(a.data().begin(), a.data().end());
    return Tensor(out);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) fail(ErrorKind::ShapeMismatch, "matmul: operands must be rank-2");
    int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) fail(ErrorKind::ShapeMismatch, "matmul: inner dims " + std::to_string(k) + " vs " + std::to_string(k2));
    auto out = out_like({m, n}, m * n);
    linalg::gemm_nn(a.data().data(), b.data().data(), out->value.data(), m, k, n);

    bool ag = a.requires_grad(), bg = b.requires_grad();
    NodePtr na = a.node(), nb = b.node(), no = out;
    mark_and_record(out, ag || bg, [na, nb, no, m, k, n, ag, bg]() {
        const double* g = no->grad.data();
        if (ag) {
            na->ensure_grad();
            linalg::gemm_nt_acc(g, nb->value.data(), na->grad.data(), m, n, k);  // dA += G*B^T
        }
        if (bg) {
            nb->ensure_grad();
            linalg::gemm_tn_acc(na->value.data(), g, nb->grad.data(), m, k, n);  // dB += A^T*G
        }
    });
    return Tensor(out);
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) fail(ErrorKind::ShapeMismatch, "transpose: rank-2 only");
    int64_t m = a.dim(0), n = a.dim(1);
    auto out = out_like({n, m}, m * n);
    const double* pa = a.data().data();
    double* po = out->value.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];

    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no, m, n]() {
        na->ensure_grad();
        const double* g = no->grad.data();
        double* da = na->grad.data();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
    });
    return Tensor(out);
}

std::pair<double, Tensor> slogdet(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) fail(ErrorKind::ShapeMismatch, "slogdet: square matrix required");
    int64_t n = a.dim(0);
    if (n > 512) fail(ErrorKind::ShapeMismatch, "slogdet: dimension > 512 unsupported");
    for (double x : a.data())
        if (!std::isfinite(x)) fail(ErrorKind::DomainError, "slogdet: non-finite entry");

    linalg::Lu lu = linalg::lu_decompose(a.data().data(), n);  // throws SingularMatrix
    double sign = lu.sign;
    double logabs = 0.0;
    for (int64_t i = 0; i < n; ++i) logabs += std::log(std::fabs(lu.lu[size_t(i * n + i)]));

    auto out = out_like({}, 1);
    out->value[0] = logabs;
    NodePtr na = a.node(), no = out;
    std::vector<double> aval(a.data().begin(), a.data().end());
    mark_and_record(out, a.requires_grad(), [na, no, aval = std::move(aval), n]() {
        na->ensure_grad();
        // d logabsdet / dA = inv(A)^T
        std::vector<double> inv = linalg::invert(aval.data(), n);
        double g = no->grad[0];
        double* da = na->grad.data();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) da[i * n + j] += g * inv[size_t(j * n + i)];
    });
    return {sign, Tensor(out)};
}

Tensor solve(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) fail(ErrorKind::ShapeMismatch, "solve: lhs must be square");
    Tensor brhs = b;
    bool vec_rhs = (b.rank() == 1);
    if (vec_rhs) brhs = reshape(b, {b.dim(0), 1});
    if (brhs.rank() != 2 || brhs.dim(0) != a.dim(0)) fail(ErrorKind::ShapeMismatch, "solve: rhs rows must match lhs");
    int64_t n = a.dim(0), m = brhs.dim(1);

    linalg::Lu lu = linalg::lu_decompose(a.data().data(), n);
    auto out = out_like({n, m}, n * m);
    linalg::lu_solve(lu, brhs.data().data(), out->value.data(), m);

    bool ag = a.requires_grad(), bg = brhs.requires_grad();
    NodePtr na = a.node(), nb = brhs.node(), no = out;
    std::vector<double> aval(a.data().begin(), a.data().end());
    mark_and_record(out, ag || bg, [na, nb, no, aval = std::move(aval), n, m, ag, bg]() {
        // X = A^-1 B;  dB = A^-T G;  dA = -dB X^T
        std::vector<double> at(static_cast<size_t>(n * n));
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) at[size_t(i * n + j)] = aval[size_t(j * n + i)];
        linalg::Lu lut = linalg::lu_decompose(at.data(), n);
        std::vector<double> gb(static_cast<size_t>(n * m));
        linalg::lu_solve(lut, no->grad.data(), gb.data(), m);
        if (bg) {
            nb->ensure_grad();
            for (size_t i = 0; i < gb.size(); ++i) nb->grad[i] += gb[i];
        }
        if (ag) {
            na->ensure_grad();
            // dA -= gb * X^T
            const double* x = no->value.data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int64_t c = 0; c < m; ++c) s += gb[size_t(i * m + c)] * x[size_t(j * m + c)];
                    na->grad[size_t(i * n + j)] -= s;
                }
        }
    });
    Tensor res(out);
    return vec_rhs ? reshape(res, {n}) : res;
}

Tensor sum(const Tensor& a) {
    auto out = out_like({}, 1);
    double s = 0.0;
    for (double x : a.data()) s += x;
    out->value[0] = s;
    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no]() {
        na->ensure_grad();
        double g = no->grad[0];
        for (double& d : na->grad) d += g;
    });
    return Tensor(out);
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / double(a.size())); }

Tensor rowwise_sum(const Tensor& a) {
    if (a.rank() != 2) fail(ErrorKind::ShapeMismatch, "rowwise_sum: rank-2 only");
    int64_t n = a.dim(0), d = a.dim(1);
    auto out = out_like({n}, n);
    const double* pa = a.data().data();
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += pa[i * d + j];
        out->value[size_t(i)] = s;
    }
    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no, n, d]() {
        na->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            double g = no->grad[size_t(i)];
            for (int64_t j = 0; j < d; ++j) na->grad[size_t(i * d + j)] += g;
        }
    });
    return Tensor(out);
}

Tensor colwise_sum(const Tensor& a) {
    if (a.rank() != 2) fail(ErrorKind::ShapeMismatch, "colwise_sum: rank-2 only");
    int64_t n = a.dim(0), d = a.dim(1);
    auto out = out_like({d}, d);
    const double* pa = a.data().data();
    for (int64_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) s += pa[i * d + j];
        out->value[size_t(j)] = s;
    }
    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no, n, d]() {
        na->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j) na->grad[size_t(i * d + j)] += no->grad[size_t(j)];
    });
    return Tensor(out);
}

Tensor colwise_mean(const Tensor& a) { return mul_scalar(colwise_sum(a), 1.0 / double(a.dim(0))); }

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != a.size()) fail(ErrorKind::ShapeMismatch, "reshape: size mismatch");
    auto out = out_like(shape, n);
    out->value = std::vector<double>(a.data().begin(), a.data().end());
    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no]() {
        na->ensure_grad();
        for (size_t i = 0; i < no->grad.size(); ++i) na->grad[i] += no->grad[i];
    });
    return Tensor(out);
}

Tensor scale_rows(const Tensor& a, const Tensor& v) {
    if (a.rank() != 2 || v.rank() != 1 || v.dim(0) != a.dim(0))
        fail(ErrorKind::ShapeMismatch, "scale_rows: need [n,d] and [n]");
    int64_t n = a.dim(0), d = a.dim(1);
    auto out = out_like(a.shape(), n * d);
    const double* pa = a.data().data();
    const double* pv = v.data().data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out->value[size_t(i * d + j)] = pa[i * d + j] * pv[i];

    bool ag = a.requires_grad(), vg = v.requires_grad();
    NodePtr na = a.node(), nv = v.node(), no = out;
    mark_and_record(out, ag || vg, [na, nv, no, n, d, ag, vg]() {
        const double* g = no->grad.data();
        if (ag) {
            na->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) na->grad[size_t(i * d + j)] += g[i * d + j] * nv->value[size_t(i)];
        }
        if (vg) {
            nv->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (int64_t j = 0; j < d; ++j) s += g[i * d + j] * na->value[size_t(i * d + j)];
                nv->grad[size_t(i)] += s;
            }
        }
    });
    return Tensor(out);
}

Tensor shift_rows(const Tensor& a, const Tensor& v) {
    if (a.rank() != 2 || v.rank() != 1 || v.dim(0) != a.dim(0))
        fail(ErrorKind::ShapeMismatch, "shift_rows: need [n,d] and [n]");
    int64_t n = a.dim(0), d = a.dim(1);
    auto out = out_like(a.shape(), n * d);
    const double* pa = a.data().data();
    const double* pv = v.data().data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out->value[size_t(i * d + j)] = pa[i * d + j] + pv[i];

    bool ag = a.requires_grad(), vg = v.requires_grad();
    NodePtr na = a.node(), nv = v.node(), no = out;
    mark_and_record(out, ag || vg, [na, nv, no, n, d, ag, vg]() {
        const double* g = no->grad.data();
        if (ag) {
            na->ensure_grad();
            for (int64_t i = 0; i < n * d; ++i) na->grad[size_t(i)] += g[i];
        }
        if (vg) {
            nv->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (int64_t j = 0; j < d; ++j) s += g[i * d + j];
                nv->grad[size_t(i)] += s;
            }
        }
    });
    return Tensor(out);
}

Tensor rowwise_max_const(const Tensor& a) {
    if (a.rank() != 2) fail(ErrorKind::ShapeMismatch, "rowwise_max_const: rank-2 only");
    int64_t n = a.dim(0), d = a.dim(1);
    auto out = out_like({n}, n);
    const double* pa = a.data().data();
    for (int64_t i = 0; i < n; ++i) {
        double m = pa[i * d];
        for (int64_t j = 1; j < d; ++j) m = std::max(m, pa[i * d + j]);
        out->value[size_t(i)] = m;
    }
    return Tensor(out);
}

Tensor logsumexp_rows(const Tensor& a) {
    Tensor m = rowwise_max_const(a);
    Tensor shifted = shift_rows(a, neg(m));
    return log(rowwise_sum(exp(shifted))) + m;
}

Tensor pairwise_sqdist(const Tensor& a) {
    if (a.rank() != 2) fail(ErrorKind::ShapeMismatch, "pairwise_sqdist: rank-2 only");
    int64_t n = a.dim(0), d = a.dim(1);
    auto out = out_like({n, n}, n * n);
    const double* pa = a.data().data();
    double* po = out->value.data();
#pragma omp parallel for schedule(static) if (n > 256)
    for (int64_t i = 0; i < n; ++i) {
        po[i * n + i] = 0.0;
        for (int64_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (int64_t c = 0; c < d; ++c) {
                double t = pa[i * d + c] - pa[j * d + c];
                s += t * t;
            }
            po[i * n + j] = s;
            po[j * n + i] = s;
        }
    }
    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no, n, d]() {
        na->ensure_grad();
        const double* g = no->grad.data();
        const double* pa = na->value.data();
        double* da = na->grad.data();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) {
                double gij = g[i * n + j];
                if (gij == 0.0) continue;
                for (int64_t c = 0; c < d; ++c) {
                    double t = 2.0 * (pa[i * d + c] - pa[j * d + c]) * gij;
                    da[i * d + c] += t;
                    da[j * d + c] -= t;
                }
            }
    });
    return Tensor(out);
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        fail(ErrorKind::ShapeMismatch, "concat_rows: column counts differ");
    int64_t na_ = a.dim(0), nb_ = b.dim(0), d = a.dim(1);
    auto out = out_like({na_ + nb_, d}, (na_ + nb_) * d);
    std::memcpy(out->value.data(), a.data().data(), size_t(na_ * d) * sizeof(double));
    std::memcpy(out->value.data() + na_ * d, b.data().data(), size_t(nb_ * d) * sizeof(double));

    bool ag = a.requires_grad(), bg = b.requires_grad();
    NodePtr pa = a.node(), pb = b.node(), no = out;
    mark_and_record(out, ag || bg, [pa, pb, no, na_, nb_, d, ag, bg]() {
        const double* g = no->grad.data();
        if (ag) {
            pa->ensure_grad();
            for (int64_t i = 0; i < na_ * d; ++i) pa->grad[size_t(i)] += g[i];
        }
        if (bg) {
            pb->ensure_grad();
            for (int64_t i = 0; i < nb_ * d; ++i) pb->grad[size_t(i)] += g[na_ * d + i];
        }
    });
    return Tensor(out);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
        fail(ErrorKind::ShapeMismatch, "concat_cols: row counts differ");
    int64_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
    auto out = out_like({n, da + db}, n * (da + db));
    const double* xa = a.data().data();
    const double* xb = b.data().data();
    for (int64_t i = 0; i < n; ++i) {
        std::memcpy(out->value.data() + i * (da + db), xa + i * da, size_t(da) * sizeof(double));
        std::memcpy(out->value.data() + i * (da + db) + da, xb + i * db, size_t(db) * sizeof(double));
    }
    bool ag = a.requires_grad(), bg = b.requires_grad();
    NodePtr pa = a.node(), pb = b.node(), no = out;
    mark_and_record(out, ag || bg, [pa, pb, no, n, da, db, ag, bg]() {
        const double* g = no->grad.data();
        if (ag) {
            pa->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < da; ++j) pa->grad[size_t(i * da + j)] += g[i * (da + db) + j];
        }
        if (bg) {
            pb->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < db; ++j) pb->grad[size_t(i * db + j)] += g[i * (da + db) + da + j];
        }
    });
    return Tensor(out);
}

Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& idx) {
    if (a.rank() != 2) fail(ErrorKind::ShapeMismatch, "gather_rows: rank-2 only");
    int64_t n = a.dim(0), d = a.dim(1), m = int64_t(idx.size());
    for (int64_t i : idx)
        if (i < 0 || i >= n) fail(ErrorKind::OutOfRange, "gather_rows: index out of range");
    auto out = out_like({m, d}, m * d);
    const double* pa = a.data().data();
    for (int64_t r = 0; r < m; ++r)
        std::memcpy(out->value.data() + r * d, pa + idx[size_t(r)] * d, size_t(d) * sizeof(double));

    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no, idx, d, m]() {
        na->ensure_grad();
        const double* g = no->grad.data();
        for (int64_t r = 0; r < m; ++r)
            for (int64_t j = 0; j < d; ++j) na->grad[size_t(idx[size_t(r)] * d + j)] += g[r * d + j];
    });
    return Tensor(out);
}

Tensor set_diag(const Tensor& a, double v) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) fail(ErrorKind::ShapeMismatch, "set_diag: square matrix required");
    int64_t n = a.dim(0);
    auto out = out_like(a.shape(), n * n);
    out->value = std::vector<double>(a.data().begin(), a.data().end());
    for (int64_t i = 0; i < n; ++i) out->value[size_t(i * n + i)] = v;

    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no, n]() {
        na->ensure_grad();
        const double* g = no->grad.data();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j)
                if (i != j) na->grad[size_t(i * n + j)] += g[i * n + j];
    });
    return Tensor(out);
}

Tensor diag_matrix(const Tensor& v) {
    if (v.rank() != 1) fail(ErrorKind::ShapeMismatch, "diag_matrix: rank-1 only");
    int64_t n = v.dim(0);
    auto out = out_like({n, n}, n * n);
    std::fill(out->value.begin(), out->value.end(), 0.0);
    for (int64_t i = 0; i < n; ++i) out->value[size_t(i * n + i)] = v.at(i);

    NodePtr nv = v.node(), no = out;
    mark_and_record(out, v.requires_grad(), [nv, no, n]() {
        nv->ensure_grad();
        for (int64_t i = 0; i < n; ++i) nv->grad[size_t(i)] += no->grad[size_t(i * n + i)];
    });
    return Tensor(out);
}

Tensor take_diag(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) fail(ErrorKind::ShapeMismatch, "take_diag: square matrix required");
    int64_t n = a.dim(0);
    auto out = out_like({n}, n);
    for (int64_t i = 0; i < n; ++i) out->value[size_t(i)] = a.at(i, i);

    NodePtr na = a.node(), no = out;
    mark_and_record(out, a.requires_grad(), [na, no, n]() {
        na->ensure_grad();
        for (int64_t i = 0; i < n; ++i) na->grad[size_t(i * n + i)] += no->grad[size_t(i)];
    });
    return Tensor(out);
}

Tensor sigmoid(const Tensor& a) { return mul_scalar(add_scalar(tanh(mul_scalar(a, 0.5)), 1.0), 0.5); }

Tensor softplus(const Tensor& a) {
    return unary_op(
        a, "softplus",
        [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) { return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Tensor trace(const Tensor& a) { return sum(take_diag(a)); }

}  // namespace ldm
