#include "ldm/nets.hpp"

#include <cmath>

#include "ldm/common.hpp"
#include "ldm/linalg.hpp"

namespace ldm {

namespace {

Tensor make_weight(int64_t rows, int64_t cols) { return Tensor::param(std::vector<double>(size_t(rows * cols), 0.0), {rows, cols}); }
Tensor make_vector(int64_t n) { return Tensor::param(std::vector<double>(size_t(n), 0.0), {n}); }

void fill_uniform_fan_in(Tensor& t, int64_t fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(double(fan_in));
    for (double& x : t.data_mut()) x = rng.uniform(-bound, bound);
}

// Modified Gram-Schmidt rows of a gaussian matrix; rows come out orthonormal.
void fill_orthogonal(Tensor& t, Rng& rng) {
    int64_t r = t.dim(0), c = t.dim(1);
    if (r > c) fail(ErrorKind::ShapeMismatch, "orthogonal init needs rows <= cols");
    std::vector<double> m(static_cast<size_t>(r * c));
    for (auto& x : m) x = rng.normal();
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (int64_t p = 0; p < c; ++p) dot += m[size_t(i * c + p)] * m[size_t(j * c + p)];
            for (int64_t p = 0; p < c; ++p) m[size_t(i * c + p)] -= dot * m[size_t(j * c + p)];
        }
        double norm = 0.0;
        for (int64_t p = 0; p < c; ++p) norm += m[size_t(i * c + p)] * m[size_t(i * c + p)];
        norm = std::sqrt(norm);
        for (int64_t p = 0; p < c; ++p) m[size_t(i * c + p)] /= norm;
    }
    auto dst = t.data_mut();
    for (size_t i = 0; i < m.size(); ++i) dst[i] = m[i];
}

Tensor apply_output_map(const Tensor& h, OutputMap map) {
    switch (map) {
        case OutputMap::Identity: return h;
        case OutputMap::L2Normalize: return l2_normalize_rows(h);
        case OutputMap::Softmax: return softmax_rows(h);
    }
    fail(ErrorKind::ConfigInvalid, "unknown output map");
}

}  // namespace

Tensor l2_normalize_rows(const Tensor& x) {
    Tensor norms = sqrt(rowwise_sum(square(x)));
    for (double n : norms.data())
        if (n < 1e-300) fail(ErrorKind::DomainError, "l2_normalize_rows: zero row");
    return scale_rows(x, div(Tensor::full({x.dim(0)}, 1.0), norms));
}

Tensor softmax_rows(const Tensor& x) {
    Tensor e = exp(shift_rows(x, neg(rowwise_max_const(x))));
    return scale_rows(e, div(Tensor::full({x.dim(0)}, 1.0), rowwise_sum(e)));
}

LinearEncoder::LinearEncoder(int64_t d_out, int64_t d_in, bool with_bias) {
    w = make_weight(d_out, d_in);
    if (with_bias) bias = make_vector(d_out);
}

Tensor LinearEncoder::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_dim()) fail(ErrorKind::ShapeMismatch, "linear encoder: input dim mismatch");
    Tensor z = matmul(x, transpose(w));
    if (bias.defined()) z = add(z, bias);
    return z;
}

NamedParams LinearEncoder::named_params(const std::string& prefix) const {
    NamedParams p{{prefix + ".w", w}};
    if (bias.defined()) p.emplace_back(prefix + ".bias", bias);
    return p;
}

void LinearEncoder::renormalize_volume() {
    if (w.dim(0) != w.dim(1)) fail(ErrorKind::ShapeMismatch, "volume renormalization needs square W");
    int64_t n = w.dim(0);
    NoGradGuard off;
    auto lu = linalg::lu_decompose(w.data().data(), n);
    double logabs = 0.0;
    for (int64_t i = 0; i < n; ++i) logabs += std::log(std::fabs(lu.lu[size_t(i * n + i)]));
    double scale = std::exp(-logabs / double(n));
    for (double& x : w.data_mut()) x *= scale;
}

Mlp::Mlp(int64_t in, const std::vector<int64_t>& hidden, int64_t out, Activation act, OutputMap out_map)
    : activation(act), output_map(out_map) {
    int64_t prev = in;
    for (int64_t h : hidden) {
        layers.push_back({make_weight(prev, h), make_vector(h)});
        prev = h;
    }
    layers.push_back({make_weight(prev, out), make_vector(out)});
}

Tensor Mlp::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_dim()) fail(ErrorKind::ShapeMismatch, "mlp: input dim mismatch");
    Tensor h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        h = add(matmul(h, layers[i].w), layers[i].b);
        if (i + 1 < layers.size()) h = activation == Activation::Relu ? relu(h) : tanh(h);
    }
    return apply_output_map(h, output_map);
}

NamedParams Mlp::named_params(const std::string& prefix) const {
    NamedParams p;
    for (size_t i = 0; i < layers.size(); ++i) {
        p.emplace_back(prefix + ".w" + std::to_string(i), layers[i].w);
        p.emplace_back(prefix + ".b" + std::to_string(i), layers[i].b);
    }
    return p;
}

Rnn::Rnn(int64_t in, int64_t hidden, const std::vector<int64_t>& head_hidden, int64_t out)
    : in_dim(in), hidden_dim(hidden) {
    wu = make_weight(in, hidden);
    uu = make_weight(hidden, hidden);
    bu = make_vector(hidden);
    wr = make_weight(in, hidden);
    ur = make_weight(hidden, hidden);
    br = make_vector(hidden);
    wc = make_weight(in, hidden);
    uc = make_weight(hidden, hidden);
    bc = make_vector(hidden);
    h0 = make_vector(hidden);
    head = Mlp(hidden, head_hidden, out, Activation::Relu, OutputMap::Identity);
}

std::vector<Tensor> Rnn::forward_seq(std::span<const Tensor> z_seq) const {
    if (z_seq.size() < 2) fail(ErrorKind::ShapeMismatch, "recurrent forward needs T >= 2");
    int64_t b = z_seq[0].dim(0);
    Tensor h = add(Tensor::zeros({b, hidden_dim}), h0);  // h0 tiled over the batch
    std::vector<Tensor> preds;
    preds.reserve(z_seq.size());
    preds.push_back(head.forward(h));
    for (size_t t = 1; t < z_seq.size(); ++t) {
        const Tensor& x = z_seq[t - 1];
        if (x.dim(1) != in_dim) fail(ErrorKind::ShapeMismatch, "recurrent forward: input dim mismatch");
        Tensor u = sigmoid(add(add(matmul(x, wu), matmul(h, uu)), bu));
        Tensor r = sigmoid(add(add(matmul(x, wr), matmul(h, ur)), br));
        Tensor c = tanh(add(add(matmul(x, wc), matmul(mul(r, h), uc)), bc));
        h = add(mul(u, h), mul(sub(Tensor::full({b, hidden_dim}, 1.0), u), c));
        preds.push_back(head.forward(h));
    }
    return preds;
}

NamedParams Rnn::named_params(const std::string& prefix) const {
    NamedParams p{{prefix + ".wu", wu}, {prefix + ".uu", uu}, {prefix + ".bu", bu},
                  {prefix + ".wr", wr}, {prefix + ".ur", ur}, {prefix + ".br", br},
                  {prefix + ".wc", wc}, {prefix + ".uc", uc}, {prefix + ".bc", bc},
                  {prefix + ".h0", h0}};
    auto hp = head.named_params(prefix + ".head");
    p.insert(p.end(), hp.begin(), hp.end());
    return p;
}

Tensor forward_encoder(const LinearEncoder& enc, const Tensor& x) { return enc.forward(x); }
Tensor forward_encoder(const Mlp& enc, const Tensor& x) { return enc.forward(x); }
std::vector<Tensor> forward_recurrent(const Rnn& pred, std::span<const Tensor> z_seq) {
    return pred.forward_seq(z_seq);
}

void init_params(LinearEncoder& net, uint64_t seed, InitScheme scheme) {
    Rng rng(seed);
    Rng wr = rng.fork("w");
    if (scheme == InitScheme::OrthogonalLinear) {
        fill_orthogonal(net.w, wr);
    } else {
        fill_uniform_fan_in(net.w, net.in_dim(), wr);
    }
    if (net.bias.defined())
        for (double& x : net.bias.data_mut()) x = 0.0;
}

void init_params(Mlp& net, uint64_t seed, InitScheme scheme) {
    if (scheme != InitScheme::UniformFanIn) fail(ErrorKind::ConfigInvalid, "mlp supports uniform_fan_in init only");
    Rng rng(seed);
    for (size_t i = 0; i < net.layers.size(); ++i) {
        Rng lr = rng.fork("layer" + std::to_string(i));
        fill_uniform_fan_in(net.layers[i].w, net.layers[i].w.dim(0), lr);
        for (double& x : net.layers[i].b.data_mut()) x = 0.0;
    }
}

void init_params(Rnn& net, uint64_t seed, InitScheme scheme) {
    if (scheme != InitScheme::UniformFanIn) fail(ErrorKind::ConfigInvalid, "rnn supports uniform_fan_in init only");
    Rng rng(seed);
    auto fill = [&](Tensor& t, int64_t fan, const char* tag) {
        Rng r = rng.fork(tag);
        fill_uniform_fan_in(t, fan, r);
    };
    fill(net.wu, net.in_dim, "wu");
    fill(net.uu, net.hidden_dim, "uu");
    fill(net.wr, net.in_dim, "wr");
    fill(net.ur, net.hidden_dim, "ur");
    fill(net.wc, net.in_dim, "wc");
    fill(net.uc, net.hidden_dim, "uc");
    for (Tensor* b : {&net.bu, &net.br, &net.bc, &net.h0})
        for (double& x : b->data_mut()) x = 0.0;
    init_params(net.head, rng.fork("head").next_u64(), InitScheme::UniformFanIn);
}

}  // namespace ldm
