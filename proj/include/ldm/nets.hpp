#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ldm/tensor.hpp"

namespace ldm {

enum class Activation { Relu, Tanh };
enum class OutputMap { Identity, L2Normalize, Softmax };
enum class InitScheme { UniformFanIn, OrthogonalLinear };

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

/// z = x W^T (+ bias). When volume_preserving is on, callers renormalize
/// |det W| to 1 after each optimizer step (see renormalize_volume).
struct LinearEncoder {
    Tensor w;     // [d_out, d_in]
    Tensor bias;  // undefined when constructed without bias

    LinearEncoder() = default;
    LinearEncoder(int64_t d_out, int64_t d_in, bool with_bias = false);

    int64_t in_dim() const { return w.dim(1); }
    int64_t out_dim() const { return w.dim(0); }
    Tensor forward(const Tensor& x) const;
    NamedParams named_params(const std::string& prefix = "enc") const;
    /// W <- W / |det W|^(1/d); requires square W.
    void renormalize_volume();
};

struct Mlp {
    struct Layer {
        Tensor w;  // [in, out], input-major
        Tensor b;  // [out]
    };
    std::vector<Layer> layers;
    Activation activation = Activation::Relu;
    OutputMap output_map = OutputMap::Identity;

    Mlp() = default;
    Mlp(int64_t in, const std::vector<int64_t>& hidden, int64_t out, Activation act,
        OutputMap out_map = OutputMap::Identity);

    int64_t in_dim() const { return layers.front().w.dim(0); }
    int64_t out_dim() const { return layers.back().w.dim(1); }
    Tensor forward(const Tensor& x) const;
    NamedParams named_params(const std::string& prefix = "mlp") const;
};

/// Single gated recurrent cell (GRU-style) with an MLP readout head and a
/// learned initial hidden state. Prediction at step t sees inputs strictly
/// before t; prediction at t=0 comes from the initial state alone.
struct Rnn {
    int64_t in_dim = 0;
    int64_t hidden_dim = 0;
    Tensor wu, uu, bu;  // update gate, weights [in,hidden] / [hidden,hidden]
    Tensor wr, ur, br;  // reset gate
    Tensor wc, uc, bc;  // candidate
    Tensor h0;          // [hidden]
    Mlp head;

    Rnn() = default;
    Rnn(int64_t in, int64_t hidden, const std::vector<int64_t>& head_hidden, int64_t out);

    /// One-step-ahead predictions for each t in [0, T); input z_seq[t] is [b, d].
    std::vector<Tensor> forward_seq(std::span<const Tensor> z_seq) const;
    NamedParams named_params(const std::string& prefix = "rnn") const;
};

Tensor forward_encoder(const LinearEncoder& enc, const Tensor& x);
Tensor forward_encoder(const Mlp& enc, const Tensor& x);
std::vector<Tensor> forward_recurrent(const Rnn& pred, std::span<const Tensor> z_seq);

void init_params(LinearEncoder& net, uint64_t seed, InitScheme scheme);
void init_params(Mlp& net, uint64_t seed, InitScheme scheme = InitScheme::UniformFanIn);
void init_params(Rnn& net, uint64_t seed, InitScheme scheme = InitScheme::UniformFanIn);

/// Rows divided by their euclidean norm; rows must be nonzero.
Tensor l2_normalize_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

}  // namespace ldm
