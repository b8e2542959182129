#pragma once

// Layer forwards built from tensor primitives: dense, GraphSAGE (mean
// aggregator), scaled dot-product cross-attention and a GRU cell, plus
// parameter initialisation and an Adam optimiser.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trajaware/tensor.hpp"

namespace trajaware::nn {

/// Named parameters in a fixed order; the order defines checkpoint layout.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
Tensor zeros_param(std::size_t n);

struct DenseParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static DenseParams init(std::size_t in, std::size_t out, std::mt19937_64& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// x W + b
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
inline Tensor dense(const Tensor& x, const DenseParams& p) { return dense(x, p.weight, p.bias); }

struct GraphSageLayerParams {
  Tensor w_self;   // [d_in, d_out]
  Tensor w_neigh;  // [d_in, d_out]
  Tensor bias;     // [d_out]

  static GraphSageLayerParams init(std::size_t in, std::size_t out, std::mt19937_64& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct GraphSageParams {
  std::vector<GraphSageLayerParams> layers;
};

/// relu(x_i W_self + mean_{j ~ i}(x_j) W_neigh + b) for every node i.
Tensor graphsage_layer(const Tensor& features, const std::vector<std::vector<int>>& neighbours,
                       const GraphSageLayerParams& p, bool apply_relu = true);
/// Same, from a dense symmetric boolean adjacency (row-major n x n).
Tensor graphsage_layer(const Tensor& features, const std::vector<bool>& adjacency,
                       const GraphSageLayerParams& p, bool apply_relu = true);

struct CrossAttentionParams {
  Tensor w_q;  // [d_in, d_h]
  Tensor w_k;  // [d_in, d_h]
  Tensor w_v;  // [d_in, d_h]
  std::size_t d_h = 0;
  std::size_t heads = 1;

  static CrossAttentionParams init(std::size_t d_in, std::size_t d_h, std::size_t heads,
                                   std::mt19937_64& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// softmax(Q K^T / sqrt(d_head)) V with Q = S W_q, K = S_ctx W_k, V = S_ctx W_v.
/// With several heads the d_h columns are split evenly and re-concatenated.
Tensor cross_attention(const Tensor& s, const Tensor& s_ctx, const CrossAttentionParams& p);

/// Attention weights only (rows of the softmax), for inspection.
Tensor attention_weights(const Tensor& s, const Tensor& s_ctx, const CrossAttentionParams& p);

struct GruParams {
  std::size_t input = 0;
  std::size_t hidden = 0;
  Tensor w_xr, w_hr, b_r;  // reset gate
  Tensor w_xz, w_hz, b_z;  // update gate
  Tensor w_xn, w_hn, b_xn, b_hn;  // candidate

  static GruParams init(std::size_t input, std::size_t hidden, std::mt19937_64& rng);
  static GruParams zeros(std::size_t input, std::size_t hidden);
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// r = sig(x W_xr + h W_hr + b_r), z = sig(x W_xz + h W_hz + b_z),
/// n = tanh(x W_xn + b_xn + r * (h W_hn + b_hn)), h' = (1 - z) * n + z * h.
/// x is [1, input] (or [b, input]); h matches in rows.
Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& p);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

// --- optimisation -------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;  // <= 0 disables clipping
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  /// One step from the accumulated gradients, then zeroes them. Returns the
  /// pre-clip global gradient norm.
  double step();
  void zero_grad();
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

std::vector<Tensor> tensors_of(const NamedParams& named);
/// Deep copy of parameter values into fresh leaves (for target networks).
void copy_values(const NamedParams& from, const NamedParams& to);

}  // namespace trajaware::nn
