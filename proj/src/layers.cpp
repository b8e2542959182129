#include "trajaware/layers.hpp"

#include <cmath>

#include "trajaware/errors.hpp"

namespace trajaware::nn {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> data(fan_in * fan_out);
  for (double& v : data) v = u(rng);
  return Tensor::parameter({fan_in, fan_out}, std::move(data));
}

Tensor zeros_param(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 0.0)); }

DenseParams DenseParams::init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {glorot(in, out, rng), zeros_param(out)};
}

void DenseParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || x.cols() != w.rows() || b.size() != w.cols())
    throw ShapeError("dense shape mismatch: x" + shape_string(x.shape()) + " W" +
                     shape_string(w.shape()) + " b" + shape_string(b.shape()));
  return add_row(matmul(x, w), b);
}

GraphSageLayerParams GraphSageLayerParams::init(std::size_t in, std::size_t out,
                                                std::mt19937_64& rng) {
  return {glorot(in, out, rng), glorot(in, out, rng), zeros_param(out)};
}

void GraphSageLayerParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".w_self", w_self);
  out.emplace_back(prefix + ".w_neigh", w_neigh);
  out.emplace_back(prefix + ".bias", bias);
}

Tensor graphsage_layer(const Tensor& features, const std::vector<std::vector<int>>& neighbours,
                       const GraphSageLayerParams& p, bool apply_relu) {
  if (features.shape().size() != 2 || neighbours.size() != features.rows())
    throw ShapeError("graphsage_layer: features " + shape_string(features.shape()) + " vs " +
                     std::to_string(neighbours.size()) + " adjacency rows");
  if (features.cols() != p.w_self.rows() || features.cols() != p.w_neigh.rows())
    throw ShapeError("graphsage_layer: feature width does not match the layer");
  const Tensor agg = neighbour_mean(features, neighbours);
  Tensor out = add_row(add(matmul(features, p.w_self), matmul(agg, p.w_neigh)), p.bias);
  return apply_relu ? relu(out) : out;
}

Tensor graphsage_layer(const Tensor& features, const std::vector<bool>& adjacency,
                       const GraphSageLayerParams& p, bool apply_relu) {
  const std::size_t n = features.rows();
  if (adjacency.size() != n * n) throw ShapeError("graphsage_layer: adjacency is not n x n");
  std::vector<std::vector<int>> nb(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (adjacency[i * n + j]) {
        if (!adjacency[j * n + i] || i == j)
          throw ShapeError("graphsage_layer: adjacency must be symmetric with an empty diagonal");
        nb[i].push_back(static_cast<int>(j));
      }
  return graphsage_layer(features, nb, p, apply_relu);
}

CrossAttentionParams CrossAttentionParams::init(std::size_t d_in, std::size_t d_h,
                                                std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || d_h % heads != 0) throw ParameterError("d_h must be divisible by the head count");
  return {glorot(d_in, d_h, rng), glorot(d_in, d_h, rng), glorot(d_in, d_h, rng), d_h, heads};
}

void CrossAttentionParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".w_q", w_q);
  out.emplace_back(prefix + ".w_k", w_k);
  out.emplace_back(prefix + ".w_v", w_v);
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.shape().size() != 2 || begin > end || end > x.cols())
    throw ShapeError("slice_cols out of range");
  const std::size_t n = x.rows(), d = x.cols(), w = end - begin;
  std::vector<double> out(n * w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.at(i * d + begin + j);
  return make_result({n, w}, std::move(out), {x}, [n, d, w, begin](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) p.grad[i * d + begin + j] += o.grad[i * w + j];
  });
}

namespace {
void check_attention_shapes(const Tensor& s, const Tensor& s_ctx, const CrossAttentionParams& p) {
  if (s.shape().size() != 2 || s_ctx.shape().size() != 2 || s.rows() == 0 || s_ctx.rows() == 0)
    throw ShapeError("cross_attention needs non-empty matrices");
  if (s.cols() != s_ctx.cols() || s.cols() != p.w_q.rows() || s.cols() != p.w_k.rows() ||
      s.cols() != p.w_v.rows())
    throw ShapeError("cross_attention input width mismatch: S" + shape_string(s.shape()) +
                     " S_ctx" + shape_string(s_ctx.shape()) + " W_q" + shape_string(p.w_q.shape()));
  if (p.w_q.cols() != p.d_h || p.w_k.cols() != p.d_h || p.w_v.cols() != p.d_h)
    throw ShapeError("cross_attention projections must share d_h");
}
}  // namespace

Tensor attention_weights(const Tensor& s, const Tensor& s_ctx, const CrossAttentionParams& p) {
  check_attention_shapes(s, s_ctx, p);
  const Tensor q = matmul(s, p.w_q);
  const Tensor k = matmul(s_ctx, p.w_k);
  return softmax_rows(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(p.d_h))));
}

Tensor cross_attention(const Tensor& s, const Tensor& s_ctx, const CrossAttentionParams& p) {
  check_attention_shapes(s, s_ctx, p);
  const Tensor q = matmul(s, p.w_q);
  const Tensor k = matmul(s_ctx, p.w_k);
  const Tensor v = matmul(s_ctx, p.w_v);
  if (p.heads <= 1) {
    const Tensor a = softmax_rows(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(p.d_h))));
    return matmul(a, v);
  }
  const std::size_t width = p.d_h / p.heads;
  Tensor out;
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t b = h * width, e = b + width;
    const Tensor a = softmax_rows(scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)),
                                        1.0 / std::sqrt(static_cast<double>(width))));
    const Tensor o = matmul(a, slice_cols(v, b, e));
    out = out.defined() ? concat_cols(out, o) : o;
  }
  return out;
}

GruParams GruParams::init(std::size_t input, std::size_t hidden, std::mt19937_64& rng) {
  GruParams p;
  p.input = input;
  p.hidden = hidden;
  p.w_xr = glorot(input, hidden, rng);
  p.w_hr = glorot(hidden, hidden, rng);
  p.b_r = zeros_param(hidden);
  p.w_xz = glorot(input, hidden, rng);
  p.w_hz = glorot(hidden, hidden, rng);
  p.b_z = zeros_param(hidden);
  p.w_xn = glorot(input, hidden, rng);
  p.w_hn = glorot(hidden, hidden, rng);
  p.b_xn = zeros_param(hidden);
  p.b_hn = zeros_param(hidden);
  return p;
}

GruParams GruParams::zeros(std::size_t input, std::size_t hidden) {
  auto z = [](std::size_t r, std::size_t c) {
    return Tensor::parameter({r, c}, std::vector<double>(r * c, 0.0));
  };
  GruParams p;
  p.input = input;
  p.hidden = hidden;
  p.w_xr = z(input, hidden);
  p.w_hr = z(hidden, hidden);
  p.b_r = zeros_param(hidden);
  p.w_xz = z(input, hidden);
  p.w_hz = z(hidden, hidden);
  p.b_z = zeros_param(hidden);
  p.w_xn = z(input, hidden);
  p.w_hn = z(hidden, hidden);
  p.b_xn = zeros_param(hidden);
  p.b_hn = zeros_param(hidden);
  return p;
}

void GruParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".w_xr", w_xr);
  out.emplace_back(prefix + ".w_hr", w_hr);
  out.emplace_back(prefix + ".b_r", b_r);
  out.emplace_back(prefix + ".w_xz", w_xz);
  out.emplace_back(prefix + ".w_hz", w_hz);
  out.emplace_back(prefix + ".b_z", b_z);
  out.emplace_back(prefix + ".w_xn", w_xn);
  out.emplace_back(prefix + ".w_hn", w_hn);
  out.emplace_back(prefix + ".b_xn", b_xn);
  out.emplace_back(prefix + ".b_hn", b_hn);
}

Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& p) {
  if (x.shape().size() != 2 || h.shape().size() != 2 || x.cols() != p.input ||
      h.cols() != p.hidden || x.rows() != h.rows())
    throw ShapeError("gru_step shape mismatch: x" + shape_string(x.shape()) + " h" +
                     shape_string(h.shape()) + " for input " + std::to_string(p.input) +
                     ", hidden " + std::to_string(p.hidden));
  const Tensor r = sigmoid(add_row(add(matmul(x, p.w_xr), matmul(h, p.w_hr)), p.b_r));
  const Tensor z = sigmoid(add_row(add(matmul(x, p.w_xz), matmul(h, p.w_hz)), p.b_z));
  const Tensor n = tanh(add(add_row(matmul(x, p.w_xn), p.b_xn), mul(r, add_row(matmul(h, p.w_hn), p.b_hn))));
  return add(mul(one_minus(z), n), mul(z, h));
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& p : params_) {
    const auto& g = p.node().grad;
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Node& node = params_[k].node();
    if (node.grad.size() != node.data.size()) continue;
    for (std::size_t i = 0; i < node.data.size(); ++i) {
      const double g = node.grad[i] * clip;
      // Lazy update: untouched entries keep their value and moments.
      if (g == 0.0) continue;
      m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * g;
      v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * g * g;
      node.data[i] -= config_.learning_rate * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + config_.epsilon);
    }
  }
  zero_grad();
  return norm;
}

std::vector<Tensor> tensors_of(const NamedParams& named) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

void copy_values(const NamedParams& from, const NamedParams& to) {
  if (from.size() != to.size()) throw ShapeError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].second.shape() != to[i].second.shape())
      throw ShapeError("copy_values: shape mismatch for " + from[i].first);
    auto src = from[i].second.data();
    std::copy(src.begin(), src.end(), to[i].second.node().data.begin());
  }
}

}  // namespace trajaware::nn
