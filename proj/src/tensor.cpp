#include "trajaware/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <unordered_set>

#include "trajaware/errors.hpp"
#include "trajaware/kernels.hpp"

namespace trajaware::nn {

namespace {
thread_local bool g_grad_enabled = true;

void check_finite(const std::vector<double>& v) {
  // x - x is 0 for finite x and NaN otherwise; the sum vectorises.
  double acc = 0.0;
  for (double x : v) acc += x - x;
  if (acc != 0.0) throw NumericError("non-finite value produced by a tensor operation");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

bool is_matrix(const Tensor& t) { return t.shape().size() == 2; }

Node& parent(Node& out, std::size_t i) { return *out.parents[i]; }

// Parent grad buffer, or nullptr when that parent does not need one.
double* grad_of(Node& out, std::size_t i) {
  Node& p = parent(out, i);
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}
}  // namespace

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = element_count(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (element_count(shape) != data.size())
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape));
  check_finite(data);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() on a tensor with " + std::to_string(size()) + " elements");
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.size() == node_->data.size()) return node_->grad;
  return std::vector<double>(node_->data.size(), 0.0);
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(Node& out)> backward_fn) {
  check_finite(data);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->is_leaf = false;
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw UsageError("backward() needs a scalar loss, got shape " +
                                         shape_string(loss.shape()));
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->is_leaf)
      n->ensure_grad();
    else
      n->grad.assign(n->data.size(), 0.0);
  }
  loss.node().grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(is_matrix(a) && is_matrix(b) && a.cols() == b.rows(),
          "matmul shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    const double* ad = parent(o, 0).data.data();
    const double* bd = parent(o, 1).data.data();
    if (double* ga = grad_of(o, 0)) kernels::gemm_nt(o.grad.data(), bd, ga, m, n, k);
    if (double* gb = grad_of(o, 1)) kernels::gemm_tn(ad, o.grad.data(), gb, k, m, n);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(is_matrix(a) && is_matrix(b) && a.cols() == b.cols(),
          "matmul_nt shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()) +
              "^T");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    const double* ad = parent(o, 0).data.data();
    const double* bd = parent(o, 1).data.data();
    // dA = dC * B ; dB = dC^T * A
    if (double* ga = grad_of(o, 0)) kernels::gemm_nn(o.grad.data(), bd, ga, m, n, k);
    if (double* gb = grad_of(o, 1)) kernels::gemm_tn(o.grad.data(), ad, gb, n, m, k);
  });
}

namespace {
template <typename F, typename Ga, typename Gb>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, Ga da, Gb db) {
  require(a.shape() == b.shape(), std::string(name) + " shape mismatch " + shape_string(a.shape()) +
                                      " vs " + shape_string(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.at(i), b.at(i));
  return make_result(a.shape(), std::move(out), {a, b}, [da, db](Node& o) {
    const auto& ad = parent(o, 0).data;
    const auto& bd = parent(o, 1).data;
    if (double* ga = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * da(ad[i], bd[i]);
    if (double* gb = grad_of(o, 1))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * db(ad[i], bd[i]);
  });
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D d) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x.at(i));
  return make_result(x.shape(), std::move(out), {x}, [d](Node& o) {
    const auto& xd = parent(o, 0).data;
    if (double* gx = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * d(xd[i], o.data[i]);
  });
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require(is_matrix(x) && row.size() == x.cols(),
          "add_row shape mismatch " + shape_string(x.shape()) + " + " + shape_string(row.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += row.at(j);
  return make_result(x.shape(), std::move(out), {x, row}, [n, d](Node& o) {
    if (double* gx = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    if (double* gr = grad_of(o, 1))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gr[j] += o.grad[i * d + j];
  });
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor one_minus(const Tensor& x) {
  return unary(x, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax_rows(const Tensor& x) {
  require(is_matrix(x), "softmax_rows needs a matrix, got " + shape_string(x.shape()));
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data().data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += out[i * m + j] = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [n, m](Node& o) {
    double* gx = grad_of(o, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = o.data.data() + i * m;
      const double* gy = o.grad.data() + i * m;
      const double inner = kernels::scalar::dot(y, gy, m);
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += y[j] * (gy[j] - inner);
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {x}, [](Node& o) {
    if (double* gx = grad_of(o, 0))
      for (std::size_t i = 0; i < parent(o, 0).data.size(); ++i) gx[i] += o.grad[0];
  });
}

Tensor weighted_sum(const Tensor& x, std::span<const double> w) {
  require(w.size() == x.size(), "weighted_sum weight length mismatch");
  std::vector<double> weights(w.begin(), w.end());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.at(i) * weights[i];
  return make_result({1}, {s}, {x}, [weights = std::move(weights)](Node& o) {
    if (double* gx = grad_of(o, 0))
      for (std::size_t i = 0; i < weights.size(); ++i) gx[i] += o.grad[0] * weights[i];
  });
}

Tensor mean_squared(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  const double n = static_cast<double>(x.size());
  return make_result({1}, {s / n}, {x}, [n](Node& o) {
    const auto& xd = parent(o, 0).data;
    if (double* gx = grad_of(o, 0))
      for (std::size_t i = 0; i < xd.size(); ++i) gx[i] += o.grad[0] * 2.0 * xd[i] / n;
  });
}

Tensor gather_rows(const Tensor& x, std::span<const int> rows) {
  require(is_matrix(x), "gather_rows needs a matrix");
  const std::size_t d = x.cols();
  std::vector<int> idx(rows.begin(), rows.end());
  const std::size_t n = idx.size();
  std::vector<double> out(n * d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (idx[r] < 0) continue;
    require(static_cast<std::size_t>(idx[r]) < x.rows(), "gather_rows index out of range");
    std::copy_n(x.data().data() + idx[r] * d, d, out.data() + r * d);
  }
  return make_result({n, d}, std::move(out), {x}, [idx = std::move(idx), d](Node& o) {
    if (double* gx = grad_of(o, 0))
      for (std::size_t r = 0; r < idx.size(); ++r)
        if (idx[r] >= 0)
          for (std::size_t j = 0; j < d; ++j) gx[idx[r] * d + j] += o.grad[r * d + j];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require(is_matrix(a) && is_matrix(b) && a.rows() == b.rows(), "concat_cols row mismatch");
  const std::size_t n = a.rows(), da = a.cols(), db = b.cols();
  std::vector<double> out(n * (da + db));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * da, da, out.data() + i * (da + db));
    std::copy_n(b.data().data() + i * db, db, out.data() + i * (da + db) + da);
  }
  return make_result({n, da + db}, std::move(out), {a, b}, [n, da, db](Node& o) {
    if (double* ga = grad_of(o, 0))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < da; ++j) ga[i * da + j] += o.grad[i * (da + db) + j];
    if (double* gb = grad_of(o, 1))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < db; ++j) gb[i * db + j] += o.grad[i * (da + db) + da + j];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows needs at least one part");
  const std::size_t d = parts[0].cols();
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require(is_matrix(p) && p.cols() == d, "concat_rows column mismatch");
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t rows = out.size() / d;
  return make_result({rows, d}, std::move(out), {parts.begin(), parts.end()},
                     [offsets](Node& o) {
                       for (std::size_t k = 0; k < offsets.size(); ++k)
                         if (double* g = grad_of(o, k))
                           for (std::size_t i = 0; i < parent(o, k).data.size(); ++i)
                             g[i] += o.grad[offsets[k] + i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(element_count(shape) == x.size(),
          "reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& o) {
    if (double* gx = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
  });
}

Tensor element(const Tensor& x, std::size_t index) {
  require(index < x.size(), "element index out of range");
  return make_result({1}, {x.at(index)}, {x}, [index](Node& o) {
    if (double* gx = grad_of(o, 0)) gx[index] += o.grad[0];
  });
}

Tensor neighbour_mean(const Tensor& x, const std::vector<std::vector<int>>& neighbours) {
  require(is_matrix(x) && neighbours.size() == x.rows(), "neighbour_mean row mismatch");
  const std::size_t n = x.rows(), d = x.cols();
  const double* xd = x.data().data();
  // Summing neighbours in value order (not index order) makes the result
  // independent of node numbering bit-for-bit. Rank rows once, then sort
  // each neighbour list by rank; equal rows share a rank and add identically.
  std::vector<int> by_value(n);
  std::iota(by_value.begin(), by_value.end(), 0);
  std::sort(by_value.begin(), by_value.end(), [&](int a, int b) {
    return std::lexicographical_compare(xd + a * d, xd + (a + 1) * d, xd + b * d, xd + (b + 1) * d);
  });
  std::vector<int> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[by_value[r]] = static_cast<int>(r);

  auto lists = std::make_shared<std::vector<std::vector<int>>>(neighbours);
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& nb = (*lists)[i];
    if (nb.empty()) continue;
    std::sort(nb.begin(), nb.end(), [&](int a, int b) { return rank[a] < rank[b]; });
    double* row = out.data() + i * d;
    for (int j : nb) kernels::axpy(1.0, xd + j * d, row, d);
    const double inv = 1.0 / static_cast<double>(nb.size());
    for (std::size_t c = 0; c < d; ++c) row[c] *= inv;
  }
  return make_result({n, d}, std::move(out), {x}, [lists, d](Node& o) {
    double* gx = grad_of(o, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < lists->size(); ++i) {
      const auto& nb = (*lists)[i];
      if (nb.empty()) continue;
      const double inv = 1.0 / static_cast<double>(nb.size());
      for (int j : nb) kernels::axpy(inv, o.grad.data() + i * d, gx + j * d, d);
    }
  });
}

}  // namespace trajaware::nn
