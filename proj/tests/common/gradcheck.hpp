#pragma once

// Central finite-difference gradient checks over the autodiff core, shared
// by the unit tests and the acceptance harness.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "trajaware/layers.hpp"
#include "trajaware/road_world.hpp"
#include "trajaware/traj_predict.hpp"

namespace trajaware::gradcheck {

struct Result {
  double worst_rel = 0.0;
  std::string where;
  bool ok(double tol = 1e-4) const { return worst_rel < tol; }
};

/// Compares backward() against central differences for every element of
/// every input. `loss` must rebuild the graph from the inputs on each call.
inline Result check(std::vector<nn::Tensor>& inputs,
                    const std::function<nn::Tensor(const std::vector<nn::Tensor>&)>& loss,
                    double eps = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  nn::backward(loss(inputs));
  Result r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = inputs[k].grad();
    auto data = inputs[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      double plus = 0.0, minus = 0.0;
      {
        nn::NoGradGuard g;
        data[i] = keep + eps;
        plus = loss(inputs).item();
        data[i] = keep - eps;
        minus = loss(inputs).item();
      }
      data[i] = keep;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > r.worst_rel) {
        r.worst_rel = rel;
        r.where = "input " + std::to_string(k) + " element " + std::to_string(i);
      }
    }
  }
  return r;
}

inline nn::Tensor uniform(nn::Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(nn::element_count(shape));
  for (auto& x : v) x = u(rng);
  return nn::Tensor::from(std::move(shape), std::move(v), grad);
}

/// Weights that turn any output into a generic scalar loss.
inline std::vector<double> loss_weights(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = u(rng);
  return w;
}

inline std::vector<std::vector<int>> random_neighbours(std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(0.4);
  std::vector<std::vector<int>> nb(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) {
        nb[i].push_back(static_cast<int>(j));
        nb[j].push_back(static_cast<int>(i));
      }
  for (auto& l : nb) std::sort(l.begin(), l.end());
  return nb;
}

// One check per layer family, each for a given seed.

inline Result dense_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<nn::Tensor> in{uniform({4, 5}, rng), uniform({5, 3}, rng), uniform({3}, rng)};
  const auto w = loss_weights(12, rng);
  return check(in, [&](const auto& t) { return nn::weighted_sum(nn::dense(t[0], t[1], t[2]), w); });
}

inline Result softmax_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<nn::Tensor> in{uniform({3, 6}, rng)};
  const auto w = loss_weights(18, rng);
  return check(in, [&](const auto& t) { return nn::weighted_sum(nn::softmax_rows(t[0]), w); });
}

inline Result graphsage_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto nb = random_neighbours(6, rng);
  std::vector<nn::Tensor> in{uniform({6, 4}, rng), uniform({4, 3}, rng), uniform({4, 3}, rng),
                             uniform({3}, rng)};
  const auto w = loss_weights(18, rng);
  return check(in, [&](const auto& t) {
    nn::GraphSageLayerParams p{t[1], t[2], t[3]};
    return nn::weighted_sum(nn::graphsage_layer(t[0], nb, p, true), w);
  });
}

inline Result attention_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<nn::Tensor> in{uniform({3, 4}, rng), uniform({5, 4}, rng), uniform({4, 4}, rng),
                             uniform({4, 4}, rng), uniform({4, 4}, rng)};
  const auto w = loss_weights(12, rng);
  return check(in, [&](const auto& t) {
    nn::CrossAttentionParams p{t[2], t[3], t[4], 4, 1};
    return nn::weighted_sum(nn::cross_attention(t[0], t[1], p), w);
  });
}

/// Three unrolled GRU steps over every gate parameter and the initial state.
inline Result gru_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t in_dim = 3, hid = 4;
  std::vector<nn::Tensor> in{uniform({1, hid}, rng)};
  for (int g = 0; g < 3; ++g) {
    in.push_back(uniform({in_dim, hid}, rng));
    in.push_back(uniform({hid, hid}, rng));
    in.push_back(uniform({hid}, rng));
  }
  in.push_back(uniform({hid}, rng));  // b_hn
  std::vector<nn::Tensor> xs;
  for (int s = 0; s < 3; ++s) xs.push_back(uniform({1, in_dim}, rng, false));
  const auto w = loss_weights(hid, rng);
  return check(in, [&](const auto& t) {
    nn::GruParams p;
    p.input = in_dim;
    p.hidden = hid;
    p.w_xr = t[1], p.w_hr = t[2], p.b_r = t[3];
    p.w_xz = t[4], p.w_hz = t[5], p.b_z = t[6];
    p.w_xn = t[7], p.w_hn = t[8], p.b_xn = t[9];
    p.b_hn = t[10];
    nn::Tensor h = t[0];
    for (const auto& x : xs) h = nn::gru_step(x, h, p);
    return nn::weighted_sum(h, w);
  });
}

/// Road projection: points kept in segment interiors, away from ties.
inline Result projection_case(std::uint64_t seed) {
  static const RoadNetwork map(
      {{0, {0, 0}}, {1, {150, 0}}, {2, {150, 150}}, {3, {300, 120}}},
      {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 3}, {3, 2}}, {0, 3}, {300, 150});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> along(0.2, 0.8), off(-10.0, 10.0);
  std::vector<double> pts;
  for (int i = 0; i < 3; ++i) {
    const auto& s = map.segments()[2 * (i % 3)];
    const Vec2 a = map.position(s.from), b = map.position(s.to);
    const Vec2 d = b - a;
    const Vec2 n{-d.y / norm(d), d.x / norm(d)};
    const Vec2 p = a + along(rng) * d + off(rng) * n;
    pts.push_back(p.x);
    pts.push_back(p.y);
  }
  std::vector<nn::Tensor> in{nn::Tensor::from({3, 2}, pts, true)};
  const auto w = loss_weights(6, rng);
  return check(in, [&](const auto& t) { return nn::weighted_sum(project_to_road(t[0], map), w); },
               1e-5);
}

}  // namespace trajaware::gradcheck
