#pragma once

// Brute-force references shared by the unit suites and the acceptance run.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "trajaware/comm_graph.hpp"
#include "trajaware/layers.hpp"
#include "trajaware/pruning.hpp"

namespace trajaware::oracles {

/// Smallest subset of the holder's neighbours covering its two-hop set, by
/// exhaustive search over sizes 0..limit; limit + 1 when none fits.
inline int minimum_cover_size(const CommGraph& g, int holder, int limit) {
  const auto two = two_hop_set(g, holder);
  std::vector<int> targets(two.begin(), two.end());
  if (targets.empty()) return 0;
  const auto& nb = g.neighbours[holder];
  std::vector<unsigned> mask(nb.size(), 0);
  for (std::size_t i = 0; i < nb.size(); ++i)
    for (std::size_t t = 0; t < targets.size(); ++t)
      if (g.connected(nb[i], targets[t])) mask[i] |= 1u << t;
  const unsigned full = (1u << targets.size()) - 1;
  const int d = static_cast<int>(nb.size());
  for (int size = 1; size <= std::min(limit, d); ++size) {
    std::vector<int> idx(size);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      unsigned m = 0;
      for (int i : idx) m |= mask[i];
      if (m == full) return size;
      int p = size - 1;
      while (p >= 0 && idx[p] == d - size + p) --p;
      if (p < 0) break;
      ++idx[p];
      for (int q = p + 1; q < size; ++q) idx[q] = idx[q - 1] + 1;
    }
  }
  return limit + 1;
}

inline bool covers_all(const CommGraph& g, int holder, const std::vector<int>& retained) {
  for (int t : two_hop_set(g, holder)) {
    bool hit = false;
    for (int r : retained) hit = hit || g.connected(r, t);
    if (!hit) return false;
  }
  return true;
}

/// Whole seconds until information relayed once per broadcast round, with f
/// rounds per second, has crossed n_hop links.
inline int relay_delay(int n_hop, int f) {
  int hops = 0;
  for (int second = 0;; ++second)
    for (int round = 0; round < f; ++round)
      if (++hops == n_hop) return second;
}

inline std::vector<double> values(const nn::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline nn::Tensor permute_rows(const nn::Tensor& x, const std::vector<int>& perm) {
  nn::NoGradGuard g;
  return nn::gather_rows(x, perm);
}

struct AttentionTrial {
  bool equivariant = false;     // exact
  double invariance_gap = 0.0;  // max abs difference
};

/// Random cross-attention instance checked against row permutations of the
/// queries and of the context.
inline AttentionTrial attention_trial(std::mt19937_64& rng, int trial) {
  nn::NoGradGuard no_grad;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto random = [&](std::size_t r, std::size_t c) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = u(rng);
    return nn::Tensor::from({r, c}, std::move(v));
  };
  const std::size_t n = 1 + rng() % 8, m = 1 + rng() % 12, d = 6;
  const auto s = random(n, d);
  const auto ctx = random(m, d);
  const auto p = nn::CrossAttentionParams::init(d, 8, 1 + trial % 2, rng);
  const auto out = nn::cross_attention(s, ctx, p);
  std::vector<int> ps(n), pc(m);
  std::iota(ps.begin(), ps.end(), 0);
  std::iota(pc.begin(), pc.end(), 0);
  std::shuffle(ps.begin(), ps.end(), rng);
  std::shuffle(pc.begin(), pc.end(), rng);
  AttentionTrial r;
  r.equivariant =
      values(nn::cross_attention(permute_rows(s, ps), ctx, p)) == values(permute_rows(out, ps));
  const auto inv = values(nn::cross_attention(s, permute_rows(ctx, pc), p));
  const auto base = values(out);
  for (std::size_t i = 0; i < base.size(); ++i)
    r.invariance_gap = std::max(r.invariance_gap, std::abs(inv[i] - base[i]));
  return r;
}

}  // namespace trajaware::oracles
