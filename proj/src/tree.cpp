#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "iqa/error.hpp"
#include "iqa/models.hpp"
#include "iqa/rng.hpp"

namespace iqa::models {

double RegressionTree::predict(std::span<const double> x) const {
  int k = 0;
  while (!nodes[static_cast<std::size_t>(k)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(k)];
    k = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(k)].value;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].is_leaf()) {
      best = std::max(best, d[k]);
      continue;
    }
    d[static_cast<std::size_t>(nodes[k].left)] = d[k] + 1;
    d[static_cast<std::size_t>(nodes[k].right)] = d[k] + 1;
  }
  return best;
}

void RegressionTree::validate(std::size_t feature_count) const {
  if (nodes.empty()) throw Error("shape", "tree has no nodes");
  std::vector<int> parents(nodes.size(), 0);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& n = nodes[k];
    if (n.is_leaf()) {
      if (!std::isfinite(n.value)) throw Error("numeric", "tree leaf value is not finite");
      continue;
    }
    if (static_cast<std::size_t>(n.feature) >= feature_count)
      throw Error("shape", fmt::format("tree node {} splits on feature {} outside the schema", k, n.feature));
    if (!std::isfinite(n.threshold)) throw Error("numeric", "tree threshold is not finite");
    // Children always follow their parent in the array, which rules out cycles.
    for (int c : {n.left, n.right}) {
      if (c <= static_cast<int>(k) || c >= static_cast<int>(nodes.size()))
        throw Error("shape", fmt::format("tree node {} has invalid child {}", k, c));
      ++parents[static_cast<std::size_t>(c)];
    }
  }
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    if (parents[k] != 1) throw Error("shape", fmt::format("tree node {} is not reachable exactly once", k));
  }
}

RegressionTree fit_cart(const std::vector<std::vector<double>>& rows, std::span<const double> targets,
                        const CartParams& params, std::uint64_t seed) {
  const std::size_t n = rows.size();
  if (n == 0 || targets.size() != n) throw Error("shape", "CART needs matching non-empty rows and targets");
  if (params.max_depth < 0 || params.min_leaf < 1) throw Error("invalid_argument", "invalid CART parameters");
  const std::size_t p = rows.front().size();
  const std::size_t per_split =
      params.features_per_split <= 0 ? p : std::min<std::size_t>(p, static_cast<std::size_t>(params.features_per_split));
  Rng rng(seed);

  std::vector<std::vector<std::uint32_t>> sorted(p);
  for (std::size_t f = 0; f < p; ++f) {
    auto& idx = sorted[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return rows[a][f] < rows[b][f]; });
  }

  struct Stats {
    double sum = 0.0;
    double sumsq = 0.0;
    int count = 0;
  };
  RegressionTree tree;
  std::vector<Stats> stats(1);
  for (std::size_t i = 0; i < n; ++i) {
    stats[0].sum += targets[i];
    stats[0].sumsq += targets[i] * targets[i];
  }
  stats[0].count = static_cast<int>(n);
  tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, 0.0, static_cast<int>(n)});
  const double root_sse = std::max(0.0, stats[0].sumsq - stats[0].sum * stats[0].sum / static_cast<double>(n));
  const double min_gain = 1e-12 * (1.0 + root_sse);

  std::vector<int> node_of(n, 0);
  std::vector<int> frontier = {0};

  for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);

    const std::size_t m = frontier.size();
    std::vector<std::vector<char>> allowed;
    if (per_split < p) {
      allowed.assign(m, std::vector<char>(p, 0));
      std::vector<std::size_t> pool(p);
      for (std::size_t s = 0; s < m; ++s) {
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t k = 0; k < per_split; ++k) {
          std::swap(pool[k], pool[k + rng.index(p - k)]);
          allowed[s][pool[k]] = 1;
        }
      }
    }

    struct Best {
      double gain;
      int feature = -1;
      double threshold = 0.0;
    };
    std::vector<Best> best(m, Best{min_gain});
    std::vector<double> sum_left(m), last(m);
    std::vector<int> count_left(m);

    for (std::size_t f = 0; f < p; ++f) {
      std::fill(sum_left.begin(), sum_left.end(), 0.0);
      std::fill(count_left.begin(), count_left.end(), 0);
      for (std::uint32_t i : sorted[f]) {
        const int s = slot[static_cast<std::size_t>(node_of[i])];
        if (s < 0) continue;
        const auto us = static_cast<std::size_t>(s);
        if (!allowed.empty() && !allowed[us][f]) continue;
        const double v = rows[i][f];
        const int nl = count_left[us];
        if (nl > 0 && v > last[us]) {
          const Stats& st = stats[static_cast<std::size_t>(frontier[us])];
          const int nr = st.count - nl;
          if (nl >= params.min_leaf && nr >= params.min_leaf) {
            const double sl = sum_left[us];
            const double sr = st.sum - sl;
            const double gain = sl * sl / nl + sr * sr / nr - st.sum * st.sum / st.count;
            if (gain > best[us].gain) {
              double thr = 0.5 * (last[us] + v);
              if (!(thr > last[us])) thr = v;
              best[us] = {gain, static_cast<int>(f), thr};
            }
          }
        }
        sum_left[us] += targets[i];
        ++count_left[us];
        last[us] = v;
      }
    }

    std::vector<int> next;
    std::vector<int> left_of(m, -1);
    for (std::size_t s = 0; s < m; ++s) {
      if (best[s].feature < 0) continue;
      const auto k = static_cast<std::size_t>(frontier[s]);
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes[k].feature = best[s].feature;
      tree.nodes[k].threshold = best[s].threshold;
      tree.nodes[k].left = l;
      tree.nodes[k].right = l + 1;
      tree.nodes.push_back(TreeNode{});
      tree.nodes.push_back(TreeNode{});
      stats.resize(tree.nodes.size());
      left_of[s] = l;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int s = slot[static_cast<std::size_t>(node_of[i])];
      if (s < 0 || left_of[static_cast<std::size_t>(s)] < 0) continue;
      const auto& parent = tree.nodes[static_cast<std::size_t>(node_of[i])];
      const int child = rows[i][static_cast<std::size_t>(parent.feature)] < parent.threshold ? parent.left : parent.right;
      node_of[i] = child;
      auto& st = stats[static_cast<std::size_t>(child)];
      st.sum += targets[i];
      st.sumsq += targets[i] * targets[i];
      ++st.count;
    }
    for (std::size_t s = 0; s < m; ++s) {
      if (left_of[static_cast<std::size_t>(s)] < 0) continue;
      for (int c : {left_of[s], left_of[s] + 1}) {
        tree.nodes[static_cast<std::size_t>(c)].samples = stats[static_cast<std::size_t>(c)].count;
        if (stats[static_cast<std::size_t>(c)].count >= 2 * params.min_leaf) next.push_back(c);
      }
    }
    frontier = std::move(next);
  }

  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    const auto& st = stats[k];
    const double denom = params.leaf_rule == LeafRule::Shrunk ? st.count + params.l2_leaf : st.count;
    tree.nodes[k].value = denom > 0.0 ? st.sum / denom : 0.0;
  }
  return tree;
}

}  // namespace iqa::models
