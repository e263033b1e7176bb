#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "domremedy/dom.hpp"
#include "domremedy/error.hpp"

namespace domremedy {

// Unit insert/delete cost; relabel is free only when labels_equal holds.
struct UnitCost {
  std::uint32_t insert(const DomNode&) const { return 1; }
  std::uint32_t remove(const DomNode&) const { return 1; }
  std::uint32_t relabel(const DomNode& a, const DomNode& b) const { return labels_equal(a, b) ? 0 : 1; }
};

// Zhang-Shasha keeps two n*m tables; above this many node pairs we refuse.
inline constexpr std::uint64_t kTedPairLimit = 20000ULL * 20000ULL;

namespace detail {

struct PostorderTree {
  std::vector<const DomNode*> nodes;
  std::vector<std::size_t> leftmost;  // postorder index of the leftmost leaf
  std::vector<std::size_t> keyroots;  // ascending
};

PostorderTree postorder(const DomNode& root);

}  // namespace detail

template <class Cost = UnitCost>
auto tree_edit_distance(const DomNode& a, const DomNode& b, const Cost& cost = {},
                        std::uint64_t pair_limit = kTedPairLimit) {
  using Value = decltype(cost.relabel(a, b));
  const detail::PostorderTree ta = detail::postorder(a);
  const detail::PostorderTree tb = detail::postorder(b);
  const std::size_t n = ta.nodes.size();
  const std::size_t m = tb.nodes.size();
  if (static_cast<std::uint64_t>(n) * m > pair_limit) {
    throw Error(ErrorCode::ResourceLimit, "tree edit distance over " + std::to_string(n) + "x" +
                                              std::to_string(m) + " nodes exceeds the pair limit");
  }

  std::vector<Value> tree_dist(n * m);
  std::vector<Value> forest((n + 1) * (m + 1));
  for (std::size_t kr1 : ta.keyroots) {
    for (std::size_t kr2 : tb.keyroots) {
      const std::size_t l1 = ta.leftmost[kr1];
      const std::size_t l2 = tb.leftmost[kr2];
      const std::size_t rows = kr1 - l1 + 2;
      const std::size_t cols = kr2 - l2 + 2;
      auto fd = [&](std::size_t x, std::size_t y) -> Value& { return forest[x * cols + y]; };
      fd(0, 0) = 0;
      for (std::size_t x = 1; x < rows; ++x) fd(x, 0) = fd(x - 1, 0) + cost.remove(*ta.nodes[l1 + x - 1]);
      for (std::size_t y = 1; y < cols; ++y) fd(0, y) = fd(0, y - 1) + cost.insert(*tb.nodes[l2 + y - 1]);
      for (std::size_t x = 1; x < rows; ++x) {
        const std::size_t i = l1 + x - 1;
        const DomNode& ni = *ta.nodes[i];
        const Value del = cost.remove(ni);
        for (std::size_t y = 1; y < cols; ++y) {
          const std::size_t j = l2 + y - 1;
          const DomNode& nj = *tb.nodes[j];
          Value best = std::min<Value>(fd(x - 1, y) + del, fd(x, y - 1) + cost.insert(nj));
          if (ta.leftmost[i] == l1 && tb.leftmost[j] == l2) {
            best = std::min<Value>(best, fd(x - 1, y - 1) + cost.relabel(ni, nj));
            fd(x, y) = best;
            tree_dist[i * m + j] = best;
          } else {
            const std::size_t p = ta.leftmost[i] - l1;
            const std::size_t q = tb.leftmost[j] - l2;
            fd(x, y) = std::min<Value>(best, fd(p, q) + tree_dist[i * m + j]);
          }
        }
      }
    }
  }
  return tree_dist[(n - 1) * m + (m - 1)];
}

}  // namespace domremedy
