#include "domremedy/ted.hpp"

#include <unordered_set>

namespace domremedy::detail {

PostorderTree postorder(const DomNode& root) {
  PostorderTree tree;
  struct Frame {
    const DomNode* node;
    std::size_t next_child = 0;
    std::size_t first_leftmost = SIZE_MAX;
  };
  std::vector<Frame> stack{{&root}};
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_child < top.node->children.size()) {
      const DomNode* child = &top.node->children[top.next_child++];
      stack.push_back({child});
      continue;
    }
    std::size_t index = tree.nodes.size();
    std::size_t leftmost = top.first_leftmost == SIZE_MAX ? index : top.first_leftmost;
    tree.nodes.push_back(top.node);
    tree.leftmost.push_back(leftmost);
    stack.pop_back();
    if (!stack.empty() && stack.back().first_leftmost == SIZE_MAX) stack.back().first_leftmost = leftmost;
  }

  std::unordered_set<std::size_t> seen;
  for (std::size_t i = tree.nodes.size(); i-- > 0;) {
    if (seen.insert(tree.leftmost[i]).second) tree.keyroots.push_back(i);
  }
  std::reverse(tree.keyroots.begin(), tree.keyroots.end());
  return tree;
}

}  // namespace domremedy::detail
