#include "domremedy/dom.hpp"

#include <algorithm>
#include <charconv>

#include "domremedy/error.hpp"

namespace domremedy {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Tag: return "tag";
    case NodeKind::Text: return "text";
    case NodeKind::Comment: return "comment";
    case NodeKind::Script: return "script";
    case NodeKind::Stylesheet: return "stylesheet";
  }
  return "tag";
}

NodeKind node_kind_from_string(std::string_view name) {
  if (name == "tag") return NodeKind::Tag;
  if (name == "text") return NodeKind::Text;
  if (name == "comment") return NodeKind::Comment;
  if (name == "script") return NodeKind::Script;
  if (name == "stylesheet") return NodeKind::Stylesheet;
  throw Error(ErrorCode::ReportParse, "unknown node kind '" + std::string(name) + "'");
}

NodeKind kind_for_tag(std::string_view tag_name) {
  if (tag_name == "script") return NodeKind::Script;
  if (tag_name == "style") return NodeKind::Stylesheet;
  return NodeKind::Tag;
}

DomNode DomNode::element(std::string name, Attributes attrs, std::vector<DomNode> children) {
  DomNode node;
  node.kind = kind_for_tag(name);
  node.name = std::move(name);
  node.attrs = std::move(attrs);
  node.children = std::move(children);
  return node;
}

DomNode DomNode::text_node(std::string text) {
  DomNode node;
  node.kind = NodeKind::Text;
  node.text = std::move(text);
  return node;
}

DomNode DomNode::comment(std::string text) {
  DomNode node;
  node.kind = NodeKind::Comment;
  node.text = std::move(text);
  return node;
}

const std::string* DomNode::attr(std::string_view attr_name) const {
  for (const auto& [key, value] : attrs) {
    if (key == attr_name) return &value;
  }
  return nullptr;
}

void DomNode::set_attr(std::string_view attr_name, std::string value) {
  for (auto& [key, existing] : attrs) {
    if (key == attr_name) {
      existing = std::move(value);
      return;
    }
  }
  attrs.emplace_back(std::string(attr_name), std::move(value));
}

std::string format_path(const TreePath& path) {
  if (path.empty()) return "/";
  std::string out;
  for (std::size_t index : path) {
    out += '/';
    out += std::to_string(index);
  }
  return out;
}

TreePath parse_path(std::string_view text) {
  TreePath path;
  if (text.empty() || text.front() != '/') {
    throw Error(ErrorCode::ReportParse, "tree path must start with '/': " + std::string(text));
  }
  std::size_t pos = 1;
  while (pos < text.size()) {
    std::size_t next = text.find('/', pos);
    if (next == std::string_view::npos) next = text.size();
    std::size_t value = 0;
    auto segment = text.substr(pos, next - pos);
    auto [ptr, ec] = std::from_chars(segment.data(), segment.data() + segment.size(), value);
    if (ec != std::errc{} || ptr != segment.data() + segment.size() || segment.empty()) {
      throw Error(ErrorCode::ReportParse, "malformed tree path: " + std::string(text));
    }
    path.push_back(value);
    pos = next + 1;
  }
  return path;
}

const DomNode* node_at(const DomNode& root, const TreePath& path) {
  const DomNode* current = &root;
  for (std::size_t index : path) {
    if (index >= current->children.size()) return nullptr;
    current = &current->children[index];
  }
  return current;
}

DomNode* node_at(DomNode& root, const TreePath& path) {
  return const_cast<DomNode*>(node_at(static_cast<const DomNode&>(root), path));
}

bool attributes_equal(const Attributes& a, const Attributes& b) {
  if (a.size() != b.size()) return false;
  if (a == b) return true;
  auto sorted_a = a;
  auto sorted_b = b;
  std::sort(sorted_a.begin(), sorted_a.end());
  std::sort(sorted_b.begin(), sorted_b.end());
  return sorted_a == sorted_b;
}

bool labels_equal(const DomNode& a, const DomNode& b) {
  return a.kind == b.kind && a.name == b.name && a.text == b.text &&
         attributes_equal(a.attrs, b.attrs);
}

bool tree_equal(const DomNode& a, const DomNode& b) {
  if (!labels_equal(a, b) || a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!tree_equal(a.children[i], b.children[i])) return false;
  }
  return true;
}

namespace {

void accumulate_depth(const DomNode& node, std::size_t depth, DepthStats& stats) {
  stats.node_count += 1;
  stats.max_depth = std::max(stats.max_depth, depth);
  for (const auto& child : node.children) accumulate_depth(child, depth + 1, stats);
}

}  // namespace

DepthStats depth_stats(const DomNode& root) {
  DepthStats stats;
  accumulate_depth(root, 0, stats);
  return stats;
}

std::size_t node_count(const DomNode& root) { return depth_stats(root).node_count; }

nlohmann::ordered_json to_json(const DomNode& node) {
  nlohmann::ordered_json out;
  out["kind"] = to_string(node.kind);
  out["name"] = node.name;
  auto attrs = nlohmann::ordered_json::object();
  for (const auto& [key, value] : node.attrs) attrs[key] = value;
  out["attrs"] = std::move(attrs);
  out["text"] = node.text;
  auto children = nlohmann::ordered_json::array();
  for (const auto& child : node.children) children.push_back(to_json(child));
  out["children"] = std::move(children);
  return out;
}

DomNode node_from_json(const nlohmann::ordered_json& value) {
  if (!value.is_object()) throw Error(ErrorCode::ReportParse, "tree node must be a JSON object");
  DomNode node;
  node.kind = node_kind_from_string(value.at("kind").get<std::string>());
  node.name = value.value("name", std::string{});
  node.text = value.value("text", std::string{});
  if (auto it = value.find("attrs"); it != value.end()) {
    for (const auto& [key, attr_value] : it->items()) {
      node.attrs.emplace_back(key, attr_value.get<std::string>());
    }
  }
  if (auto it = value.find("children"); it != value.end()) {
    for (const auto& child : *it) node.children.push_back(node_from_json(child));
  }
  return node;
}

std::string canonical_json(const DomNode& node) {
  return to_json(node).dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

}  // namespace domremedy
