#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace domremedy {

enum class NodeKind { Tag, Text, Comment, Script, Stylesheet };

std::string_view to_string(NodeKind kind);
NodeKind node_kind_from_string(std::string_view name);

// Script and Stylesheet are element nodes whose kind follows from the tag name.
NodeKind kind_for_tag(std::string_view tag_name);

using Attribute = std::pair<std::string, std::string>;
// Parse order is kept for serialization; equality treats attributes as a map.
using Attributes = std::vector<Attribute>;

struct DomNode {
  NodeKind kind = NodeKind::Tag;
  std::string name;
  Attributes attrs;
  // Text/comment payload, or the raw body of a script/style element.
  std::string text;
  std::vector<DomNode> children;

  static DomNode element(std::string name, Attributes attrs = {},
                         std::vector<DomNode> children = {});
  static DomNode text_node(std::string text);
  static DomNode comment(std::string text);

  bool is_element() const noexcept {
    return kind == NodeKind::Tag || kind == NodeKind::Script || kind == NodeKind::Stylesheet;
  }
  const std::string* attr(std::string_view attr_name) const;
  void set_attr(std::string_view attr_name, std::string value);
};

// Child indices from the root; the root itself is the empty path.
using TreePath = std::vector<std::size_t>;

std::string format_path(const TreePath& path);  // "/0/2/1", root is "/"
TreePath parse_path(std::string_view text);
const DomNode* node_at(const DomNode& root, const TreePath& path);
DomNode* node_at(DomNode& root, const TreePath& path);

struct DomDocument {
  DomNode root;
  std::optional<std::string> doctype;
  std::optional<std::string> source_url;
  std::string fetched_at;
  std::vector<std::string> warnings;
};

bool attributes_equal(const Attributes& a, const Attributes& b);
// Kind, name, attributes and text; children are not looked at.
bool labels_equal(const DomNode& a, const DomNode& b);
// Labels and children, recursively; nothing else.
bool tree_equal(const DomNode& a, const DomNode& b);

struct DepthStats {
  std::size_t max_depth = 0;
  std::size_t node_count = 0;
};

DepthStats depth_stats(const DomNode& root);
std::size_t node_count(const DomNode& root);

// Canonical JSON tree encoding: {"kind","name","attrs","text","children"}.
nlohmann::ordered_json to_json(const DomNode& node);
DomNode node_from_json(const nlohmann::ordered_json& value);
std::string canonical_json(const DomNode& node);

}  // namespace domremedy
