#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domremedy/dom.hpp"

namespace domremedy {

enum class Namespace { Html, Svg, MathMl };

std::string_view to_string(Namespace ns);
Namespace namespace_from_string(std::string_view name);

// The element whose children a fragment is parsed as (or serialized for).
struct FragmentContext {
  std::string name = "body";
  Namespace ns = Namespace::Html;
  // annotation-xml whose encoding is text/html or application/xhtml+xml
  bool annotation_html = false;
};

// Lenient HTML parsing: malformed markup is repaired, never rejected. Invalid
// UTF-8 is replaced with U+FFFD and noted in DomDocument::warnings.
// Throws Error(EmptyDocument) for empty input.
DomDocument parse_html(std::string_view input, std::optional<std::string> base_url = std::nullopt);

std::vector<DomNode> parse_fragment(std::string_view input, const FragmentContext& context = {});

std::string serialize_html(const DomDocument& doc);
// `parent` describes the element the node(s) sit under; it decides namespaces,
// void elements and whether text is escaped.
std::string serialize_node(const DomNode& node, const FragmentContext& parent = {});
std::string serialize_nodes(std::span<const DomNode> nodes, const FragmentContext& parent = {});

bool is_void_element(std::string_view tag_name);
bool is_raw_text_element(std::string_view tag_name);

// Context for the children of `element`, given the context `element` sits in.
FragmentContext child_context(const FragmentContext& parent, const DomNode& element);
// Context for the children of the node at `path` (root is the html element).
FragmentContext fragment_context_at(const DomNode& root, const TreePath& path);

std::string decode_character_references(std::string_view raw, bool in_attribute);

}  // namespace domremedy
