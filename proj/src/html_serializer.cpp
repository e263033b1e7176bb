#include <string>

#include "domremedy/html.hpp"
#include "html_internal.hpp"

namespace domremedy {

namespace {

void escape(std::string& out, std::string_view text, bool attribute) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      // A raw CR would be folded into LF on the next parse.
      case '\r': out += "&#13;"; break;
      case '"':
        if (attribute) {
          out += "&quot;";
        } else {
          out += c;
        }
        break;
      case '\xC2':
        if (i + 1 < text.size() && text[i + 1] == '\xA0') {
          out += "&nbsp;";
          ++i;
        } else {
          out += c;
        }
        break;
      default: out += c;
    }
  }
}

class Serializer {
 public:
  std::string out;

  void node(const DomNode& n, const FragmentContext& parent) {
    if (stopped_) return;
    switch (n.kind) {
      case NodeKind::Text:
        if (parent.ns == Namespace::Html && is_raw_text_element(parent.name)) {
          out += n.text;
        } else {
          escape(out, n.text, false);
        }
        return;
      case NodeKind::Comment:
        out += "<!--";
        out += n.text;
        out += "-->";
        return;
      case NodeKind::Tag:
      case NodeKind::Script:
      case NodeKind::Stylesheet: element(n, parent); return;
    }
  }

 private:
  bool stopped_ = false;

  void element(const DomNode& n, const FragmentContext& parent) {
    FragmentContext ctx = child_context(parent, n);
    bool html = ctx.ns == Namespace::Html;
    out += '<';
    out += n.name;
    for (const auto& [name, value] : n.attrs) {
      out += ' ';
      out += name;
      out += "=\"";
      escape(out, value, true);
      out += '"';
    }
    out += '>';
    if (html && is_void_element(n.name)) return;
    if (n.kind == NodeKind::Script || n.kind == NodeKind::Stylesheet) {
      out += n.text;
    } else {
      if (html && (n.name == "pre" || n.name == "textarea" || n.name == "listing") && !n.children.empty() &&
          n.children.front().kind == NodeKind::Text && n.children.front().text.starts_with('\n')) {
        out += '\n';
      }
      for (const auto& child : n.children) node(child, ctx);
    }
    // Everything after <plaintext> is text to the parser, end tags included.
    if (html && n.name == "plaintext") stopped_ = true;
    if (stopped_) return;
    out += "</";
    out += n.name;
    out += '>';
  }
};

const FragmentContext kDocumentContext{"#document", Namespace::Html, false};

}  // namespace

std::string serialize_html(const DomDocument& doc) {
  Serializer s;
  if (doc.doctype) {
    s.out += "<!";
    s.out += *doc.doctype;
    s.out += '>';
  }
  s.node(doc.root, kDocumentContext);
  return std::move(s.out);
}

std::string serialize_node(const DomNode& node, const FragmentContext& parent) {
  Serializer s;
  s.node(node, parent);
  return std::move(s.out);
}

std::string serialize_nodes(std::span<const DomNode> nodes, const FragmentContext& parent) {
  Serializer s;
  for (const auto& n : nodes) s.node(n, parent);
  return std::move(s.out);
}

}  // namespace domremedy
