#include <algorithm>
#include <deque>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "html_internal.hpp"

namespace domremedy {

namespace {

using Names = std::span<const std::string_view>;

bool one_of(std::string_view name, Names names) {
  return std::find(names.begin(), names.end(), name) != names.end();
}

bool one_of(std::string_view name, std::initializer_list<std::string_view> names) {
  return std::find(names.begin(), names.end(), name) != names.end();
}

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\f'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c; }

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = lower(c);
  return out;
}

bool iequals_prefix(std::string_view haystack, std::size_t at, std::string_view needle) {
  if (haystack.size() - at < needle.size() || at > haystack.size()) return false;
  for (std::size_t i = 0; i < needle.size(); ++i) {
    if (lower(haystack[at + i]) != lower(needle[i])) return false;
  }
  return true;
}

// Replaces invalid UTF-8 (maximal subparts) with U+FFFD, normalizes newlines,
// replaces NUL and drops a leading BOM.
std::string preprocess(std::string_view input, std::size_t& invalid) {
  std::string out;
  out.reserve(input.size());
  std::size_t i = input.starts_with("\xEF\xBB\xBF") ? 3 : 0;
  const std::size_t n = input.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(input[i]);
    if (c < 0x80) {
      if (c == '\r') {
        out += '\n';
        i += (i + 1 < n && input[i + 1] == '\n') ? 2 : 1;
      } else if (c == 0) {
        append_utf8(out, 0xFFFD);
        ++i;
      } else {
        out += static_cast<char>(c);
        ++i;
      }
      continue;
    }
    std::size_t len = 0;
    unsigned char lo = 0x80;
    unsigned char hi = 0xBF;
    if (c >= 0xC2 && c <= 0xDF) {
      len = 2;
    } else if (c >= 0xE0 && c <= 0xEF) {
      len = 3;
      if (c == 0xE0) lo = 0xA0;
      if (c == 0xED) hi = 0x9F;
    } else if (c >= 0xF0 && c <= 0xF4) {
      len = 4;
      if (c == 0xF0) lo = 0x90;
      if (c == 0xF4) hi = 0x8F;
    }
    if (len == 0) {
      append_utf8(out, 0xFFFD);
      ++invalid;
      ++i;
      continue;
    }
    std::size_t k = 1;
    for (; k < len && i + k < n; ++k) {
      auto b = static_cast<unsigned char>(input[i + k]);
      if (b < (k == 1 ? lo : 0x80) || b > (k == 1 ? hi : 0xBF)) break;
    }
    if (k == len) {
      out.append(input.substr(i, len));
      i += len;
    } else {
      append_utf8(out, 0xFFFD);
      ++invalid;
      i += k;
    }
  }
  return out;
}

enum class TokenType { StartTag, EndTag, Comment, Character, Doctype, Eof };

struct Token {
  TokenType type = TokenType::Eof;
  std::string name;
  Attributes attrs;
  bool self_closing = false;
  std::string data;
};

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view input) : in_(input) {}

  bool allow_cdata = false;

  bool at_end() const { return pos_ >= in_.size(); }

  Token next() {
    while (true) {
      if (at_end()) return Token{};
      std::string raw;
      bool cdata = false;
      while (!at_end()) {
        std::size_t lt = in_.find('<', pos_);
        if (lt == std::string_view::npos) {
          raw.append(in_.substr(pos_));
          pos_ = in_.size();
          break;
        }
        raw.append(in_.substr(pos_, lt - pos_));
        pos_ = lt;
        if (starts_markup()) break;
        raw += '<';
        ++pos_;
      }
      if (!raw.empty()) {
        Token text;
        text.type = TokenType::Character;
        text.data = decode_character_references(raw, false);
        return text;
      }
      Token token;
      if (markup(token, cdata)) return token;
    }
  }

  // Consumes up to (not including) the appropriate end tag for `name`.
  std::string read_raw_text(std::string_view name) {
    std::size_t search = pos_;
    while (true) {
      std::size_t lt = in_.find("</", search);
      if (lt == std::string_view::npos) break;
      std::size_t after = lt + 2 + name.size();
      if (iequals_prefix(in_, lt + 2, name) && after < in_.size() &&
          (is_ws(in_[after]) || in_[after] == '/' || in_[after] == '>')) {
        std::string text(in_.substr(pos_, lt - pos_));
        pos_ = lt;
        return text;
      }
      search = lt + 2;
    }
    std::string text(in_.substr(pos_));
    pos_ = in_.size();
    return text;
  }

  std::string read_rest() {
    std::string text(in_.substr(pos_));
    pos_ = in_.size();
    return text;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;

  char peek(std::size_t offset) const {
    return pos_ + offset < in_.size() ? in_[pos_ + offset] : '\0';
  }

  bool starts_markup() const {
    char c = peek(1);
    if (c == '!' || c == '?' || is_alpha(c)) return true;
    if (c == '/') return pos_ + 2 < in_.size();
    return false;
  }

  // pos_ is at '<'. Returns false when the construct produced no token.
  bool markup(Token& token, bool& cdata) {
    char c = peek(1);
    if (c == '!') {
      if (peek(2) == '-' && peek(3) == '-') {
        pos_ += 4;
        token.type = TokenType::Comment;
        token.data = comment_body();
        return true;
      }
      if (iequals_prefix(in_, pos_ + 2, "doctype")) {
        std::size_t gt = in_.find('>', pos_ + 2);
        std::size_t end = gt == std::string_view::npos ? in_.size() : gt;
        token.type = TokenType::Doctype;
        token.data = std::string(in_.substr(pos_ + 2, end - pos_ - 2));
        pos_ = gt == std::string_view::npos ? in_.size() : gt + 1;
        return true;
      }
      if (allow_cdata && in_.substr(pos_ + 2).starts_with("[CDATA[")) {
        std::size_t start = pos_ + 9;
        std::size_t end = in_.find("]]>", start);
        token.type = TokenType::Character;
        if (end == std::string_view::npos) {
          token.data = std::string(in_.substr(start));
          pos_ = in_.size();
        } else {
          token.data = std::string(in_.substr(start, end - start));
          pos_ = end + 3;
        }
        cdata = true;
        return !token.data.empty();
      }
      return bogus_comment(token, pos_ + 2);
    }
    if (c == '?') return bogus_comment(token, pos_ + 1);
    if (c == '/') {
      char d = peek(2);
      if (is_alpha(d)) {
        pos_ += 2;
        token.type = TokenType::EndTag;
        return tag(token);
      }
      if (d == '>') {
        pos_ += 3;
        return false;
      }
      return bogus_comment(token, pos_ + 2);
    }
    pos_ += 1;
    token.type = TokenType::StartTag;
    return tag(token);
  }

  bool bogus_comment(Token& token, std::size_t from) {
    std::size_t gt = in_.find('>', from);
    std::size_t end = gt == std::string_view::npos ? in_.size() : gt;
    token.type = TokenType::Comment;
    token.data = std::string(in_.substr(from, end - from));
    pos_ = gt == std::string_view::npos ? in_.size() : gt + 1;
    return true;
  }

  std::string comment_body() {
    enum class S { Start, StartDash, Body, EndDash, End, EndBang };
    std::string data;
    S state = S::Start;
    while (pos_ < in_.size()) {
      char c = in_[pos_];
      switch (state) {
        case S::Start:
          if (c == '-') {
            state = S::StartDash;
            ++pos_;
          } else if (c == '>') {
            ++pos_;
            return data;
          } else {
            state = S::Body;
          }
          break;
        case S::StartDash:
          if (c == '-') {
            state = S::End;
            ++pos_;
          } else if (c == '>') {
            ++pos_;
            return data;
          } else {
            data += '-';
            state = S::Body;
          }
          break;
        case S::Body:
          if (c == '-') {
            state = S::EndDash;
          } else {
            data += c;
          }
          ++pos_;
          break;
        case S::EndDash:
          if (c == '-') {
            state = S::End;
            ++pos_;
          } else {
            data += '-';
            state = S::Body;
          }
          break;
        case S::End:
          if (c == '>') {
            ++pos_;
            return data;
          }
          if (c == '!') {
            state = S::EndBang;
            ++pos_;
          } else if (c == '-') {
            data += '-';
            ++pos_;
          } else {
            data += "--";
            state = S::Body;
          }
          break;
        case S::EndBang:
          if (c == '-') {
            data += "--!";
            state = S::EndDash;
            ++pos_;
          } else if (c == '>') {
            ++pos_;
            return data;
          } else {
            data += "--!";
            state = S::Body;
          }
          break;
      }
    }
    return data;
  }

  void skip_ws() {
    while (pos_ < in_.size() && is_ws(in_[pos_])) ++pos_;
  }

  // pos_ is at the first character of the tag name. Tags cut off by the end
  // of input are dropped.
  bool tag(Token& token) {
    while (pos_ < in_.size() && !is_ws(in_[pos_]) && in_[pos_] != '/' && in_[pos_] != '>') {
      token.name += lower(in_[pos_++]);
    }
    while (true) {
      skip_ws();
      if (pos_ >= in_.size()) return false;
      char c = in_[pos_];
      if (c == '>') {
        ++pos_;
        return true;
      }
      if (c == '/') {
        ++pos_;
        if (pos_ >= in_.size()) return false;
        if (in_[pos_] == '>') {
          ++pos_;
          token.self_closing = true;
          return true;
        }
        continue;
      }
      std::string attr_name;
      if (c == '=') {
        attr_name += '=';
        ++pos_;
      }
      while (pos_ < in_.size() && !is_ws(in_[pos_]) && in_[pos_] != '/' && in_[pos_] != '>' &&
             in_[pos_] != '=') {
        attr_name += lower(in_[pos_++]);
      }
      skip_ws();
      std::string value;
      if (pos_ < in_.size() && in_[pos_] == '=') {
        ++pos_;
        skip_ws();
        if (pos_ >= in_.size()) return false;
        char q = in_[pos_];
        if (q == '"' || q == '\'') {
          std::size_t close = in_.find(q, pos_ + 1);
          if (close == std::string_view::npos) {
            pos_ = in_.size();
            return false;
          }
          value = decode_character_references(in_.substr(pos_ + 1, close - pos_ - 1), true);
          pos_ = close + 1;
        } else if (q != '>') {
          std::size_t start = pos_;
          while (pos_ < in_.size() && !is_ws(in_[pos_]) && in_[pos_] != '>') ++pos_;
          value = decode_character_references(in_.substr(start, pos_ - start), true);
        }
      }
      bool duplicate = std::any_of(token.attrs.begin(), token.attrs.end(),
                                   [&](const Attribute& a) { return a.first == attr_name; });
      if (!duplicate) token.attrs.emplace_back(std::move(attr_name), std::move(value));
    }
  }
};

constexpr std::pair<std::string_view, std::string_view> kSvgTagNames[] = {
    {"altglyph", "altGlyph"},
    {"altglyphdef", "altGlyphDef"},
    {"altglyphitem", "altGlyphItem"},
    {"animatecolor", "animateColor"},
    {"animatemotion", "animateMotion"},
    {"animatetransform", "animateTransform"},
    {"clippath", "clipPath"},
    {"feblend", "feBlend"},
    {"fecolormatrix", "feColorMatrix"},
    {"fecomponenttransfer", "feComponentTransfer"},
    {"fecomposite", "feComposite"},
    {"feconvolvematrix", "feConvolveMatrix"},
    {"fediffuselighting", "feDiffuseLighting"},
    {"fedisplacementmap", "feDisplacementMap"},
    {"fedistantlight", "feDistantLight"},
    {"fedropshadow", "feDropShadow"},
    {"feflood", "feFlood"},
    {"fefunca", "feFuncA"},
    {"fefuncb", "feFuncB"},
    {"fefuncg", "feFuncG"},
    {"fefuncr", "feFuncR"},
    {"fegaussianblur", "feGaussianBlur"},
    {"feimage", "feImage"},
    {"femerge", "feMerge"},
    {"femergenode", "feMergeNode"},
    {"femorphology", "feMorphology"},
    {"feoffset", "feOffset"},
    {"fepointlight", "fePointLight"},
    {"fespecularlighting", "feSpecularLighting"},
    {"fespotlight", "feSpotLight"},
    {"fetile", "feTile"},
    {"feturbulence", "feTurbulence"},
    {"foreignobject", "foreignObject"},
    {"glyphref", "glyphRef"},
    {"lineargradient", "linearGradient"},
    {"radialgradient", "radialGradient"},
    {"textpath", "textPath"},
};

constexpr std::pair<std::string_view, std::string_view> kSvgAttributeNames[] = {
    {"attributename", "attributeName"},
    {"attributetype", "attributeType"},
    {"basefrequency", "baseFrequency"},
    {"baseprofile", "baseProfile"},
    {"calcmode", "calcMode"},
    {"clippathunits", "clipPathUnits"},
    {"diffuseconstant", "diffuseConstant"},
    {"edgemode", "edgeMode"},
    {"filterunits", "filterUnits"},
    {"glyphref", "glyphRef"},
    {"gradienttransform", "gradientTransform"},
    {"gradientunits", "gradientUnits"},
    {"kernelmatrix", "kernelMatrix"},
    {"kernelunitlength", "kernelUnitLength"},
    {"keypoints", "keyPoints"},
    {"keysplines", "keySplines"},
    {"keytimes", "keyTimes"},
    {"lengthadjust", "lengthAdjust"},
    {"limitingconeangle", "limitingConeAngle"},
    {"markerheight", "markerHeight"},
    {"markerunits", "markerUnits"},
    {"markerwidth", "markerWidth"},
    {"maskcontentunits", "maskContentUnits"},
    {"maskunits", "maskUnits"},
    {"numoctaves", "numOctaves"},
    {"pathlength", "pathLength"},
    {"patterncontentunits", "patternContentUnits"},
    {"patterntransform", "patternTransform"},
    {"patternunits", "patternUnits"},
    {"pointsatx", "pointsAtX"},
    {"pointsaty", "pointsAtY"},
    {"pointsatz", "pointsAtZ"},
    {"preservealpha", "preserveAlpha"},
    {"preserveaspectratio", "preserveAspectRatio"},
    {"primitiveunits", "primitiveUnits"},
    {"refx", "refX"},
    {"refy", "refY"},
    {"repeatcount", "repeatCount"},
    {"repeatdur", "repeatDur"},
    {"requiredextensions", "requiredExtensions"},
    {"requiredfeatures", "requiredFeatures"},
    {"specularconstant", "specularConstant"},
    {"specularexponent", "specularExponent"},
    {"spreadmethod", "spreadMethod"},
    {"startoffset", "startOffset"},
    {"stddeviation", "stdDeviation"},
    {"stitchtiles", "stitchTiles"},
    {"surfacescale", "surfaceScale"},
    {"systemlanguage", "systemLanguage"},
    {"tablevalues", "tableValues"},
    {"targetx", "targetX"},
    {"targety", "targetY"},
    {"textlength", "textLength"},
    {"viewbox", "viewBox"},
    {"viewtarget", "viewTarget"},
    {"xchannelselector", "xChannelSelector"},
    {"ychannelselector", "yChannelSelector"},
    {"zoomandpan", "zoomAndPan"},
};

template <std::size_t N>
std::string_view adjusted(const std::pair<std::string_view, std::string_view> (&table)[N],
                          std::string_view name) {
  for (const auto& [from, to] : table) {
    if (from == name) return to;
  }
  return name;
}

void adjust_attributes(Attributes& attrs, Namespace ns) {
  for (auto& [name, value] : attrs) {
    if (ns == Namespace::Svg) {
      name = std::string(adjusted(kSvgAttributeNames, name));
    } else if (ns == Namespace::MathMl && name == "definitionurl") {
      name = "definitionURL";
    }
  }
}

struct BNode {
  NodeKind kind = NodeKind::Tag;
  Namespace ns = Namespace::Html;
  std::string name;
  Attributes attrs;
  std::string text;
  std::vector<BNode*> children;
};

bool is_html(const BNode* n, std::string_view name) { return n->ns == Namespace::Html && n->name == name; }
bool is_html_in(const BNode* n, Names names) { return n->ns == Namespace::Html && one_of(n->name, names); }
bool is_html_in(const BNode* n, std::initializer_list<std::string_view> names) {
  return n->ns == Namespace::Html && one_of(n->name, names);
}

bool is_html_ip(const BNode* n) {
  return is_html_integration_point(n->ns, n->name,
                                   n->ns == Namespace::MathMl && annotation_encoding_is_html(n->attrs));
}

bool is_mathml_text_ip(const BNode* n) { return is_mathml_text_integration_point(n->ns, n->name); }

constexpr std::string_view kSpecial[] = {
    "address", "applet", "area", "article", "aside", "base", "basefont", "bgsound", "blockquote",
    "body", "br", "button", "caption", "center", "col", "colgroup", "dd", "details", "dir", "div",
    "dl", "dt", "embed", "fieldset", "figcaption", "figure", "footer", "form", "frame", "frameset",
    "h1", "h2", "h3", "h4", "h5", "h6", "head", "header", "hgroup", "hr", "html", "iframe", "img",
    "input", "keygen", "li", "link", "listing", "main", "marquee", "menu", "meta", "nav", "noembed",
    "noframes", "noscript", "object", "ol", "p", "param", "plaintext", "pre", "script", "search",
    "section", "select", "source", "style", "summary", "table", "tbody", "td", "template",
    "textarea", "tfoot", "th", "thead", "title", "tr", "track", "ul", "wbr", "xmp"};

bool is_special(const BNode* n) {
  if (n->ns == Namespace::Html) return one_of(n->name, kSpecial);
  return is_html_ip(n) || is_mathml_text_ip(n) || (n->ns == Namespace::MathMl && n->name == "annotation-xml");
}

enum class Scope { Default, ListItem, Button, Table };

bool is_scope_boundary(const BNode* n, Scope scope) {
  if (scope == Scope::Table) return is_html_in(n, {"html", "table", "template"});
  if (n->ns == Namespace::Html) {
    if (one_of(n->name, {"applet", "caption", "html", "table", "td", "th", "marquee", "object", "template"})) {
      return true;
    }
    if (scope == Scope::ListItem) return one_of(n->name, {"ol", "ul"});
    if (scope == Scope::Button) return n->name == "button";
    return false;
  }
  if (n->ns == Namespace::MathMl) return one_of(n->name, {"mi", "mo", "mn", "ms", "mtext", "annotation-xml"});
  return one_of(n->name, {"foreignObject", "desc", "title"});
}

constexpr std::string_view kHeadings[] = {"h1", "h2", "h3", "h4", "h5", "h6"};
constexpr std::string_view kImpliedEnd[] = {"dd", "dt", "li", "optgroup", "option", "p", "rb", "rp", "rt", "rtc"};
constexpr std::string_view kHeadContent[] = {"base", "basefont", "bgsound", "link", "meta", "noframes",
                                "script", "style", "template", "title"};
constexpr std::string_view kBlockStart[] = {"address", "article", "aside", "blockquote", "center", "details",
                               "dialog", "dir", "div", "dl", "fieldset", "figcaption", "figure",
                               "footer", "header", "hgroup", "main", "menu", "nav", "ol", "p",
                               "search", "section", "summary", "ul"};
constexpr std::string_view kBlockEnd[] = {"address", "article", "aside", "blockquote", "button", "center",
                             "details", "dialog", "dir", "div", "dl", "fieldset", "figcaption",
                             "figure", "footer", "header", "hgroup", "listing", "main", "menu",
                             "nav", "ol", "pre", "search", "section", "summary", "ul"};
constexpr std::string_view kFormatting[] = {"a", "b", "big", "code", "em", "font", "i", "nobr",
                               "s", "small", "strike", "strong", "tt", "u"};
constexpr std::string_view kVoidInBody[] = {"area", "br", "embed", "img", "keygen", "wbr",
                               "input", "param", "source", "track"};
constexpr std::string_view kTableParts[] = {"caption", "col", "colgroup", "tbody", "td", "tfoot", "th", "thead", "tr"};
constexpr std::string_view kForeignBreakout[] = {
    "b", "big", "blockquote", "body", "br", "center", "code", "dd", "div", "dl", "dt", "em",
    "embed", "h1", "h2", "h3", "h4", "h5", "h6", "head", "hr", "i", "img", "li", "listing",
    "menu", "meta", "nobr", "ol", "p", "pre", "ruby", "s", "small", "span", "strong", "strike",
    "sub", "sup", "table", "tt", "u", "ul", "var"};

enum class Mode {
  Initial,
  BeforeHtml,
  BeforeHead,
  InHead,
  InHeadNoscript,
  AfterHead,
  InBody,
  AfterBody,
  AfterAfterBody
};

// Splits leading whitespace off a character token.
std::string take_leading_ws(std::string& data) {
  std::size_t n = 0;
  while (n < data.size() && is_ws(data[n])) ++n;
  std::string ws = data.substr(0, n);
  data.erase(0, n);
  return ws;
}

// HTML tree construction, reduced to the insertion modes that matter for
// documents (no table/select modes, foster parenting or formatting
// reconstruction). Every node is inserted into the current node, so the
// result depends only on the ancestry of each node; that is what makes
// serialize/parse a fixed point.
class TreeBuilder {
 public:
  explicit TreeBuilder(std::string_view input) : tok_(input) {}

  void parse_document() {
    mode_ = Mode::Initial;
    run();
    for (auto it = leading_comments_.rbegin(); it != leading_comments_.rend(); ++it) {
      html_->children.insert(html_->children.begin(), *it);
    }
  }

  void parse_fragment(const FragmentContext& context) {
    BNode* ctx = make(NodeKind::Tag, context.name);
    ctx->ns = context.ns;
    if (context.annotation_html) ctx->attrs.emplace_back("encoding", "text/html");
    stack_.push_back(ctx);
    html_ = ctx;
    fragment_ = true;
    html_fragment_ = context.ns == Namespace::Html && context.name == "html";
    mode_ = Mode::InBody;
    run();
  }

  std::optional<std::string> doctype() const { return doctype_; }
  BNode* root() const { return html_; }

  static DomNode to_dom(const BNode* n) {
    DomNode out;
    out.kind = n->kind;
    out.name = n->name;
    out.attrs = n->attrs;
    out.text = n->text;
    out.children.reserve(n->children.size());
    for (const BNode* child : n->children) out.children.push_back(to_dom(child));
    return out;
  }

 private:
  Tokenizer tok_;
  std::deque<BNode> arena_;
  std::vector<BNode*> stack_;
  Mode mode_ = Mode::Initial;
  BNode* html_ = nullptr;
  BNode* head_ = nullptr;
  bool fragment_ = false;
  bool html_fragment_ = false;
  bool skip_newline_ = false;
  std::vector<BNode*> leading_comments_;
  std::optional<std::string> doctype_;
  std::vector<Mode> template_modes_;

  BNode* make(NodeKind kind, std::string name = {}) {
    BNode& n = arena_.emplace_back();
    n.kind = kind;
    n.name = std::move(name);
    return &n;
  }

  BNode* current() const { return stack_.back(); }

  void run() {
    while (true) {
      tok_.allow_cdata = !stack_.empty() && current()->ns != Namespace::Html;
      Token t = tok_.next();
      if (skip_newline_) {
        skip_newline_ = false;
        if (t.type == TokenType::Character && t.data.starts_with('\n')) {
          t.data.erase(0, 1);
          if (t.data.empty()) continue;
        }
      }
      dispatch(t);
      if (t.type == TokenType::Eof) break;
    }
  }

  bool use_html_rules(const Token& t) const {
    if (stack_.empty() || t.type == TokenType::Eof) return true;
    const BNode* n = current();
    if (n->ns == Namespace::Html) return true;
    bool start = t.type == TokenType::StartTag;
    bool chars = t.type == TokenType::Character;
    if (is_mathml_text_ip(n) && ((start && t.name != "mglyph" && t.name != "malignmark") || chars)) return true;
    if (n->ns == Namespace::MathMl && n->name == "annotation-xml" && start && t.name == "svg") return true;
    if (is_html_ip(n) && (start || chars)) return true;
    return false;
  }

  void dispatch(Token& t) {
    if (use_html_rules(t)) {
      process(t);
    } else {
      foreign(t);
    }
  }

  // --- insertion helpers -------------------------------------------------

  void append(BNode* parent, BNode* child) { parent->children.push_back(child); }

  BNode* create_element(const Token& t, Namespace ns = Namespace::Html) {
    BNode* n = make(kind_for_tag(t.name), t.name);
    n->ns = ns;
    n->attrs = t.attrs;
    return n;
  }

  BNode* insert_element(const Token& t, Namespace ns = Namespace::Html) {
    BNode* n = create_element(t, ns);
    append(current(), n);
    stack_.push_back(n);
    return n;
  }

  BNode* insert_element(std::string_view name) {
    Token t;
    t.name = std::string(name);
    return insert_element(t);
  }

  void insert_void(const Token& t) { append(current(), create_element(t)); }

  void insert_text(BNode* parent, const std::string& data) {
    if (data.empty()) return;
    if (!parent->children.empty() && parent->children.back()->kind == NodeKind::Text) {
      parent->children.back()->text += data;
      return;
    }
    BNode* n = make(NodeKind::Text);
    n->text = data;
    append(parent, n);
  }

  void insert_text(const std::string& data) { insert_text(current(), data); }

  void insert_comment(BNode* parent, const std::string& data) {
    BNode* n = make(NodeKind::Comment);
    n->text = data;
    append(parent, n);
  }

  // Raw text and RCDATA elements read their content synchronously and
  // consume their own end tag, so they never sit on the stack.
  void insert_raw(const Token& t, Namespace ns, bool rcdata) {
    BNode* n = create_element(t, ns);
    append(current(), n);
    std::string content = tok_.read_raw_text(lowercase(t.name));
    if (rcdata) content = decode_character_references(content, false);
    if (ns == Namespace::Html && t.name == "textarea" && content.starts_with('\n')) content.erase(0, 1);
    if (n->kind == NodeKind::Script || n->kind == NodeKind::Stylesheet) {
      n->text = std::move(content);
    } else if (!content.empty()) {
      insert_text(n, content);
    }
    if (!tok_.at_end()) tok_.next();
  }

  void pop() {
    if (stack_.size() > 1) stack_.pop_back();
  }

  void pop_until(std::string_view name) {
    while (stack_.size() > 1) {
      BNode* n = stack_.back();
      stack_.pop_back();
      if (is_html(n, name)) break;
    }
  }

  void pop_until_any(Names names) {
    while (stack_.size() > 1) {
      BNode* n = stack_.back();
      stack_.pop_back();
      if (is_html_in(n, names)) break;
    }
  }

  bool in_scope_any(Names names, Scope scope) const {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      const BNode* n = stack_[i];
      if (is_html_in(n, names)) return true;
      if (is_scope_boundary(n, scope)) return false;
    }
    return false;
  }

  bool in_scope(std::string_view name, Scope scope = Scope::Default) const {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      const BNode* n = stack_[i];
      if (is_html(n, name)) return true;
      if (is_scope_boundary(n, scope)) return false;
    }
    return false;
  }

  bool on_stack(std::string_view name) const {
    for (std::size_t i = 1; i < stack_.size(); ++i) {
      if (is_html(stack_[i], name)) return true;
    }
    return false;
  }

  void generate_implied_end_tags(std::string_view except = {}) {
    while (stack_.size() > 1 && current()->ns == Namespace::Html && one_of(current()->name, kImpliedEnd) &&
           current()->name != except) {
      stack_.pop_back();
    }
  }

  void close_p() {
    if (in_scope("p", Scope::Button)) {
      generate_implied_end_tags("p");
      pop_until("p");
    }
  }

  void merge_attributes(BNode* target, const Attributes& attrs) {
    for (const auto& attr : attrs) {
      bool present = std::any_of(target->attrs.begin(), target->attrs.end(),
                                 [&](const Attribute& a) { return a.first == attr.first; });
      if (!present) target->attrs.push_back(attr);
    }
  }

  // --- insertion modes ---------------------------------------------------

  void process(Token& t) {
    bool again = true;
    while (again) {
      switch (mode_) {
        case Mode::Initial: again = initial(t); break;
        case Mode::BeforeHtml: again = before_html(t); break;
        case Mode::BeforeHead: again = before_head(t); break;
        case Mode::InHead: again = in_head(t); break;
        case Mode::InHeadNoscript: again = in_head_noscript(t); break;
        case Mode::AfterHead: again = after_head(t); break;
        case Mode::InBody: again = in_body(t); break;
        case Mode::AfterBody: again = after_body(t); break;
        case Mode::AfterAfterBody: again = after_after_body(t); break;
      }
    }
  }

  bool initial(Token& t) {
    if (t.type == TokenType::Character) {
      take_leading_ws(t.data);
      if (t.data.empty()) return false;
    } else if (t.type == TokenType::Comment) {
      BNode* n = make(NodeKind::Comment);
      n->text = t.data;
      leading_comments_.push_back(n);
      return false;
    } else if (t.type == TokenType::Doctype) {
      doctype_ = t.data;
      mode_ = Mode::BeforeHtml;
      return false;
    }
    mode_ = Mode::BeforeHtml;
    return true;
  }

  void create_html(const Attributes& attrs) {
    html_ = make(NodeKind::Tag, "html");
    html_->attrs = attrs;
    stack_.push_back(html_);
    mode_ = Mode::BeforeHead;
  }

  bool before_html(Token& t) {
    switch (t.type) {
      case TokenType::Doctype: return false;
      case TokenType::Comment: {
        BNode* n = make(NodeKind::Comment);
        n->text = t.data;
        leading_comments_.push_back(n);
        return false;
      }
      case TokenType::Character:
        take_leading_ws(t.data);
        if (t.data.empty()) return false;
        break;
      case TokenType::StartTag:
        if (t.name == "html") {
          create_html(t.attrs);
          return false;
        }
        break;
      case TokenType::EndTag:
        if (!one_of(t.name, {"head", "body", "html", "br"})) return false;
        break;
      case TokenType::Eof: break;
    }
    create_html({});
    return true;
  }

  bool before_head(Token& t) {
    switch (t.type) {
      case TokenType::Character:
        take_leading_ws(t.data);
        if (t.data.empty()) return false;
        break;
      case TokenType::Comment: insert_comment(current(), t.data); return false;
      case TokenType::Doctype: return false;
      case TokenType::StartTag:
        if (t.name == "html") return in_body(t);
        if (t.name == "head") {
          head_ = insert_element(t);
          mode_ = Mode::InHead;
          return false;
        }
        break;
      case TokenType::EndTag:
        if (!one_of(t.name, {"head", "body", "html", "br"})) return false;
        break;
      case TokenType::Eof: break;
    }
    head_ = insert_element("head");
    mode_ = Mode::InHead;
    return true;
  }

  void start_template(const Token& t) {
    insert_element(t);
    template_modes_.push_back(mode_);
    mode_ = Mode::InBody;
  }

  void end_template() {
    if (!on_stack("template")) return;
    generate_implied_end_tags();
    pop_until("template");
    if (!template_modes_.empty()) {
      mode_ = template_modes_.back();
      template_modes_.pop_back();
    }
  }

  bool in_head(Token& t) {
    switch (t.type) {
      case TokenType::Character: {
        std::string ws = take_leading_ws(t.data);
        insert_text(ws);
        if (t.data.empty()) return false;
        break;
      }
      case TokenType::Comment: insert_comment(current(), t.data); return false;
      case TokenType::Doctype: return false;
      case TokenType::StartTag:
        if (t.name == "html") return in_body(t);
        if (one_of(t.name, {"base", "basefont", "bgsound", "link", "meta"})) {
          insert_void(t);
          return false;
        }
        if (t.name == "title") {
          insert_raw(t, Namespace::Html, true);
          return false;
        }
        if (t.name == "noscript" && mode_ == Mode::InHead) {
          insert_element(t);
          mode_ = Mode::InHeadNoscript;
          return false;
        }
        if (one_of(t.name, {"noframes", "style", "script"})) {
          insert_raw(t, Namespace::Html, false);
          return false;
        }
        if (t.name == "template") {
          start_template(t);
          return false;
        }
        if (t.name == "head") return false;
        break;
      case TokenType::EndTag:
        if (t.name == "template") {
          end_template();
          return false;
        }
        if (t.name == "head") {
          pop();
          mode_ = Mode::AfterHead;
          return false;
        }
        if (!one_of(t.name, {"body", "html", "br"})) return false;
        break;
      case TokenType::Eof: break;
    }
    pop();
    mode_ = Mode::AfterHead;
    return true;
  }

  bool in_head_noscript(Token& t) {
    switch (t.type) {
      case TokenType::Doctype: return false;
      case TokenType::Character: {
        std::string ws = take_leading_ws(t.data);
        insert_text(ws);
        if (t.data.empty()) return false;
        break;
      }
      case TokenType::Comment: insert_comment(current(), t.data); return false;
      case TokenType::StartTag:
        if (t.name == "html") return in_body(t);
        if (one_of(t.name, {"basefont", "bgsound", "link", "meta", "noframes", "style"})) return in_head(t);
        if (one_of(t.name, {"head", "noscript"})) return false;
        break;
      case TokenType::EndTag:
        if (t.name == "noscript") {
          pop();
          mode_ = Mode::InHead;
          return false;
        }
        if (t.name != "br") return false;
        break;
      case TokenType::Eof: break;
    }
    pop();
    mode_ = Mode::InHead;
    return true;
  }

  bool after_head(Token& t) {
    switch (t.type) {
      case TokenType::Character: {
        std::string ws = take_leading_ws(t.data);
        insert_text(ws);
        if (t.data.empty()) return false;
        break;
      }
      case TokenType::Comment: insert_comment(current(), t.data); return false;
      case TokenType::Doctype: return false;
      case TokenType::StartTag:
        if (t.name == "html") return in_body(t);
        if (t.name == "body") {
          insert_element(t);
          mode_ = Mode::InBody;
          return false;
        }
        if (one_of(t.name, kHeadContent) && head_ != nullptr) {
          stack_.push_back(head_);
          in_head(t);
          stack_.erase(std::find(stack_.begin(), stack_.end(), head_));
          return false;
        }
        if (t.name == "head") return false;
        break;
      case TokenType::EndTag:
        if (t.name == "template") return in_head(t);
        if (!one_of(t.name, {"body", "html", "br"})) return false;
        break;
      case TokenType::Eof: break;
    }
    insert_element("body");
    mode_ = Mode::InBody;
    return true;
  }

  bool after_body(Token& t) {
    switch (t.type) {
      case TokenType::Character: {
        std::string ws = take_leading_ws(t.data);
        insert_text(ws);
        if (t.data.empty()) return false;
        break;
      }
      case TokenType::Comment: insert_comment(stack_.front(), t.data); return false;
      case TokenType::Doctype: return false;
      case TokenType::StartTag:
        if (t.name == "html") return in_body(t);
        break;
      case TokenType::EndTag:
        if (t.name == "html") {
          mode_ = Mode::AfterAfterBody;
          return false;
        }
        break;
      case TokenType::Eof: return false;
    }
    mode_ = Mode::InBody;
    return true;
  }

  bool after_after_body(Token& t) {
    switch (t.type) {
      case TokenType::Comment: insert_comment(stack_.front(), t.data); return false;
      case TokenType::Doctype: return false;
      case TokenType::Character: {
        std::string ws = take_leading_ws(t.data);
        insert_text(ws);
        if (t.data.empty()) return false;
        break;
      }
      case TokenType::StartTag:
        if (t.name == "html") return in_body(t);
        break;
      case TokenType::EndTag: break;
      case TokenType::Eof: return false;
    }
    mode_ = Mode::InBody;
    return true;
  }

  // Table structure without the table insertion modes: a table part is
  // inserted under the nearest open element that may contain it (implying
  // tbody and tr), or dropped when there is none.
  void table_part(const Token& t) {
    static constexpr std::string_view kCellParents[] = {"tr", "tbody", "thead", "tfoot", "table"};
    static constexpr std::string_view kRowParents[] = {"tbody", "thead", "tfoot", "table"};
    static constexpr std::string_view kColParents[] = {"colgroup", "table"};
    static constexpr std::string_view kTable[] = {"table"};
    Names targets = kTable;
    if (t.name == "td" || t.name == "th") {
      targets = kCellParents;
    } else if (t.name == "tr") {
      targets = kRowParents;
    } else if (t.name == "col") {
      targets = kColParents;
    }
    for (std::size_t i = stack_.size(); i-- > 0;) {
      const BNode* n = stack_[i];
      if (is_html_in(n, targets)) {
        stack_.resize(i + 1);
        bool cell = t.name == "td" || t.name == "th";
        if ((cell || t.name == "tr") && n->name == "table") insert_element("tbody");
        if (cell && n->name != "tr") insert_element("tr");
        if (t.name == "col") {
          insert_void(t);
        } else {
          insert_element(t);
        }
        return;
      }
      if (i == 0 || is_html_in(n, {"html", "template"})) return;
    }
  }

  void in_body_start(Token& t) {
    const std::string& name = t.name;
    if (name == "html") {
      if (!fragment_) merge_attributes(html_, t.attrs);
    } else if (one_of(name, kHeadContent)) {
      in_head(t);
    } else if (name == "body") {
      if (html_fragment_ && current() == stack_.front()) {
        insert_element(t);
      } else if (!fragment_ && stack_.size() > 1 && is_html(stack_[1], "body")) {
        merge_attributes(stack_[1], t.attrs);
      }
    } else if (name == "head") {
      if (html_fragment_ && current() == stack_.front()) insert_element(t);
    } else if (name == "frameset" || name == "frame") {
      // frameset documents are not modelled
    } else if (one_of(name, kBlockStart)) {
      close_p();
      insert_element(t);
    } else if (one_of(name, kHeadings)) {
      close_p();
      if (current()->ns == Namespace::Html && one_of(current()->name, kHeadings) && stack_.size() > 1) pop();
      insert_element(t);
    } else if (name == "pre" || name == "listing") {
      close_p();
      insert_element(t);
      skip_newline_ = true;
    } else if (name == "form") {
      if (on_stack("form")) return;
      close_p();
      insert_element(t);
    } else if (name == "li" || name == "dd" || name == "dt") {
      static constexpr std::string_view kLi[] = {"li"};
      static constexpr std::string_view kDdDt[] = {"dd", "dt"};
      Names group = name == "li" ? Names(kLi) : Names(kDdDt);
      for (std::size_t i = stack_.size(); i-- > 1;) {
        const BNode* n = stack_[i];
        if (is_html_in(n, group)) {
          generate_implied_end_tags(n->name);
          stack_.resize(i);
          break;
        }
        if (is_special(n) && !is_html_in(n, {"address", "div", "p"})) break;
      }
      close_p();
      insert_element(t);
    } else if (name == "plaintext") {
      close_p();
      BNode* n = create_element(t);
      append(current(), n);
      insert_text(n, tok_.read_rest());
    } else if (name == "button") {
      if (in_scope("button")) {
        generate_implied_end_tags();
        pop_until("button");
      }
      insert_element(t);
    } else if (name == "a") {
      for (std::size_t i = stack_.size(); i-- > 1;) {
        const BNode* n = stack_[i];
        if (is_html(n, "a")) {
          stack_.resize(i);
          break;
        }
        if (is_html_in(n, {"applet", "object", "marquee", "template", "td", "th", "caption", "html"})) break;
      }
      insert_element(t);
    } else if (name == "nobr") {
      if (in_scope("nobr")) pop_until("nobr");
      insert_element(t);
    } else if (name == "table") {
      close_p();
      insert_element(t);
    } else if (one_of(name, kVoidInBody)) {
      insert_void(t);
    } else if (name == "hr") {
      close_p();
      insert_void(t);
    } else if (name == "image") {
      t.name = "img";
      insert_void(t);
    } else if (name == "textarea") {
      insert_raw(t, Namespace::Html, true);
    } else if (name == "xmp") {
      close_p();
      insert_raw(t, Namespace::Html, false);
    } else if (name == "iframe" || name == "noembed") {
      insert_raw(t, Namespace::Html, false);
    } else if (name == "option") {
      if (is_html(current(), "option")) pop();
      insert_element(t);
    } else if (name == "optgroup") {
      if (is_html(current(), "option")) pop();
      if (is_html(current(), "optgroup")) pop();
      insert_element(t);
    } else if (name == "rb" || name == "rtc") {
      if (in_scope("ruby")) generate_implied_end_tags();
      insert_element(t);
    } else if (name == "rp" || name == "rt") {
      if (in_scope("ruby")) generate_implied_end_tags("rtc");
      insert_element(t);
    } else if (name == "math" || name == "svg") {
      Namespace ns = name == "math" ? Namespace::MathMl : Namespace::Svg;
      adjust_attributes(t.attrs, ns);
      insert_element(t, ns);
      if (t.self_closing) pop();
    } else if (one_of(name, kTableParts)) {
      table_part(t);
    } else {
      insert_element(t);
    }
  }

  void any_other_end_tag(const std::string& name) {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      const BNode* n = stack_[i];
      if (is_html(n, name)) {
        generate_implied_end_tags(name);
        stack_.resize(std::min(stack_.size(), i));
        return;
      }
      if (is_special(n)) return;
    }
  }

  bool in_body_end(Token& t) {
    const std::string& name = t.name;
    if (name == "template") {
      end_template();
    } else if (name == "body" || name == "head") {
      if (html_fragment_) {
        if (on_stack(name)) pop_until(name);
      } else if (name == "body" && !fragment_ && in_scope("body")) {
        mode_ = Mode::AfterBody;
      }
    } else if (name == "html") {
      if (!fragment_ && in_scope("body")) {
        mode_ = Mode::AfterBody;
        return true;
      }
    } else if (one_of(name, kBlockEnd) || one_of(name, {"applet", "marquee", "object"})) {
      if (!in_scope(name)) return false;
      generate_implied_end_tags();
      pop_until(name);
    } else if (name == "form") {
      if (!in_scope("form")) return false;
      generate_implied_end_tags();
      pop_until("form");
    } else if (name == "p") {
      if (!in_scope("p", Scope::Button)) insert_element("p");
      generate_implied_end_tags("p");
      pop_until("p");
    } else if (name == "li") {
      if (!in_scope("li", Scope::ListItem)) return false;
      generate_implied_end_tags("li");
      pop_until("li");
    } else if (name == "dd" || name == "dt") {
      if (!in_scope(name)) return false;
      generate_implied_end_tags(name);
      pop_until(name);
    } else if (one_of(name, kHeadings)) {
      if (!in_scope_any(kHeadings, Scope::Default)) return false;
      generate_implied_end_tags();
      pop_until_any(kHeadings);
    } else if (one_of(name, kFormatting)) {
      if (!in_scope(name)) return false;
      generate_implied_end_tags(name);
      pop_until(name);
    } else if (name == "br") {
      Token br;
      br.type = TokenType::StartTag;
      br.name = "br";
      insert_void(br);
    } else if (name == "table" || one_of(name, kTableParts)) {
      if (!in_scope(name, Scope::Table)) return false;
      generate_implied_end_tags();
      pop_until(name);
    } else {
      any_other_end_tag(name);
    }
    return false;
  }

  bool in_body(Token& t) {
    switch (t.type) {
      case TokenType::Character: insert_text(t.data); return false;
      case TokenType::Comment: insert_comment(current(), t.data); return false;
      case TokenType::Doctype: return false;
      case TokenType::StartTag: in_body_start(t); return false;
      case TokenType::EndTag: return in_body_end(t);
      case TokenType::Eof: return false;
    }
    return false;
  }

  // --- foreign content ---------------------------------------------------

  bool breaks_out(const Token& t) const {
    if (t.type == TokenType::EndTag) return t.name == "br" || t.name == "p";
    if (one_of(t.name, kForeignBreakout)) return true;
    if (t.name == "font") {
      return std::any_of(t.attrs.begin(), t.attrs.end(), [](const Attribute& a) {
        return a.first == "color" || a.first == "face" || a.first == "size";
      });
    }
    return false;
  }

  void foreign(Token& t) {
    switch (t.type) {
      case TokenType::Character: insert_text(t.data); return;
      case TokenType::Comment: insert_comment(current(), t.data); return;
      case TokenType::Doctype: return;
      case TokenType::Eof: return;
      case TokenType::StartTag:
      case TokenType::EndTag: break;
    }
    if (breaks_out(t)) {
      while (stack_.size() > 1 && current()->ns != Namespace::Html && !is_mathml_text_ip(current()) &&
             !is_html_ip(current())) {
        stack_.pop_back();
      }
      process(t);
      return;
    }
    if (t.type == TokenType::StartTag) {
      Namespace ns = current()->ns;
      if (ns == Namespace::Svg) t.name = std::string(adjusted(kSvgTagNames, t.name));
      adjust_attributes(t.attrs, ns);
      if (!t.self_closing && (t.name == "script" || t.name == "style")) {
        insert_raw(t, ns, false);
        return;
      }
      insert_element(t, ns);
      if (t.self_closing) pop();
      return;
    }
    for (std::size_t i = stack_.size() - 1; i > 0;) {
      BNode* n = stack_[i];
      if (lowercase(n->name) == t.name) {
        stack_.resize(i);
        return;
      }
      --i;
      if (stack_[i]->ns == Namespace::Html) {
        process(t);
        return;
      }
    }
  }
};

}  // namespace

std::string_view to_string(Namespace ns) {
  switch (ns) {
    case Namespace::Html: return "html";
    case Namespace::Svg: return "svg";
    case Namespace::MathMl: return "mathml";
  }
  return "html";
}

Namespace namespace_from_string(std::string_view name) {
  if (name == "html") return Namespace::Html;
  if (name == "svg") return Namespace::Svg;
  if (name == "mathml") return Namespace::MathMl;
  throw Error(ErrorCode::ReportParse, "unknown namespace '" + std::string(name) + "'");
}

bool is_html_integration_point(Namespace ns, std::string_view name, bool annotation_html) {
  if (ns == Namespace::Svg) return name == "foreignObject" || name == "desc" || name == "title";
  if (ns == Namespace::MathMl) return name == "annotation-xml" && annotation_html;
  return false;
}

bool is_mathml_text_integration_point(Namespace ns, std::string_view name) {
  return ns == Namespace::MathMl && one_of(name, {"mi", "mo", "mn", "ms", "mtext"});
}

bool annotation_encoding_is_html(const Attributes& attrs) {
  for (const auto& [name, value] : attrs) {
    if (name == "encoding") {
      std::string v = lowercase(value);
      return v == "text/html" || v == "application/xhtml+xml";
    }
  }
  return false;
}

Namespace element_namespace(const FragmentContext& parent, std::string_view child_name) {
  if (parent.ns == Namespace::MathMl && parent.name == "annotation-xml" && child_name == "svg") {
    return Namespace::Svg;
  }
  bool html_rules = parent.ns == Namespace::Html ||
                    is_html_integration_point(parent.ns, parent.name, parent.annotation_html) ||
                    (is_mathml_text_integration_point(parent.ns, parent.name) && child_name != "mglyph" &&
                     child_name != "malignmark");
  if (!html_rules) return parent.ns;
  if (child_name == "svg") return Namespace::Svg;
  if (child_name == "math") return Namespace::MathMl;
  return Namespace::Html;
}

FragmentContext child_context(const FragmentContext& parent, const DomNode& element) {
  FragmentContext ctx;
  ctx.name = element.name;
  ctx.ns = element_namespace(parent, element.name);
  ctx.annotation_html =
      ctx.ns == Namespace::MathMl && element.name == "annotation-xml" && annotation_encoding_is_html(element.attrs);
  return ctx;
}

FragmentContext fragment_context_at(const DomNode& root, const TreePath& path) {
  FragmentContext ctx;
  ctx.name = root.name;
  const DomNode* node = &root;
  for (std::size_t index : path) {
    if (index >= node->children.size()) {
      throw Error(ErrorCode::SpliceConflict, "path " + format_path(path) + " is not in the tree");
    }
    node = &node->children[index];
    ctx = child_context(ctx, *node);
  }
  return ctx;
}

bool is_void_element(std::string_view tag_name) {
  return one_of(tag_name, {"area", "base", "basefont", "bgsound", "br", "col", "embed", "frame", "hr", "img",
                           "input", "keygen", "link", "meta", "param", "source", "track", "wbr"});
}

bool is_raw_text_element(std::string_view tag_name) {
  return one_of(tag_name, {"script", "style", "xmp", "iframe", "noembed", "noframes", "plaintext"});
}

DomDocument parse_html(std::string_view input, std::optional<std::string> base_url) {
  if (input.empty()) throw Error(ErrorCode::EmptyDocument, "input is empty");
  std::size_t invalid = 0;
  std::string text = preprocess(input, invalid);
  TreeBuilder builder(text);
  builder.parse_document();
  DomDocument doc;
  doc.root = TreeBuilder::to_dom(builder.root());
  doc.doctype = builder.doctype();
  doc.source_url = std::move(base_url);
  if (invalid > 0) {
    doc.warnings.push_back("replaced " + std::to_string(invalid) + " invalid UTF-8 sequence(s) with U+FFFD");
  }
  return doc;
}

std::vector<DomNode> parse_fragment(std::string_view input, const FragmentContext& context) {
  std::size_t invalid = 0;
  std::string text = preprocess(input, invalid);
  std::vector<DomNode> out;
  if (context.ns == Namespace::Html && (context.name == "title" || context.name == "textarea")) {
    std::string decoded = decode_character_references(text, false);
    if (!decoded.empty()) out.push_back(DomNode::text_node(std::move(decoded)));
    return out;
  }
  if (context.ns == Namespace::Html && is_raw_text_element(context.name)) {
    if (!text.empty()) out.push_back(DomNode::text_node(std::move(text)));
    return out;
  }
  TreeBuilder builder(text);
  builder.parse_fragment(context);
  DomNode root = TreeBuilder::to_dom(builder.root());
  return std::move(root.children);
}

}  // namespace domremedy
