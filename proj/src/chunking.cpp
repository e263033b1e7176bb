#include "domremedy/chunking.hpp"

#include <boost/uuid/random_generator.hpp>
#include <boost/uuid/uuid_io.hpp>

#include <algorithm>
#include <mutex>
#include <set>

#include "domremedy/error.hpp"
#include "domremedy/ted.hpp"
#include "domremedy/util.hpp"

namespace domremedy {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::size_t approx_bpe(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    bool space = is_space(c);
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return (text.size() + 3) / 4 + words / 8;
}

std::mutex registry_mutex;

std::map<std::string, TokenEstimator, std::less<>>& registry() {
  static std::map<std::string, TokenEstimator, std::less<>> estimators = [] {
    std::map<std::string, TokenEstimator, std::less<>> initial;
    TokenEstimator def{"approx-bpe", approx_bpe, 2};
    initial.emplace(def.name, def);
    return initial;
  }();
  return estimators;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

TreePath child_path(const TreePath& parent, std::size_t index) {
  TreePath path = parent;
  path.push_back(index);
  return path;
}

void collect_preserved(const DomNode& node, const FragmentContext& parent_ctx, TreePath& path,
                       std::vector<PreservedElement>& out) {
  if (node.kind == NodeKind::Script || node.kind == NodeKind::Stylesheet) {
    out.push_back({path, node.kind, serialize_node(node, parent_ctx), parent_ctx});
    return;
  }
  if (!node.is_element()) return;
  FragmentContext ctx = path.empty() ? FragmentContext{node.name, Namespace::Html, false}
                                     : child_context(parent_ctx, node);
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    path.push_back(i);
    collect_preserved(node.children[i], ctx, path, out);
    path.pop_back();
  }
}

class Planner {
 public:
  Planner(ChunkManifest& manifest, const TokenEstimator& estimator, std::size_t budget, ChunkIdSource& ids)
      : manifest_(manifest), estimator_(estimator), budget_(budget), ids_(ids) {}

  void emit(ChunkAnchor anchor, std::string html, bool oversize, std::optional<std::size_t> tokens = {}) {
    Chunk chunk;
    chunk.chunk_id = ids_.next();
    chunk.ordinal = manifest_.chunks.size();
    chunk.token_count = tokens ? *tokens : estimator_.estimate(html);
    chunk.html = std::move(html);
    chunk.oversize = oversize;
    manifest_.anchors.emplace(chunk.chunk_id, std::move(anchor));
    manifest_.chunks.push_back(std::move(chunk));
  }

  // Greedy packing of consecutive siblings; a child too large on its own is
  // split at its children, or emitted flagged when it has none.
  void split(const DomNode& node, const TreePath& path, const FragmentContext& ctx) {
    manifest_.shells.push_back({path, node.name, node.attrs, node.children.size()});
    bool open = false;
    std::size_t first = 0;
    std::size_t count = 0;
    std::string html;
    std::size_t bound = 0;
    bool bound_exact = true;

    auto flush = [&] {
      if (!open) return;
      ChunkAnchor anchor{path, first, count, ctx, false};
      std::optional<std::size_t> tokens;
      if (bound_exact) tokens = bound;
      emit(std::move(anchor), std::move(html), false, tokens);
      html.clear();
      open = false;
    };

    for (std::size_t k = 0; k < node.children.size(); ++k) {
      const DomNode& child = node.children[k];
      std::string piece = serialize_node(child, ctx);
      std::size_t tokens = estimator_.estimate(piece);
      if (tokens > budget_) {
        flush();
        if (child.kind == NodeKind::Tag && !child.children.empty()) {
          split(child, child_path(path, k), child_context(ctx, child));
        } else {
          emit(ChunkAnchor{path, k, 1, ctx, false}, std::move(piece), true, tokens);
        }
        continue;
      }
      if (!open) {
        open = true;
        first = k;
        count = 1;
        html = std::move(piece);
        bound = tokens;
        bound_exact = true;
        continue;
      }
      if (estimator_.join_slack && bound + tokens + *estimator_.join_slack <= budget_) {
        html += piece;
        ++count;
        bound += tokens + *estimator_.join_slack;
        bound_exact = false;
        continue;
      }
      std::string joined = html + piece;
      std::size_t exact = estimator_.estimate(joined);
      if (exact <= budget_) {
        html = std::move(joined);
        ++count;
        bound = exact;
        bound_exact = true;
      } else {
        flush();
        open = true;
        first = k;
        count = 1;
        html = std::move(piece);
        bound = tokens;
        bound_exact = true;
      }
    }
    flush();
  }

 private:
  ChunkManifest& manifest_;
  const TokenEstimator& estimator_;
  std::size_t budget_;
  ChunkIdSource& ids_;
};

struct ScriptRef {
  TreePath path;
  NodeKind kind;
  std::string html;
  bool used = false;
};

void collect_scripts(std::vector<DomNode>& nodes, const FragmentContext& ctx, TreePath& path,
                     std::vector<ScriptRef>& out) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    path.push_back(i);
    const DomNode& n = nodes[i];
    if (n.kind == NodeKind::Script || n.kind == NodeKind::Stylesheet) {
      out.push_back({path, n.kind, serialize_node(n, ctx)});
    } else if (n.kind == NodeKind::Tag) {
      collect_scripts(const_cast<DomNode&>(n).children, child_context(ctx, n), path, out);
    }
    path.pop_back();
  }
}

void insert_clamped(std::vector<DomNode>& top, const TreePath& rel, DomNode node) {
  std::vector<DomNode>* container = &top;
  for (std::size_t depth = 0; depth + 1 < rel.size(); ++depth) {
    if (container->empty()) break;
    std::size_t idx = std::min(rel[depth], container->size() - 1);
    DomNode& next = (*container)[idx];
    if (next.kind != NodeKind::Tag || is_void_element(next.name)) break;
    container = &next.children;
  }
  std::size_t at = std::min(rel.empty() ? 0 : rel.back(), container->size());
  container->insert(container->begin() + static_cast<std::ptrdiff_t>(at), std::move(node));
}

// Originals that the incoming nodes dropped are put back; identical or edited
// ones are left alone (edits win).
void restore_preserved(std::vector<DomNode>& nodes, const FragmentContext& ctx, const TreePath& parent,
                       std::size_t first, std::size_t count, const std::vector<PreservedElement>& preserved) {
  std::vector<const PreservedElement*> originals;
  std::vector<TreePath> relative;
  for (const auto& p : preserved) {
    if (p.path.size() <= parent.size() || !std::equal(parent.begin(), parent.end(), p.path.begin())) continue;
    std::size_t k = p.path[parent.size()];
    if (k < first || k - first >= count) continue;
    TreePath rel(p.path.begin() + static_cast<std::ptrdiff_t>(parent.size()), p.path.end());
    rel[0] = k - first;
    originals.push_back(&p);
    relative.push_back(std::move(rel));
  }
  if (originals.empty()) return;

  std::vector<ScriptRef> current;
  TreePath scratch;
  collect_scripts(nodes, ctx, scratch, current);
  std::vector<bool> matched(originals.size(), false);

  auto pass = [&](auto&& accepts) {
    for (std::size_t i = 0; i < originals.size(); ++i) {
      if (matched[i]) continue;
      for (auto& ref : current) {
        if (!ref.used && ref.kind == originals[i]->kind && accepts(i, ref)) {
          ref.used = true;
          matched[i] = true;
          break;
        }
      }
    }
  };
  pass([&](std::size_t i, const ScriptRef& ref) { return ref.path == relative[i] && ref.html == originals[i]->html; });
  pass([&](std::size_t i, const ScriptRef& ref) { return ref.html == originals[i]->html; });
  pass([&](std::size_t i, const ScriptRef& ref) { return ref.path == relative[i]; });

  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (matched[i]) continue;
    auto parsed = parse_fragment(originals[i]->html, originals[i]->context);
    for (auto& node : parsed) {
      if (node.kind == originals[i]->kind) {
        insert_clamped(nodes, relative[i], std::move(node));
        break;
      }
    }
  }
}

struct Slot {
  enum Kind { Empty, Shell, ChunkStart, ChunkContinued } kind = Empty;
  std::size_t shell = 0;
  std::vector<DomNode> nodes;
};

DomNode materialize(const std::vector<ElementShell>& shells, std::vector<std::vector<Slot>>& slots,
                    std::size_t index) {
  const ElementShell& shell = shells[index];
  DomNode node = DomNode::element(shell.name, shell.attrs);
  for (std::size_t i = 0; i < slots[index].size(); ++i) {
    Slot& slot = slots[index][i];
    switch (slot.kind) {
      case Slot::Empty:
        throw Error(ErrorCode::SpliceConflict, "no chunk covers " + format_path(child_path(shell.path, i)));
      case Slot::Shell: node.children.push_back(materialize(shells, slots, slot.shell)); break;
      case Slot::ChunkStart:
        for (auto& n : slot.nodes) node.children.push_back(std::move(n));
        break;
      case Slot::ChunkContinued: break;
    }
  }
  return node;
}

nlohmann::ordered_json context_to_json(const FragmentContext& ctx) {
  nlohmann::ordered_json out;
  out["name"] = ctx.name;
  out["namespace"] = to_string(ctx.ns);
  out["annotation_html"] = ctx.annotation_html;
  return out;
}

FragmentContext context_from_json(const nlohmann::ordered_json& j) {
  FragmentContext ctx;
  ctx.name = j.at("name").get<std::string>();
  ctx.ns = namespace_from_string(j.at("namespace").get<std::string>());
  ctx.annotation_html = j.value("annotation_html", false);
  return ctx;
}

nlohmann::ordered_json attrs_to_json(const Attributes& attrs) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& [k, v] : attrs) out.push_back({k, v});
  return out;
}

Attributes attrs_from_json(const nlohmann::ordered_json& j) {
  Attributes attrs;
  for (const auto& pair : j) attrs.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  return attrs;
}

}  // namespace

TokenEstimator default_estimator() { return estimator_by_name("approx-bpe"); }

void register_estimator(TokenEstimator estimator) {
  if (estimator.name.empty() || !estimator.estimate) {
    throw Error(ErrorCode::ConfigError, "an estimator needs a name and a function");
  }
  std::lock_guard lock(registry_mutex);
  registry()[estimator.name] = std::move(estimator);
}

TokenEstimator estimator_by_name(std::string_view name) {
  std::lock_guard lock(registry_mutex);
  auto it = registry().find(name);
  if (it == registry().end()) throw Error(ErrorCode::ConfigError, "unknown estimator '" + std::string(name) + "'");
  return it->second;
}

ChunkIdSource::ChunkIdSource(std::uint64_t seed, std::string_view salt) {
  std::uint64_t h = fnv1a(salt);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  engine_.seed(seq);
}

ChunkIdSource ChunkIdSource::from_entropy() {
  std::random_device rd;
  return ChunkIdSource((static_cast<std::uint64_t>(rd()) << 32) | rd());
}

std::string ChunkIdSource::next() {
  boost::uuids::basic_random_generator<std::mt19937_64> gen(&engine_);
  return boost::uuids::to_string(gen());
}

ChunkManifest plan_chunks(const DomDocument& doc, const TokenEstimator& estimator, std::size_t budget,
                          std::size_t headroom, ChunkIdSource ids) {
  if (!(budget > headroom && headroom > 0)) {
    throw Error(ErrorCode::ConfigError, "chunk budget must exceed headroom, and headroom must be positive");
  }
  if (!estimator.estimate) throw Error(ErrorCode::ConfigError, "estimator has no function");
  ChunkManifest manifest;
  manifest.chunk_budget = budget;
  manifest.headroom = headroom;
  manifest.estimator = estimator.name;
  manifest.doctype = doc.doctype;
  TreePath path;
  collect_preserved(doc.root, FragmentContext{"#document", Namespace::Html, false}, path, manifest.preserved);

  Planner planner(manifest, estimator, budget, ids);
  std::string full = serialize_html(doc);
  std::size_t tokens = estimator.estimate(full);
  FragmentContext root_ctx{doc.root.name, Namespace::Html, false};
  if (tokens <= budget || doc.root.children.empty()) {
    planner.emit(ChunkAnchor{{}, 0, doc.root.children.size(), root_ctx, true}, std::move(full), tokens > budget,
                 tokens);
  } else {
    planner.split(doc.root, {}, root_ctx);
  }
  return manifest;
}

DomDocument reassemble(const ChunkManifest& manifest, const std::vector<Chunk>& chunks) {
  std::map<std::string, const Chunk*> supplied;
  for (const auto& chunk : chunks) {
    if (!manifest.anchors.contains(chunk.chunk_id)) throw Error(ErrorCode::UnknownChunk, chunk.chunk_id);
    if (!supplied.emplace(chunk.chunk_id, &chunk).second) {
      throw Error(ErrorCode::SpliceConflict, "chunk " + chunk.chunk_id + " supplied twice");
    }
  }
  for (const auto& chunk : manifest.chunks) {
    if (!supplied.contains(chunk.chunk_id)) throw Error(ErrorCode::MissingChunk, chunk.chunk_id);
  }

  DomDocument doc;
  for (const auto& [id, anchor] : manifest.anchors) {
    if (!anchor.whole_document) continue;
    if (manifest.anchors.size() != 1) {
      throw Error(ErrorCode::SpliceConflict, "whole-document chunk " + id + " alongside other chunks");
    }
    doc = parse_html(supplied.at(id)->html);
    restore_preserved(doc.root.children, anchor.context, {}, 0, SIZE_MAX, manifest.preserved);
    return doc;
  }

  std::map<TreePath, std::size_t> shell_index;
  std::vector<std::vector<Slot>> slots(manifest.shells.size());
  for (std::size_t i = 0; i < manifest.shells.size(); ++i) {
    shell_index.emplace(manifest.shells[i].path, i);
    slots[i].resize(manifest.shells[i].child_count);
  }
  if (!shell_index.contains(TreePath{})) throw Error(ErrorCode::SpliceConflict, "manifest has no root element");

  for (std::size_t i = 0; i < manifest.shells.size(); ++i) {
    const TreePath& path = manifest.shells[i].path;
    if (path.empty()) continue;
    TreePath parent(path.begin(), path.end() - 1);
    auto it = shell_index.find(parent);
    if (it == shell_index.end() || path.back() >= slots[it->second].size()) {
      throw Error(ErrorCode::SpliceConflict, "split element " + format_path(path) + " has no parent");
    }
    Slot& slot = slots[it->second][path.back()];
    if (slot.kind != Slot::Empty) throw Error(ErrorCode::SpliceConflict, "overlap at " + format_path(path));
    slot.kind = Slot::Shell;
    slot.shell = i;
  }

  for (const auto& [id, anchor] : manifest.anchors) {
    auto it = shell_index.find(anchor.parent);
    if (it == shell_index.end()) {
      throw Error(ErrorCode::SpliceConflict, "chunk " + id + " anchors at " + format_path(anchor.parent) +
                                                 ", which is not a split element");
    }
    const ElementShell& shell = manifest.shells[it->second];
    if (anchor.context.name != shell.name) {
      throw Error(ErrorCode::SpliceConflict, "chunk " + id + " expects <" + anchor.context.name + "> but " +
                                                 format_path(anchor.parent) + " is <" + shell.name + ">");
    }
    auto& row = slots[it->second];
    if (anchor.count == 0 || anchor.first + anchor.count > row.size()) {
      throw Error(ErrorCode::SpliceConflict, "chunk " + id + " covers children outside " + format_path(anchor.parent));
    }
    for (std::size_t k = anchor.first; k < anchor.first + anchor.count; ++k) {
      if (row[k].kind != Slot::Empty) {
        throw Error(ErrorCode::SpliceConflict, "overlap at " + format_path(child_path(anchor.parent, k)));
      }
      row[k].kind = k == anchor.first ? Slot::ChunkStart : Slot::ChunkContinued;
    }
    std::vector<DomNode> nodes = parse_fragment(supplied.at(id)->html, anchor.context);
    restore_preserved(nodes, anchor.context, anchor.parent, anchor.first, anchor.count, manifest.preserved);
    row[anchor.first].nodes = std::move(nodes);
  }

  doc.root = materialize(manifest.shells, slots, shell_index.at(TreePath{}));
  doc.doctype = manifest.doctype;
  return doc;
}

RoundTripResult verify_roundtrip(const DomDocument& doc, const TokenEstimator& estimator, std::size_t budget,
                                 std::size_t headroom, std::uint64_t ted_pair_limit) {
  ChunkManifest manifest = plan_chunks(doc, estimator, budget, headroom, ChunkIdSource(0));
  DomDocument rebuilt = reassemble(manifest, manifest.chunks);
  RoundTripResult result;
  result.chunk_count = manifest.chunks.size();
  result.ok = tree_equal(doc.root, rebuilt.root);
  std::uint64_t pairs = static_cast<std::uint64_t>(node_count(doc.root)) * node_count(rebuilt.root);
  if (pairs <= ted_pair_limit) result.ted = tree_edit_distance(doc.root, rebuilt.root);
  return result;
}

nlohmann::ordered_json manifest_to_json(const ChunkManifest& manifest) {
  nlohmann::ordered_json out;
  out["page_id"] = manifest.page_id;
  out["chunk_budget"] = manifest.chunk_budget;
  out["headroom"] = manifest.headroom;
  out["estimator"] = manifest.estimator;
  out["doctype"] = manifest.doctype ? nlohmann::ordered_json(*manifest.doctype) : nlohmann::ordered_json();
  auto chunks = nlohmann::ordered_json::array();
  for (const auto& chunk : manifest.chunks) {
    nlohmann::ordered_json c;
    c["chunk_id"] = chunk.chunk_id;
    c["ordinal"] = chunk.ordinal;
    c["token_count"] = chunk.token_count;
    c["oversize"] = chunk.oversize;
    c["file"] = chunk_file_name(chunk);
    chunks.push_back(std::move(c));
  }
  out["chunks"] = std::move(chunks);
  auto anchors = nlohmann::ordered_json::object();
  for (const auto& chunk : manifest.chunks) {
    const ChunkAnchor& anchor = manifest.anchors.at(chunk.chunk_id);
    nlohmann::ordered_json a;
    a["parent"] = format_path(anchor.parent);
    a["first"] = anchor.first;
    a["count"] = anchor.count;
    a["context"] = context_to_json(anchor.context);
    a["whole_document"] = anchor.whole_document;
    anchors[chunk.chunk_id] = std::move(a);
  }
  out["anchors"] = std::move(anchors);
  auto shells = nlohmann::ordered_json::array();
  for (const auto& shell : manifest.shells) {
    nlohmann::ordered_json s;
    s["path"] = format_path(shell.path);
    s["name"] = shell.name;
    s["attrs"] = attrs_to_json(shell.attrs);
    s["child_count"] = shell.child_count;
    shells.push_back(std::move(s));
  }
  out["shells"] = std::move(shells);
  auto preserved = nlohmann::ordered_json::array();
  for (const auto& p : manifest.preserved) {
    nlohmann::ordered_json e;
    e["path"] = format_path(p.path);
    e["kind"] = to_string(p.kind);
    e["context"] = context_to_json(p.context);
    e["html_base64"] = base64_encode(p.html);
    preserved.push_back(std::move(e));
  }
  out["preserved"] = std::move(preserved);
  return out;
}

ChunkManifest manifest_from_json(const nlohmann::ordered_json& json) {
  try {
    ChunkManifest manifest;
    manifest.page_id = json.at("page_id").get<std::string>();
    manifest.chunk_budget = json.at("chunk_budget").get<std::size_t>();
    manifest.headroom = json.at("headroom").get<std::size_t>();
    manifest.estimator = json.at("estimator").get<std::string>();
    if (!json.at("doctype").is_null()) manifest.doctype = json.at("doctype").get<std::string>();
    for (const auto& c : json.at("chunks")) {
      Chunk chunk;
      chunk.chunk_id = c.at("chunk_id").get<std::string>();
      chunk.ordinal = c.at("ordinal").get<std::size_t>();
      chunk.token_count = c.at("token_count").get<std::size_t>();
      chunk.oversize = c.value("oversize", false);
      manifest.chunks.push_back(std::move(chunk));
    }
    for (const auto& [id, a] : json.at("anchors").items()) {
      ChunkAnchor anchor;
      anchor.parent = parse_path(a.at("parent").get<std::string>());
      anchor.first = a.at("first").get<std::size_t>();
      anchor.count = a.at("count").get<std::size_t>();
      anchor.context = context_from_json(a.at("context"));
      anchor.whole_document = a.value("whole_document", false);
      manifest.anchors.emplace(id, std::move(anchor));
    }
    for (const auto& s : json.at("shells")) {
      manifest.shells.push_back({parse_path(s.at("path").get<std::string>()), s.at("name").get<std::string>(),
                                 attrs_from_json(s.at("attrs")), s.at("child_count").get<std::size_t>()});
    }
    for (const auto& p : json.at("preserved")) {
      manifest.preserved.push_back({parse_path(p.at("path").get<std::string>()),
                                    node_kind_from_string(p.at("kind").get<std::string>()),
                                    base64_decode(p.at("html_base64").get<std::string>()),
                                    context_from_json(p.at("context"))});
    }
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ReportParse, std::string("malformed chunk manifest: ") + e.what());
  }
}

std::string chunk_file_name(const Chunk& chunk) {
  return std::to_string(chunk.ordinal) + "_" + chunk.chunk_id + ".html";
}

void save_manifest(const ChunkManifest& manifest, const std::filesystem::path& dir) {
  for (const auto& chunk : manifest.chunks) write_file_atomic(dir / chunk_file_name(chunk), chunk.html);
  write_file_atomic(dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
}

ChunkManifest load_manifest(const std::filesystem::path& dir) {
  auto text = read_file(dir / "manifest.json");
  nlohmann::ordered_json json;
  try {
    json = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ReportParse, "malformed " + (dir / "manifest.json").string() + ": " + e.what());
  }
  ChunkManifest manifest = manifest_from_json(json);
  for (auto& chunk : manifest.chunks) chunk.html = read_file(dir / chunk_file_name(chunk));
  return manifest;
}

}  // namespace domremedy
