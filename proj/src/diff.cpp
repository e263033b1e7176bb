#include "domremedy/diff.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <unordered_map>

#include "domremedy/error.hpp"

namespace domremedy {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::string_view kKindNames[kChangeKindCount] = {
    "AttributeAdded", "AttributeRemoved", "ElementAdded",    "ElementRemoved", "TypeChanged",
    "AttrValueChanged", "TagChanged",     "PositionChanged", "TextChanged",
};

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= h >> 31;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 29;
  return h;
}

std::uint64_t hash_bytes(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix(h, s.size());
}

using FingerprintCache = std::unordered_map<const DomNode*, std::uint64_t>;

std::uint64_t fingerprint(const DomNode& node, FingerprintCache& cache) {
  if (auto it = cache.find(&node); it != cache.end()) return it->second;
  std::uint64_t h = mix(0, static_cast<std::uint64_t>(node.kind) + 1);
  h = mix(h, hash_bytes(node.name));
  Attributes attrs = node.attrs;
  std::sort(attrs.begin(), attrs.end());
  h = mix(h, attrs.size());
  for (const auto& [k, v] : attrs) h = mix(mix(h, hash_bytes(k)), hash_bytes(v));
  h = mix(h, hash_bytes(node.text));
  h = mix(h, node.children.size());
  for (const auto& child : node.children) h = mix(h, fingerprint(child, cache));
  cache.emplace(&node, h);
  return h;
}

Json label_json(const DomNode& n) {
  Json j;
  j["kind"] = to_string(n.kind);
  j["name"] = n.name;
  auto attrs = Json::array();
  for (const auto& [k, v] : n.attrs) attrs.push_back({k, v});
  j["attrs"] = std::move(attrs);
  j["text"] = n.text;
  return j;
}

using Pair = std::pair<std::size_t, std::size_t>;

// Lexicographically first longest common subsequence, as index pairs.
std::vector<Pair> lcs_pairs(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  std::vector<Pair> pairs;
  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) {
    pairs.emplace_back(prefix, prefix);
    ++prefix;
  }
  std::size_t n = a.size() - prefix;
  std::size_t m = b.size() - prefix;
  if (n == 0 || m == 0) return pairs;

  std::vector<std::uint32_t> table((n + 1) * (m + 1), 0);
  auto L = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return table[i * (m + 1) + j]; };
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      L(i, j) = a[prefix + i] == b[prefix + j] ? L(i + 1, j + 1) + 1 : std::max(L(i + 1, j), L(i, j + 1));
    }
  }
  std::size_t i = 0;
  std::size_t j = 0;
  while (L(i, j) > 0) {
    std::uint32_t need = L(i, j);
    bool found = false;
    for (std::size_t ii = i; ii < n && !found; ++ii) {
      for (std::size_t jj = j; jj < m; ++jj) {
        if (a[prefix + ii] == b[prefix + jj] && L(ii + 1, jj + 1) + 1 == need) {
          pairs.emplace_back(prefix + ii, prefix + jj);
          i = ii + 1;
          j = jj + 1;
          found = true;
          break;
        }
      }
    }
  }
  return pairs;
}

class Differ {
 public:
  std::vector<Change> changes;

  void compare(const DomNode& a, const DomNode& b, const TreePath& pa, const TreePath& pb) {
    if (a.kind != b.kind) {
      add(ChangeKind::TypeChanged, pa, label_json(a), label_json(b));
    } else {
      if (a.name != b.name) add(ChangeKind::TagChanged, pa, Json(a.name), Json(b.name));
      for (const auto& [k, v] : a.attrs) {
        const std::string* other = b.attr(k);
        if (!other) {
          add(ChangeKind::AttributeRemoved, pa, Json{{k, v}}, std::nullopt);
        } else if (*other != v) {
          add(ChangeKind::AttrValueChanged, pa, Json{{k, v}}, Json{{k, *other}});
        }
      }
      for (const auto& [k, v] : b.attrs) {
        if (!a.attr(k)) add(ChangeKind::AttributeAdded, pa, std::nullopt, Json{{k, v}});
      }
      if (a.text != b.text) add(ChangeKind::TextChanged, pa, Json(a.text), Json(b.text));
    }
    align(a.children, b.children, pa, pb);
  }

 private:
  FingerprintCache cache_;

  void add(ChangeKind kind, const TreePath& path, std::optional<Json> before, std::optional<Json> after) {
    changes.push_back({kind, path, path.size(), std::move(before), std::move(after)});
  }

  void align(const std::vector<DomNode>& a, const std::vector<DomNode>& b, const TreePath& pa, const TreePath& pb) {
    if (a.empty() && b.empty()) return;
    std::vector<std::uint64_t> fa;
    std::vector<std::uint64_t> fb;
    for (const auto& n : a) fa.push_back(fingerprint(n, cache_));
    for (const auto& n : b) fb.push_back(fingerprint(n, cache_));

    std::vector<Pair> anchors;
    if (fa <= fb) {
      anchors = lcs_pairs(fa, fb);
    } else {
      for (auto [j, i] : lcs_pairs(fb, fa)) anchors.emplace_back(i, j);
    }

    constexpr std::size_t kNone = SIZE_MAX;
    std::vector<std::size_t> partner_a(a.size(), kNone);
    std::vector<std::size_t> partner_b(b.size(), kNone);
    std::vector<bool> identical(a.size(), false);
    for (auto [i, j] : anchors) {
      partner_a[i] = j;
      partner_b[j] = i;
      identical[i] = true;
    }

    std::map<std::uint64_t, std::deque<std::size_t>> waiting;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (partner_b[j] == kNone) waiting[fb[j]].push_back(j);
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (partner_a[i] != kNone) continue;
      auto it = waiting.find(fa[i]);
      if (it == waiting.end() || it->second.empty()) continue;
      std::size_t j = it->second.front();
      it->second.pop_front();
      partner_a[i] = j;
      partner_b[j] = i;
      identical[i] = true;
    }

    // Pair the leftovers in order within each gap between anchors.
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t g = 0; g <= anchors.size(); ++g) {
      std::size_t end_a = g < anchors.size() ? anchors[g].first : a.size();
      std::size_t end_b = g < anchors.size() ? anchors[g].second : b.size();
      std::vector<std::size_t> left;
      std::vector<std::size_t> right;
      for (; ia < end_a; ++ia) {
        if (partner_a[ia] == kNone) left.push_back(ia);
      }
      for (; ib < end_b; ++ib) {
        if (partner_b[ib] == kNone) right.push_back(ib);
      }
      for (std::size_t k = 0; k < left.size() && k < right.size(); ++k) {
        partner_a[left[k]] = right[k];
        partner_b[right[k]] = left[k];
      }
      ++ia;
      ++ib;
    }

    for (std::size_t i = 0; i < a.size(); ++i) {
      TreePath path = pa;
      path.push_back(i);
      std::size_t j = partner_a[i];
      if (j == kNone) {
        add(ChangeKind::ElementRemoved, path, to_json(a[i]), std::nullopt);
        continue;
      }
      TreePath target = pb;
      target.push_back(j);
      if (i != j) add(ChangeKind::PositionChanged, path, Json(format_path(path)), Json(format_path(target)));
      if (!identical[i]) compare(a[i], b[j], path, target);
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (partner_b[j] != kNone) continue;
      TreePath path = pb;
      path.push_back(j);
      add(ChangeKind::ElementAdded, path, std::nullopt, to_json(b[j]));
    }
  }
};

void finish(ChangeSet& cs) {
  cs.counts.fill(0);
  std::vector<std::size_t> depths;
  for (const auto& c : cs.changes) {
    ++cs.counts[static_cast<std::size_t>(c.kind)];
    depths.push_back(c.depth);
  }
  cs.depth = depth_summary(depths);
}

struct ChangeIndex {
  std::map<TreePath, std::vector<const Change*>> labels;
  std::map<TreePath, std::size_t> removed_or_moved;  // original path -> target index, SIZE_MAX if removed
  std::map<TreePath, std::vector<const Change*>> added;  // modified parent path -> additions
};

void apply_label(DomNode& node, const Change& c) {
  switch (c.kind) {
    case ChangeKind::TypeChanged: {
      const Json& after = *c.after;
      node.kind = node_kind_from_string(after.at("kind").get<std::string>());
      node.name = after.at("name").get<std::string>();
      node.attrs.clear();
      for (const auto& pair : after.at("attrs")) {
        node.attrs.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
      }
      node.text = after.at("text").get<std::string>();
      break;
    }
    case ChangeKind::TagChanged: node.name = c.after->get<std::string>(); break;
    case ChangeKind::AttributeAdded:
    case ChangeKind::AttrValueChanged:
      for (const auto& [k, v] : c.after->items()) node.set_attr(k, v.get<std::string>());
      break;
    case ChangeKind::AttributeRemoved:
      for (const auto& [k, v] : c.before->items()) {
        std::erase_if(node.attrs, [&](const Attribute& a) { return a.first == k; });
      }
      break;
    case ChangeKind::TextChanged: node.text = c.after->get<std::string>(); break;
    default: break;
  }
}

DomNode rebuild(const DomNode& original, const TreePath& opath, const TreePath& mpath, const ChangeIndex& index) {
  DomNode node;
  node.kind = original.kind;
  node.name = original.name;
  node.attrs = original.attrs;
  node.text = original.text;
  if (auto it = index.labels.find(opath); it != index.labels.end()) {
    for (const Change* c : it->second) apply_label(node, *c);
  }

  std::size_t kept = 0;
  std::vector<std::pair<std::size_t, std::size_t>> placement;  // original index -> modified index
  for (std::size_t i = 0; i < original.children.size(); ++i) {
    TreePath child = opath;
    child.push_back(i);
    auto it = index.removed_or_moved.find(child);
    if (it != index.removed_or_moved.end() && it->second == SIZE_MAX) continue;
    placement.emplace_back(i, it == index.removed_or_moved.end() ? i : it->second);
    ++kept;
  }
  const std::vector<const Change*>* additions = nullptr;
  if (auto it = index.added.find(mpath); it != index.added.end()) additions = &it->second;
  std::size_t total = kept + (additions ? additions->size() : 0);

  std::vector<std::optional<DomNode>> slots(total);
  auto place = [&](std::size_t at, DomNode n) {
    if (at >= total || slots[at]) {
      throw Error(ErrorCode::SpliceConflict, "change set does not fit " + format_path(mpath));
    }
    slots[at] = std::move(n);
  };
  for (auto [i, j] : placement) {
    TreePath child_o = opath;
    child_o.push_back(i);
    TreePath child_m = mpath;
    child_m.push_back(j);
    place(j, rebuild(original.children[i], child_o, child_m, index));
  }
  if (additions) {
    for (const Change* c : *additions) place(c->path.back(), node_from_json(*c->after));
  }
  for (auto& slot : slots) node.children.push_back(std::move(*slot));
  return node;
}

}  // namespace

std::string_view to_string(ChangeKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

ChangeKind change_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kChangeKindCount; ++i) {
    if (kKindNames[i] == name) return static_cast<ChangeKind>(i);
  }
  throw Error(ErrorCode::ReportParse, "unknown change kind '" + std::string(name) + "'");
}

std::uint64_t subtree_fingerprint(const DomNode& node) {
  FingerprintCache cache;
  return fingerprint(node, cache);
}

ChangeSet diff_trees(const DomNode& original, const DomNode& modified) {
  Differ differ;
  differ.compare(original, modified, {}, {});
  ChangeSet cs;
  cs.changes = std::move(differ.changes);
  finish(cs);
  return cs;
}

DomNode apply_changes(const DomNode& original, const ChangeSet& changes) {
  ChangeIndex index;
  for (const auto& c : changes.changes) {
    switch (c.kind) {
      case ChangeKind::ElementAdded: {
        if (c.path.empty()) throw Error(ErrorCode::SpliceConflict, "cannot add a root");
        TreePath parent(c.path.begin(), c.path.end() - 1);
        index.added[parent].push_back(&c);
        break;
      }
      case ChangeKind::ElementRemoved: index.removed_or_moved[c.path] = SIZE_MAX; break;
      case ChangeKind::PositionChanged:
        index.removed_or_moved[c.path] = parse_path(c.after->get<std::string>()).back();
        break;
      default: index.labels[c.path].push_back(&c);
    }
  }
  return rebuild(original, {}, {}, index);
}

DepthSummary depth_summary(std::span<const std::size_t> depths) {
  DepthSummary s;
  if (depths.empty()) return s;
  std::vector<std::size_t> sorted(depths.begin(), depths.end());
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.median = sorted[(sorted.size() - 1) / 2];
  return s;
}

DepthSummary depth_summary(const ChangeSet& cs) {
  std::vector<std::size_t> depths;
  for (const auto& c : cs.changes) depths.push_back(c.depth);
  return depth_summary(depths);
}

ModificationMetrics modification_metrics(std::size_t added, std::size_t removed, std::size_t attr_values,
                                         std::size_t tags, std::size_t positions, std::size_t texts) {
  ModificationMetrics m;
  if (added + removed > 0) m.eatrr = static_cast<double>(added) / static_cast<double>(added + removed);
  std::size_t values = attr_values + tags + positions + texts;
  if (values > 0) m.pcd = static_cast<double>(positions) / static_cast<double>(values);
  return m;
}

ModificationMetrics modification_metrics(const ChangeSet& cs) {
  return modification_metrics(cs.count(ChangeKind::ElementAdded), cs.count(ChangeKind::ElementRemoved),
                              cs.count(ChangeKind::AttrValueChanged), cs.count(ChangeKind::TagChanged),
                              cs.count(ChangeKind::PositionChanged), cs.count(ChangeKind::TextChanged));
}

std::string_view to_string(MetricsAggregation mode) {
  return mode == MetricsAggregation::Pooled ? "pooled" : "per_page_mean";
}

ChangeSet pool_changes(std::span<const ChangeSet> sets) {
  ChangeSet pooled;
  std::vector<std::size_t> depths;
  for (const auto& cs : sets) {
    if (pooled.model_id.empty()) pooled.model_id = cs.model_id;
    for (std::size_t k = 0; k < kChangeKindCount; ++k) pooled.counts[k] += cs.counts[k];
    for (const auto& c : cs.changes) depths.push_back(c.depth);
  }
  pooled.depth = depth_summary(depths);
  return pooled;
}

ModificationMetrics aggregate_metrics(std::span<const ChangeSet> sets, MetricsAggregation mode) {
  if (mode == MetricsAggregation::Pooled) return modification_metrics(pool_changes(sets));
  double eatrr_sum = 0;
  double pcd_sum = 0;
  std::size_t eatrr_n = 0;
  std::size_t pcd_n = 0;
  for (const auto& cs : sets) {
    auto m = modification_metrics(cs);
    if (m.eatrr) {
      eatrr_sum += *m.eatrr;
      ++eatrr_n;
    }
    if (m.pcd) {
      pcd_sum += *m.pcd;
      ++pcd_n;
    }
  }
  ModificationMetrics out;
  if (eatrr_n) out.eatrr = eatrr_sum / static_cast<double>(eatrr_n);
  if (pcd_n) out.pcd = pcd_sum / static_cast<double>(pcd_n);
  return out;
}

Json changeset_to_json(const ChangeSet& cs) {
  Json out;
  out["page_id"] = cs.page_id;
  out["model_id"] = cs.model_id;
  Json counts = Json::object();
  for (std::size_t k = 0; k < kChangeKindCount; ++k) counts[std::string(kKindNames[k])] = cs.counts[k];
  out["counts"] = std::move(counts);
  auto opt = [](const std::optional<std::size_t>& v) { return v ? Json(*v) : Json(); };
  out["depth"] = Json{{"min", opt(cs.depth.min)}, {"max", opt(cs.depth.max)}, {"median", opt(cs.depth.median)}};
  auto metrics = modification_metrics(cs);
  auto optd = [](const std::optional<double>& v) { return v ? Json(*v) : Json(); };
  out["eatrr"] = optd(metrics.eatrr);
  out["pcd"] = optd(metrics.pcd);
  auto list = Json::array();
  for (const auto& c : cs.changes) {
    Json j;
    j["kind"] = to_string(c.kind);
    j["path"] = format_path(c.path);
    j["depth"] = c.depth;
    if (c.before) j["before"] = *c.before;
    if (c.after) j["after"] = *c.after;
    list.push_back(std::move(j));
  }
  out["changes"] = std::move(list);
  return out;
}

ChangeSet changeset_from_json(const Json& json) {
  try {
    ChangeSet cs;
    cs.page_id = json.value("page_id", "");
    cs.model_id = json.value("model_id", "");
    for (const auto& j : json.at("changes")) {
      Change c;
      c.kind = change_kind_from_string(j.at("kind").get<std::string>());
      c.path = parse_path(j.at("path").get<std::string>());
      c.depth = c.path.size();
      if (j.contains("before")) c.before = j["before"];
      if (j.contains("after")) c.after = j["after"];
      cs.changes.push_back(std::move(c));
    }
    finish(cs);
    return cs;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ReportParse, std::string("malformed change set: ") + e.what());
  }
}

}  // namespace domremedy
