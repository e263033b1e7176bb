#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domremedy/dom.hpp"
#include "json.hpp"

namespace domremedy {

enum class ChangeKind {
  AttributeAdded,
  AttributeRemoved,
  ElementAdded,
  ElementRemoved,
  TypeChanged,
  AttrValueChanged,
  TagChanged,
  PositionChanged,
  TextChanged,
};

inline constexpr std::size_t kChangeKindCount = 9;
std::string_view to_string(ChangeKind kind);
ChangeKind change_kind_from_string(std::string_view name);

struct Change {
  ChangeKind kind = ChangeKind::ElementAdded;
  // Path in the original tree; for ElementAdded, the path in the modified tree.
  TreePath path;
  std::size_t depth = 0;
  std::optional<nlohmann::ordered_json> before;
  std::optional<nlohmann::ordered_json> after;
};

struct DepthSummary {
  std::optional<std::size_t> min;
  std::optional<std::size_t> max;
  std::optional<std::size_t> median;  // lower median
};

struct ChangeSet {
  std::string page_id;
  std::string model_id;
  std::vector<Change> changes;
  std::array<std::size_t, kChangeKindCount> counts{};
  DepthSummary depth;

  std::size_t count(ChangeKind kind) const { return counts[static_cast<std::size_t>(kind)]; }
  bool empty() const { return changes.empty(); }
};

// Position-independent subtree hash over kind, name, attributes (as a map),
// text and children.
std::uint64_t subtree_fingerprint(const DomNode& node);

// Children are aligned by the longest common subsequence of fingerprints,
// computed with the child list whose fingerprint sequence is smaller on the
// left and the lexicographically first pair sequence among the longest.
// Leftover identical subtrees pair up in order as moves, the rest pair up in
// order within each gap between aligned children, and whatever is left over is
// added or removed. A paired node at another sibling index is a position change.
ChangeSet diff_trees(const DomNode& original, const DomNode& modified);

// Rebuilds the modified tree from the original and a change set.
DomNode apply_changes(const DomNode& original, const ChangeSet& changes);

DepthSummary depth_summary(std::span<const std::size_t> depths);
DepthSummary depth_summary(const ChangeSet& cs);

struct ModificationMetrics {
  std::optional<double> eatrr;
  std::optional<double> pcd;
};

ModificationMetrics modification_metrics(const ChangeSet& cs);
// Same ratios from raw tallies.
ModificationMetrics modification_metrics(std::size_t added, std::size_t removed, std::size_t attr_values,
                                         std::size_t tags, std::size_t positions, std::size_t texts);

enum class MetricsAggregation { Pooled, PerPageMean };
std::string_view to_string(MetricsAggregation mode);

// Pooled sums counts over all sets; PerPageMean averages the defined per-set ratios.
ModificationMetrics aggregate_metrics(std::span<const ChangeSet> sets, MetricsAggregation mode);
// Counts and depths of several sets, as one set.
ChangeSet pool_changes(std::span<const ChangeSet> sets);

nlohmann::ordered_json changeset_to_json(const ChangeSet& cs);
ChangeSet changeset_from_json(const nlohmann::ordered_json& json);

}  // namespace domremedy
