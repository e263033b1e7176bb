#include <random>

#include <gtest/gtest.h>

#include "domremedy/diff.hpp"
#include "domremedy/html.hpp"
#include "oracles.hpp"

using namespace domremedy;

namespace {

DomNode body(const std::string& html) {
  DomDocument doc = parse_html(html);
  return doc.root;
}

}  // namespace

TEST(Diff, IdenticalTreesHaveNoChanges) {
  DomNode t = body("<div class=a><p>x</p><!--c--></div>");
  ChangeSet cs = diff_trees(t, t);
  EXPECT_TRUE(cs.empty());
  EXPECT_FALSE(cs.depth.min);
}

TEST(Diff, AttributeAddedRemovedAndChanged) {
  ChangeSet cs = diff_trees(body("<p id=a class=x>t</p>"), body("<p id=b title=y>t</p>"));
  EXPECT_EQ(cs.count(ChangeKind::AttrValueChanged), 1u);
  EXPECT_EQ(cs.count(ChangeKind::AttributeRemoved), 1u);
  EXPECT_EQ(cs.count(ChangeKind::AttributeAdded), 1u);
  EXPECT_EQ(cs.changes.size(), 3u);
}

TEST(Diff, LangAttributeOnRoot) {
  ChangeSet cs = diff_trees(body("<html><body>x</body></html>"), body("<html lang=en><body>x</body></html>"));
  ASSERT_EQ(cs.changes.size(), 1u);
  EXPECT_EQ(cs.changes[0].kind, ChangeKind::AttributeAdded);
  EXPECT_EQ(cs.changes[0].path, TreePath{});
  EXPECT_EQ(cs.changes[0].depth, 0u);
}

TEST(Diff, InsertedElementShiftsNoOne) {
  DomNode a = DomNode::element("div", {}, {DomNode::element("p"), DomNode::element("span")});
  DomNode b = DomNode::element("div", {}, {DomNode::element("h1"), DomNode::element("p"), DomNode::element("span")});
  ChangeSet cs = diff_trees(a, b);
  EXPECT_EQ(cs.count(ChangeKind::ElementAdded), 1u);
  EXPECT_EQ(cs.count(ChangeKind::PositionChanged), 2u);
  EXPECT_EQ(cs.changes.size(), 3u);
}

TEST(Diff, TagAndTextChanges) {
  ChangeSet cs = diff_trees(body("<div><b>hello</b></div>"), body("<div><strong>hello there</strong></div>"));
  EXPECT_EQ(cs.count(ChangeKind::TagChanged), 1u);
  EXPECT_EQ(cs.count(ChangeKind::TextChanged), 1u);
}

TEST(Diff, TypeChangeReplacesLabelDiffs) {
  DomNode a = DomNode::element("div", {}, {DomNode::text_node("x")});
  DomNode b = DomNode::element("div", {}, {DomNode::comment("x")});
  ChangeSet cs = diff_trees(a, b);
  EXPECT_EQ(cs.count(ChangeKind::TypeChanged), 1u);
  EXPECT_EQ(cs.changes.size(), 1u);
}

TEST(Diff, SwappedSubtreesAreMoves) {
  DomNode p = DomNode::element("p", {}, {DomNode::text_node("one")});
  DomNode q = DomNode::element("q", {}, {DomNode::text_node("two")});
  DomNode r = DomNode::element("i", {}, {DomNode::text_node("three")});
  ChangeSet cs = diff_trees(DomNode::element("div", {}, {p, q, r}), DomNode::element("div", {}, {r, q, p}));
  EXPECT_EQ(cs.count(ChangeKind::ElementAdded), 0u);
  EXPECT_EQ(cs.count(ChangeKind::ElementRemoved), 0u);
  EXPECT_EQ(cs.count(ChangeKind::PositionChanged), 2u);
}

TEST(Diff, DepthSummaryUsesLowerMedian) {
  std::vector<std::size_t> depths{4, 1, 3, 2};
  DepthSummary d = depth_summary(depths);
  EXPECT_EQ(d.min, 1u);
  EXPECT_EQ(d.max, 4u);
  EXPECT_EQ(d.median, 2u);
  EXPECT_FALSE(depth_summary(std::vector<std::size_t>{}).median);
}

TEST(Diff, MatchesExhaustiveDiffer) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    DomNode a = oracle::random_tree(rng, 1 + i % 12);
    DomNode b = i % 4 == 3 ? oracle::random_tree(rng, 1 + (i / 3) % 12) : oracle::mutate(a, rng, 12);
    ChangeSet cs = diff_trees(a, b);
    ASSERT_EQ(cs.counts, oracle::kind_counts(oracle::brute_force_diff(a, b))) << i;
  }
}

TEST(Diff, ChangesRebuildTheModifiedTree) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 300; ++i) {
    DomNode a = oracle::random_tree(rng, 1 + i % 25);
    DomNode b = oracle::mutate(a, rng, 30);
    ASSERT_TRUE(tree_equal(apply_changes(a, diff_trees(a, b)), b)) << i;
  }
}

TEST(Diff, AdditionsAndRemovalsMirrorWhenSwapped) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 200; ++i) {
    DomNode a = oracle::random_tree(rng, 1 + i % 15);
    DomNode b = oracle::mutate(a, rng, 15);
    ChangeSet ab = diff_trees(a, b);
    ChangeSet ba = diff_trees(b, a);
    EXPECT_EQ(ab.count(ChangeKind::ElementAdded), ba.count(ChangeKind::ElementRemoved));
    EXPECT_EQ(ab.count(ChangeKind::ElementRemoved), ba.count(ChangeKind::ElementAdded));
    EXPECT_EQ(ab.count(ChangeKind::AttributeAdded), ba.count(ChangeKind::AttributeRemoved));
    EXPECT_EQ(ab.count(ChangeKind::TextChanged), ba.count(ChangeKind::TextChanged));
  }
}

TEST(Diff, JsonRoundTrip) {
  ChangeSet cs = diff_trees(body("<div><p id=a>x</p></div>"), body("<div><p id=b>y</p><hr></div>"));
  cs.page_id = "p";
  cs.model_id = "m";
  ChangeSet back = changeset_from_json(changeset_to_json(cs));
  EXPECT_EQ(changeset_to_json(back), changeset_to_json(cs));
  EXPECT_EQ(back.counts, cs.counts);
}

TEST(Metrics, RatiosFromCounts) {
  ModificationMetrics m = modification_metrics(9, 1, 2, 1, 3, 4);
  EXPECT_DOUBLE_EQ(*m.eatrr, 0.9);
  EXPECT_DOUBLE_EQ(*m.pcd, 0.3);
  ModificationMetrics none = modification_metrics(0, 0, 0, 0, 0, 0);
  EXPECT_FALSE(none.eatrr);
  EXPECT_FALSE(none.pcd);
}

TEST(Metrics, PooledAndPerPageMean) {
  ChangeSet a;
  a.counts[static_cast<std::size_t>(ChangeKind::ElementAdded)] = 3;
  a.counts[static_cast<std::size_t>(ChangeKind::ElementRemoved)] = 1;
  ChangeSet b;
  b.counts[static_cast<std::size_t>(ChangeKind::ElementAdded)] = 1;
  std::vector<ChangeSet> sets{a, b};
  ModificationMetrics pooled = aggregate_metrics(sets, MetricsAggregation::Pooled);
  ModificationMetrics mean = aggregate_metrics(sets, MetricsAggregation::PerPageMean);
  EXPECT_DOUBLE_EQ(*pooled.eatrr, 0.8);
  EXPECT_DOUBLE_EQ(*mean.eatrr, (0.75 + 1.0) / 2);
  EXPECT_EQ(pool_changes(sets).count(ChangeKind::ElementAdded), 4u);
}
