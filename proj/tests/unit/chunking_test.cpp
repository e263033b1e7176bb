#include <random>
#include <set>

#include <gtest/gtest.h>

#include "domremedy/chunking.hpp"
#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "domremedy/util.hpp"
#include "oracles.hpp"
#include "test_paths.hpp"

using namespace domremedy;

namespace {

std::string long_page(int paragraphs) {
  std::string html = "<!DOCTYPE html><html lang=en><head><title>t</title><style>p{}</style></head><body><main>";
  for (int i = 0; i < paragraphs; ++i) {
    html += "<section id=s" + std::to_string(i) + "><h2>Heading " + std::to_string(i) +
            "</h2><p>Some text that goes on for a while, number " + std::to_string(i) + ".</p></section>";
  }
  html += "<script>var x = 1 < 2;</script></main></body></html>";
  return html;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

}  // namespace

TEST(Estimator, CountsBytesAndWords) {
  TokenEstimator est = default_estimator();
  EXPECT_EQ(est.name, "approx-bpe");
  EXPECT_EQ(est.estimate(""), 0u);
  EXPECT_EQ(est.estimate("abcd"), 1u);
  EXPECT_EQ(est.estimate("abcde"), 2u);
  EXPECT_EQ(estimator_by_name("approx-bpe").name, "approx-bpe");
  EXPECT_EQ(code_of([] { estimator_by_name("nope"); }), ErrorCode::ConfigError);
}

TEST(Estimator, CustomEstimatorsRegister) {
  register_estimator({"bytes", [](std::string_view s) { return s.size(); }, 0});
  EXPECT_EQ(estimator_by_name("bytes").estimate("abc"), 3u);
}

TEST(Chunking, SmallPageIsOneWholeDocumentChunk) {
  DomDocument doc = parse_html(long_page(2));
  ChunkManifest m = plan_chunks(doc, default_estimator(), 15000, 1000, ChunkIdSource(1));
  ASSERT_EQ(m.chunks.size(), 1u);
  EXPECT_TRUE(m.anchors.at(m.chunks[0].chunk_id).whole_document);
  EXPECT_TRUE(tree_equal(reassemble(m, m.chunks).root, doc.root));
}

TEST(Chunking, LargePageSplitsUnderBudget) {
  DomDocument doc = parse_html(long_page(200));
  TokenEstimator est = default_estimator();
  ChunkManifest m = plan_chunks(doc, est, 600, 50, ChunkIdSource(1));
  EXPECT_GT(m.chunks.size(), 5u);
  for (const auto& c : m.chunks) {
    EXPECT_LE(est.estimate(c.html), 600u);
    EXPECT_EQ(c.token_count, est.estimate(c.html));
    EXPECT_FALSE(c.oversize);
  }
  EXPECT_TRUE(tree_equal(reassemble(m, m.chunks).root, doc.root));
}

TEST(Chunking, DroppedScriptsAreRestoredAndEditsKept) {
  DomDocument doc = parse_html(long_page(200));
  ChunkManifest m = plan_chunks(doc, default_estimator(), 600, 50, ChunkIdSource(1));
  EXPECT_FALSE(m.preserved.empty());
  const std::string script = "<script>var x = 1 < 2;</script>";
  std::vector<Chunk> dropped = m.chunks;
  std::vector<Chunk> edited = m.chunks;
  bool found = false;
  for (std::size_t i = 0; i < m.chunks.size(); ++i) {
    if (auto pos = m.chunks[i].html.find(script); pos != std::string::npos) {
      dropped[i].html.erase(pos, script.size());
      edited[i].html.replace(pos + 8, 9, "var y = 2");
      found = true;
    }
  }
  ASSERT_TRUE(found);
  EXPECT_TRUE(tree_equal(reassemble(m, dropped).root, doc.root));
  std::string out = serialize_html(reassemble(m, edited));
  EXPECT_NE(out.find("var y = 2"), std::string::npos);
  EXPECT_EQ(out.find("var x = 1"), std::string::npos);
}

TEST(Chunking, ChunksMayArriveInAnyOrder) {
  DomDocument doc = parse_html(long_page(100));
  ChunkManifest m = plan_chunks(doc, default_estimator(), 500, 50, ChunkIdSource(2));
  std::vector<Chunk> shuffled = m.chunks;
  std::mt19937_64 rng(4);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_TRUE(tree_equal(reassemble(m, shuffled).root, doc.root));
}

TEST(Chunking, EditedChunkLandsInPlace) {
  DomDocument doc = parse_html(long_page(100));
  ChunkManifest m = plan_chunks(doc, default_estimator(), 500, 50, ChunkIdSource(2));
  ASSERT_GT(m.chunks.size(), 2u);
  std::vector<Chunk> edited = m.chunks;
  std::size_t pos = edited[1].html.find("Some text");
  ASSERT_NE(pos, std::string::npos);
  edited[1].html.replace(pos, 9, "Other words");
  std::string out = serialize_html(reassemble(m, edited));
  EXPECT_NE(out.find("Other words"), std::string::npos);
  EXPECT_EQ(node_count(parse_html(out).root), node_count(doc.root));
}

TEST(Chunking, MissingUnknownAndDuplicateChunks) {
  DomDocument doc = parse_html(long_page(100));
  ChunkManifest m = plan_chunks(doc, default_estimator(), 500, 50, ChunkIdSource(2));
  std::vector<Chunk> missing(m.chunks.begin() + 1, m.chunks.end());
  EXPECT_EQ(code_of([&] { reassemble(m, missing); }), ErrorCode::MissingChunk);
  std::vector<Chunk> unknown = m.chunks;
  unknown[0].chunk_id = "not-a-chunk";
  EXPECT_EQ(code_of([&] { reassemble(m, unknown); }), ErrorCode::UnknownChunk);
  std::vector<Chunk> twice = m.chunks;
  twice.push_back(m.chunks[0]);
  EXPECT_EQ(code_of([&] { reassemble(m, twice); }), ErrorCode::SpliceConflict);
}

TEST(Chunking, UnsplittableNodeIsFlaggedOversize) {
  std::string word(4000, 'a');
  DomDocument doc = parse_html("<p>" + word + "</p>");
  ChunkManifest m = plan_chunks(doc, default_estimator(), 300, 20, ChunkIdSource(1));
  bool flagged = false;
  for (const auto& c : m.chunks) flagged = flagged || c.oversize;
  EXPECT_TRUE(flagged);
  EXPECT_TRUE(tree_equal(reassemble(m, m.chunks).root, doc.root));
}

TEST(Chunking, BadBudgetIsAConfigError) {
  DomDocument doc = parse_html("<p>x</p>");
  EXPECT_EQ(code_of([&] { plan_chunks(doc, default_estimator(), 100, 100); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { plan_chunks(doc, default_estimator(), 100, 0); }), ErrorCode::ConfigError);
}

TEST(Chunking, SeededIdsAreStableUuids) {
  DomDocument doc = parse_html(long_page(100));
  ChunkManifest a = plan_chunks(doc, default_estimator(), 500, 50, ChunkIdSource(9, "page"));
  ChunkManifest b = plan_chunks(doc, default_estimator(), 500, 50, ChunkIdSource(9, "page"));
  ChunkManifest c = plan_chunks(doc, default_estimator(), 500, 50, ChunkIdSource(9, "other"));
  ASSERT_EQ(a.chunks.size(), b.chunks.size());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.chunks.size(); ++i) {
    EXPECT_EQ(a.chunks[i].chunk_id, b.chunks[i].chunk_id);
    EXPECT_NE(a.chunks[i].chunk_id, c.chunks[i].chunk_id);
    EXPECT_EQ(a.chunks[i].chunk_id.size(), 36u);
    EXPECT_EQ(a.chunks[i].chunk_id[14], '4');
    ids.insert(a.chunks[i].chunk_id);
  }
  EXPECT_EQ(ids.size(), a.chunks.size());
}

TEST(Chunking, ManifestSavesAndLoads) {
  DomDocument doc = parse_html(long_page(100));
  ChunkManifest m = plan_chunks(doc, default_estimator(), 500, 50, ChunkIdSource(3));
  m.page_id = "p";
  auto dir = testpaths::scratch("manifest");
  save_manifest(m, dir);
  ChunkManifest loaded = load_manifest(dir);
  EXPECT_EQ(manifest_to_json(loaded), manifest_to_json(m));
  ASSERT_EQ(loaded.chunks.size(), m.chunks.size());
  for (std::size_t i = 0; i < m.chunks.size(); ++i) EXPECT_EQ(loaded.chunks[i].html, m.chunks[i].html);
  EXPECT_TRUE(tree_equal(reassemble(loaded, loaded.chunks).root, doc.root));
  std::filesystem::remove_all(dir);
}

TEST(Chunking, RoundTripOnFixturePagesAtSeveralBudgets) {
  for (const auto& entry : std::filesystem::directory_iterator(testpaths::kFixtures / "pages")) {
    DomDocument doc = parse_html(read_file(entry.path()));
    for (std::size_t budget : {15000u, 2000u, 300u}) {
      RoundTripResult r = verify_roundtrip(doc, default_estimator(), budget, budget / 10);
      EXPECT_TRUE(r.ok) << entry.path() << " at " << budget;
    }
  }
}

TEST(Chunking, RoundTripOnRandomDocuments) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    DomDocument doc = parse_html(oracle::random_document(rng, 10 + i % 80));
    std::size_t budget = 40 + (i * 37) % 300;
    RoundTripResult r = verify_roundtrip(doc, default_estimator(), budget, budget / 10);
    ASSERT_TRUE(r.ok) << i;
    if (r.ted) EXPECT_EQ(*r.ted, 0u);
  }
}
