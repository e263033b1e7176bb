#include <atomic>

#include <gtest/gtest.h>

#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "domremedy/remediation.hpp"
#include "domremedy/util.hpp"
#include "json.hpp"
#include "test_paths.hpp"

using namespace domremedy;

namespace {

std::vector<AuditRecord> sample_audits() {
  AuditRecord lang;
  lang.id = "html-has-lang";
  lang.title = "<html> element does not have a [lang] attribute";
  lang.mode = DisplayMode::Binary;
  lang.mode_raw = "binary";
  lang.score = 0;
  AuditRecord lcp;
  lcp.id = "largest-contentful-paint";
  lcp.title = "Largest Contentful Paint";
  lcp.mode = DisplayMode::Numeric;
  lcp.mode_raw = "numeric";
  lcp.score = 0.4;
  lcp.display_value = "3.1 s";
  return {lang, lcp};
}

ChunkManifest two_chunk_manifest(DomDocument& doc) {
  std::string html = "<html><body>";
  for (int i = 0; i < 40; ++i) html += "<p>paragraph number " + std::to_string(i) + " with some words</p>";
  html += "</body></html>";
  doc = parse_html(html);
  return plan_chunks(doc, default_estimator(), 200, 20, ChunkIdSource(5));
}

ModelBackend scripted(std::function<std::string(const std::string&)> f) {
  ModelBackend b;
  b.model_id = "scripted";
  b.invoke = std::move(f);
  return b;
}

}  // namespace

TEST(Extract, FencedBlockWins) {
  auto f = extract_fragment("Here you go:\n```html\n<p lang=\"en\">x</p>\n```\nChanges:\n- added lang");
  EXPECT_EQ(trim(f.html), "<p lang=\"en\">x</p>");
}

TEST(Extract, LongestFenceIsChosen) {
  auto f = extract_fragment("```\n<b>a</b>\n```\n\n```html\n<div><p>longer</p></div>\n```\n");
  EXPECT_EQ(trim(f.html), "<div><p>longer</p></div>");
}

TEST(Extract, BareMarkupIsAccepted) {
  auto f = extract_fragment("Sure. <div><!-- added alt --><img alt=\"\"></div> Done.");
  EXPECT_EQ(f.html, "<div><!-- added alt --><img alt=\"\"></div>");
  EXPECT_EQ(f.notes, std::vector<std::string>{"added alt"});
}

TEST(Extract, NoMarkupThrows) {
  try {
    extract_fragment("I cannot help with that.");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoFragmentFound);
  }
}

TEST(Prompt, IsDeterministicAndCarriesTheChunk) {
  Chunk chunk;
  chunk.chunk_id = "c";
  chunk.html = "<p>hello</p>";
  auto audits = sample_audits();
  RemediationPrompt a = build_prompt(chunk, audits, {0, 2});
  RemediationPrompt b = build_prompt(chunk, audits, {0, 2});
  EXPECT_EQ(a.text, b.text);
  EXPECT_NE(a.text.find("<p>hello</p>"), std::string::npos);
  EXPECT_NE(a.audit_block.find("html-has-lang"), std::string::npos);
  EXPECT_NE(a.audit_block.find("Largest Contentful Paint"), std::string::npos);
  EXPECT_EQ(a.directives, prompt_directives());
  EXPECT_EQ(prompt_template_hash().size(), 64u);
}

TEST(Prompt, FenceOutgrowsBackticksInTheChunk) {
  Chunk chunk;
  chunk.html = "<pre>```code```</pre>";
  RemediationPrompt p = build_prompt(chunk, {}, {0, 1});
  EXPECT_EQ(trim(extract_fragment(identity_backend().invoke(p.text)).html), chunk.html);
}

TEST(Prompt, OverflowIsReported) {
  Chunk chunk;
  chunk.html = std::string(4000, 'x');
  try {
    build_prompt(chunk, {}, {0, 1}, PromptLimit{1500, 1000, default_estimator()});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ContextOverflow);
  }
}

TEST(Remediate, IdentityLeavesEveryChunkUnchanged) {
  DomDocument doc;
  ChunkManifest m = two_chunk_manifest(doc);
  ASSERT_GT(m.chunks.size(), 1u);
  auto audits = sample_audits();
  RemediationOptions options;
  options.parallelism = 3;
  auto results = remediate_page(m, audits, identity_backend(), options);
  ASSERT_EQ(results.size(), m.chunks.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    EXPECT_EQ(results[i].ordinal, i);
    EXPECT_EQ(results[i].status, ChunkStatus::Unchanged);
  }
  EXPECT_TRUE(tree_equal(reassemble(m, result_chunks(m, results)).root, doc.root));
}

TEST(Remediate, FailuresRejectOnlyTheirChunk) {
  DomDocument doc;
  ChunkManifest m = two_chunk_manifest(doc);
  std::atomic<int> calls{0};
  ModelBackend b = scripted([&](const std::string& prompt) -> std::string {
    ++calls;
    if (prompt.find("paragraph number 0 ") != std::string::npos) throw std::runtime_error("boom");
    if (prompt.find("paragraph number 39") != std::string::npos) return "no markup here";
    std::string html = extract_fragment(identity_backend().invoke(prompt)).html;
    std::size_t at = html.find("<p>");
    if (at != std::string::npos) html.insert(at + 2, " class=\"fixed\"");
    return "```html\n" + html + "<!-- added a class -->\n```\n";
  });
  RemediationOptions options;
  options.retries = 1;
  auto results = remediate_page(m, {}, b, options);
  std::size_t failing = 0;
  std::size_t empty = 0;
  std::size_t modified = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::string& html = m.chunks[i].html;
    if (html.find("paragraph number 0 ") != std::string::npos) {
      EXPECT_EQ(results[i].status, ChunkStatus::Rejected);
      EXPECT_EQ(results[i].transcript.attempts, 2u);
      ++failing;
    } else if (html.find("paragraph number 39") != std::string::npos) {
      EXPECT_EQ(results[i].status, ChunkStatus::Rejected);
      EXPECT_EQ(results[i].modified_html, html);
      ++empty;
    } else if (html.find("<p>") != std::string::npos) {
      EXPECT_EQ(results[i].status, ChunkStatus::Modified);
      EXPECT_EQ(results[i].change_notes, std::vector<std::string>{"added a class"});
      ++modified;
    }
  }
  EXPECT_EQ(failing, 1u);
  EXPECT_EQ(empty, 1u);
  EXPECT_GT(modified, 0u);
  std::string out = serialize_html(reassemble(m, result_chunks(m, results)));
  EXPECT_NE(out.find("class=\"fixed\""), std::string::npos);
}

TEST(Remediate, BackendLimitBelowBudgetIsAConfigError) {
  DomDocument doc;
  ChunkManifest m = two_chunk_manifest(doc);
  ModelBackend b = identity_backend();
  b.max_output_tokens = 100;
  try {
    remediate_page(m, {}, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Remediate, ReplayAnswersByPromptHash) {
  auto dir = testpaths::scratch("replay");
  Chunk chunk;
  chunk.html = "<p>x</p>";
  std::string prompt = build_prompt(chunk, {}, {0, 1}).text;
  nlohmann::ordered_json record{{"prompt_sha256", sha256_hex(prompt)}, {"completion", "```html\n<p lang=en>x</p>\n```"}};
  write_file_atomic(dir / "one.json", record.dump());
  ModelBackend b = replay_backend("r", dir);
  EXPECT_EQ(b.invoke(prompt), record["completion"].get<std::string>());
  EXPECT_THROW(b.invoke(prompt + " "), Error);
  std::filesystem::remove_all(dir);
}

TEST(TokenBucket, LimitsBursts) {
  TokenBucket bucket(2, 0.001);
  EXPECT_TRUE(bucket.try_acquire());
  EXPECT_TRUE(bucket.try_acquire());
  EXPECT_FALSE(bucket.try_acquire());
}
