#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "domremedy/dom.hpp"
#include "domremedy/html.hpp"
#include "json.hpp"

namespace domremedy {

struct TokenEstimator {
  std::string name;
  std::function<std::size_t(std::string_view)> estimate;
  // Known bound on estimate(a + b) - estimate(a) - estimate(b). When set,
  // sibling packing trusts the bound instead of re-estimating every join.
  std::optional<std::size_t> join_slack;
};

// "approx-bpe": ceil(utf8_bytes / 4) + words / 8, words being maximal runs of
// non-whitespace. An approximation of BPE tokenizers, not a tokenizer.
TokenEstimator default_estimator();
// Exact tokenizers can be plugged in under their own name.
void register_estimator(TokenEstimator estimator);
TokenEstimator estimator_by_name(std::string_view name);

inline constexpr std::size_t kDefaultChunkBudget = 15000;
inline constexpr std::size_t kDefaultHeadroom = 1000;

// Seedable source of version-4 UUID strings.
class ChunkIdSource {
 public:
  explicit ChunkIdSource(std::uint64_t seed, std::string_view salt = {});
  static ChunkIdSource from_entropy();
  std::string next();

 private:
  std::mt19937_64 engine_;
};

// Where a chunk's nodes live: children [first, first + count) of the element
// at `parent`, parsed in `context`. A whole_document chunk is the complete
// serialized document.
struct ChunkAnchor {
  TreePath parent;
  std::size_t first = 0;
  std::size_t count = 0;
  FragmentContext context;
  bool whole_document = false;
};

struct Chunk {
  std::string chunk_id;
  std::string html;
  std::size_t token_count = 0;
  std::size_t ordinal = 0;
  bool oversize = false;  // a single unsplittable node above the budget
};

// An element whose children were split across chunks. It is never sent to a
// model; reassembly rebuilds it from this record.
struct ElementShell {
  TreePath path;
  std::string name;
  Attributes attrs;
  std::size_t child_count = 0;
};

// Original script/style element, serialized, keyed by its path.
struct PreservedElement {
  TreePath path;
  NodeKind kind = NodeKind::Script;
  std::string html;
  FragmentContext context;  // the parent it is parsed back under
};

struct ChunkManifest {
  std::string page_id;
  std::size_t chunk_budget = kDefaultChunkBudget;
  std::size_t headroom = kDefaultHeadroom;
  std::string estimator;
  std::optional<std::string> doctype;
  std::vector<Chunk> chunks;
  std::map<std::string, ChunkAnchor> anchors;
  std::vector<ElementShell> shells;
  std::vector<PreservedElement> preserved;
};

ChunkManifest plan_chunks(const DomDocument& doc, const TokenEstimator& estimator,
                          std::size_t budget = kDefaultChunkBudget, std::size_t headroom = kDefaultHeadroom,
                          ChunkIdSource ids = ChunkIdSource::from_entropy());

// `chunks` may come in any order; anchors drive the splice.
DomDocument reassemble(const ChunkManifest& manifest, const std::vector<Chunk>& chunks);

struct RoundTripResult {
  bool ok = false;
  std::optional<std::size_t> ted;  // omitted when the trees are too large to diff
  std::size_t chunk_count = 0;
};

inline constexpr std::uint64_t kVerifyTedPairLimit = 4'000'000;

RoundTripResult verify_roundtrip(const DomDocument& doc, const TokenEstimator& estimator,
                                 std::size_t budget = kDefaultChunkBudget, std::size_t headroom = kDefaultHeadroom,
                                 std::uint64_t ted_pair_limit = kVerifyTedPairLimit);

nlohmann::ordered_json manifest_to_json(const ChunkManifest& manifest);
// Chunk html is not part of the JSON; it comes from the chunk files.
ChunkManifest manifest_from_json(const nlohmann::ordered_json& json);

std::string chunk_file_name(const Chunk& chunk);
void save_manifest(const ChunkManifest& manifest, const std::filesystem::path& dir);
ChunkManifest load_manifest(const std::filesystem::path& dir);

}  // namespace domremedy
