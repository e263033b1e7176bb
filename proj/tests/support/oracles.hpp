#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "domremedy/diff.hpp"
#include "domremedy/dom.hpp"

namespace oracle {

using domremedy::DomNode;

// Small trees over a tiny alphabet so that equal labels and equal subtrees
// are common. The root is always an element.
DomNode random_tree(std::mt19937_64& rng, std::size_t nodes);
// A copy of `tree` after a few random inserts, deletes, relabels and moves,
// never growing past `max_nodes`.
DomNode mutate(const DomNode& tree, std::mt19937_64& rng, std::size_t max_nodes);

// Markup for a whole document with random nesting, attributes, entities,
// comments, scripts and styles.
std::string random_document(std::mt19937_64& rng, std::size_t elements);

// Minimum over all order and ancestry preserving node mappings of
// unmapped nodes plus relabelled pairs.
std::size_t brute_force_ted(const DomNode& a, const DomNode& b);

struct OracleChange {
  domremedy::ChangeKind kind;
  std::string path;
  bool operator==(const OracleChange&) const = default;
  auto operator<=>(const OracleChange&) const = default;
};

// Child alignment by exhaustive search over all common subsequences of
// identical subtrees, with the same tie-breaking, move pairing and gap
// pairing rules as the differ under test.
std::vector<OracleChange> brute_force_diff(const DomNode& a, const DomNode& b);
std::array<std::size_t, domremedy::kChangeKindCount> kind_counts(const std::vector<OracleChange>& changes);

// Average ranks by counting, then Pearson on the ranks with two-pass sums.
double naive_spearman(std::span<const double> x, std::span<const double> y);

}  // namespace oracle
