#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "ltc/embedding.hpp"

namespace ltc {

/// Anchor-indexed contrastive batch. Entries are laid out as all sample
/// views first, then (optionally) one class-center entry per class.
/// Anchors are the sample entries; index sets are kept in ascending order
/// so every reduction over them is order-fixed and reproducible.
struct ContrastiveBatch {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::vector<Embedding> entries;
  std::size_t sample_count = 0;

  // Per anchor i in [0, sample_count):
  std::vector<std::vector<std::size_t>> positives;   // P(i): same-class samples, i excluded
  std::vector<std::vector<std::size_t>> negatives;   // N(i): other-class samples and centers
  std::vector<std::vector<std::size_t>> candidates;  // A(i) = P(i) u N(i), ascending
  std::vector<std::size_t> center_index;             // own-class center entry, or npos

  std::map<int, std::size_t> class_counts;  // label -> training-set count N_j

  std::size_t dim() const { return entries.empty() ? 0 : entries.front().values.size(); }
  bool has_centers() const { return entries.size() > sample_count; }
};

/// Builds index sets for a batch of sample embeddings. No centers attached.
ContrastiveBatch build_batch(std::vector<Embedding> samples,
                             std::map<int, std::size_t> class_counts);

/// Appends center entries (view kCenterView) and rewires the index sets:
/// each anchor gains its own-class center as center_index and every
/// other-class center as an additional negative. Centers never enter A(i).
void attach_centers(ContrastiveBatch& batch, const std::vector<Embedding>& centers);

/// Checks every structural invariant (disjoint P/N, label agreement,
/// positive class counts, i not in A(i)). Throws std::invalid_argument
/// naming the first violation.
void validate_batch(const ContrastiveBatch& batch);

}  // namespace ltc
