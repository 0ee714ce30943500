#include "ltc/batch.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>

namespace ltc {

ContrastiveBatch build_batch(std::vector<Embedding> samples,
                             std::map<int, std::size_t> class_counts) {
  ContrastiveBatch b;
  b.sample_count = samples.size();
  b.entries = std::move(samples);
  b.class_counts = std::move(class_counts);
  const std::size_t n = b.sample_count;
  b.positives.resize(n);
  b.negatives.resize(n);
  b.candidates.resize(n);
  b.center_index.assign(n, ContrastiveBatch::npos);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (b.entries[j].label == b.entries[i].label)
        b.positives[i].push_back(j);
      else
        b.negatives[i].push_back(j);
      b.candidates[i].push_back(j);
    }
  }
  return b;
}

void attach_centers(ContrastiveBatch& batch, const std::vector<Embedding>& centers) {
  if (batch.has_centers())
    throw std::invalid_argument("centers already attached");
  const std::size_t base = batch.entries.size();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (centers[c].view != kCenterView)
      throw std::invalid_argument("center entry must carry the reserved center view");
    batch.entries.push_back(centers[c]);
  }
  for (std::size_t i = 0; i < batch.sample_count; ++i) {
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const std::size_t idx = base + c;
      if (centers[c].label == batch.entries[i].label)
        batch.center_index[i] = idx;
      else
        batch.negatives[i].push_back(idx);
    }
  }
}

void validate_batch(const ContrastiveBatch& batch) {
  const std::size_t n = batch.sample_count;
  if (batch.positives.size() != n || batch.negatives.size() != n ||
      batch.candidates.size() != n || batch.center_index.size() != n)
    throw std::invalid_argument("index-set shape mismatch");
  const std::size_t h = batch.dim();
  for (const auto& e : batch.entries)
    if (e.values.size() != h)
      throw std::invalid_argument("embedding dimension mismatch in batch");
  for (const auto& [label, count] : batch.class_counts)
    if (count == 0)
      throw std::invalid_argument("class count must be positive for class " +
                                  std::to_string(label));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = batch.entries[i].label;
    for (std::size_t p : batch.positives[i]) {
      if (p == i) throw std::invalid_argument("anchor inside its own P(i)");
      if (batch.entries[p].label != label)
        throw std::invalid_argument("P(i) entry with foreign label");
    }
    for (std::size_t m : batch.negatives[i]) {
      if (m == i) throw std::invalid_argument("anchor inside its own N(i)");
      if (batch.entries[m].label == label)
        throw std::invalid_argument("N(i) entry with anchor label");
      if (std::binary_search(batch.positives[i].begin(), batch.positives[i].end(), m))
        throw std::invalid_argument("P(i) and N(i) overlap");
    }
    for (std::size_t a : batch.candidates[i])
      if (a == i) throw std::invalid_argument("anchor inside its own A(i)");
    if (batch.center_index[i] != ContrastiveBatch::npos) {
      const std::size_t c = batch.center_index[i];
      if (c >= batch.entries.size() || batch.entries[c].label != label ||
          batch.entries[c].view != kCenterView)
        throw std::invalid_argument("center_index does not point at the own-class center");
    }
  }
}

}  // namespace ltc
