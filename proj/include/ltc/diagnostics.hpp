#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ltc/batch.hpp"
#include "ltc/gradients.hpp"

namespace ltc {

/// Per-class conflict tallies over one or more batches.
struct ClassConflictStats {
  std::int64_t pos_pairs = 0;   // (anchor, positive) pairs seen
  std::int64_t repulsive = 0;   // pairs whose gradient coefficient was > 0
  std::int64_t easy = 0;        // pairs flagged easy against the positive mean
  std::int64_t entries = 0;     // batch entries of this class, summed
  int views = 0;                // views assigned to this class (if known)
  double conflict_ratio = 0.0;  // repulsive / pos_pairs, 0 when no pairs
  double beta = 0.0;            // easy / pos_pairs, 0 when no pairs
};

struct ConflictReport {
  std::map<int, ClassConflictStats> per_class;
};

/// Flags each p in P(i) (ascending order) as an easy positive: true iff
/// z_i . z_p strictly exceeds z_i . z_pbar, with z_pbar the renormalized
/// mean of the in-batch positives.
std::vector<bool> detect_easy_positives(const ContrastiveBatch& batch, std::size_t i);

/// Streaming tally used by the trainer: feed each batch together with the
/// coefficient matrix produced by batch_contrastive_gradient.
class ConflictAccumulator {
 public:
  void add(const ContrastiveBatch& batch, const Matrix& coeff);
  ConflictReport finalize() const;
  bool empty() const { return stats_.empty(); }

 private:
  std::map<int, ClassConflictStats> stats_;
};

/// Convenience over a batch list: computes SCL instance gradients
/// internally and tallies positive-pair coefficient signs per class.
/// Throws on an empty batch list.
ConflictReport conflict_ratio_per_class(std::span<const ContrastiveBatch> batches,
                                        Temperature tau);

/// Total positive pairs from a class with m views and n_j in-batch base
/// samples: m n_j (m n_j - 1).
std::int64_t positive_pair_count(std::int64_t views, std::int64_t in_batch_count);

/// Conflict-count increment of m-view training over the two-view baseline,
/// scaled by the easy-positive probability beta.
double conflict_increment_estimate(std::int64_t views, std::int64_t in_batch_count,
                                   double beta);

struct BalanceRow {
  std::int64_t positive_pairs = 0;
  std::int64_t negative_pairs = 0;
  double ratio = 0.0;  // +inf when the class sees no negatives
  std::optional<double> weighted_negative_mass;
};

/// Per-class attraction/repulsion pair masses: sum over the class's
/// anchors of |P(i)| and |N(i)|. When weights are supplied, also the
/// weighted negative mass sum_i sum_{n in N(i)} w_n.
std::map<int, BalanceRow> attraction_repulsion_balance(
    const ContrastiveBatch& batch, const NegativeWeights* weights = nullptr);

/// Spearman rank correlation with average ranks on ties.
/// Returns 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace ltc
