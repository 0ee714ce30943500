#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ltc/batch.hpp"

namespace ltc {

/// Inverse-frequency weights for negative entries, mean-normalized to 1
/// over the index set they were built for. The ACL operations treat these
/// as relative weights and rescale them to mean 1 over each anchor's own
/// N(i), so every anchor sees a calibrated repulsion mass.
struct NegativeWeights {
  std::vector<double> by_entry;  // one weight per batch entry index
};

struct LossBreakdown {
  double acl = 0.0;
  double bs = 0.0;
  double total = 0.0;
  double alpha = 0.0;
};

/// -log q_(i,p) for effective positive p, with q the candidate softmax
/// over A(i). Throws "not a positive" / "no contrast" on bad inputs.
double scl_pairwise_loss(const ContrastiveBatch& batch, std::size_t i,
                         std::size_t p, Temperature tau);

/// Mean of the pairwise losses over P(i).
/// Throws "anchor has no positives" when P(i) is empty.
double scl_loss(const ContrastiveBatch& batch, std::size_t i, Temperature tau);

/// Raw weights 1/N_label, rescaled so their mean over the given sequence
/// is exactly 1. Unknown labels throw.
std::vector<double> negative_weights(const std::map<int, std::size_t>& class_counts,
                                     std::span<const int> negative_labels);

/// Per-entry weight table for a whole batch (every entry priced as a
/// potential negative; mean over all entries is 1).
NegativeWeights batch_negative_weights(const ContrastiveBatch& batch);

/// All-ones weight table (the re-weighting ablation).
NegativeWeights unit_negative_weights(const ContrastiveBatch& batch);

/// Aligned contrastive loss for anchor i: every term's denominator holds
/// only that term's effective positive plus the weighted negatives; the
/// anchor's class center joins P(i) as one extra positive.
double acl_loss(const ContrastiveBatch& batch, std::size_t i,
                const NegativeWeights& weights, Temperature tau);

/// Cross-entropy on prior-adjusted logits f_j + log(prior_j).
double balanced_softmax_loss(std::span<const double> class_logits,
                             std::span<const double> priors, std::size_t label);

/// total = alpha * acl + bs. Negative alpha throws.
LossBreakdown combined_loss(double acl, double bs, double alpha);

/// Batch-level loss evaluation. Anchors with no usable term are skipped
/// (SCL: empty P(i); ACL: missing center or empty N(i)); `mean` averages
/// the contributing anchors. Per-anchor terms are computed in parallel and
/// reduced in ascending anchor order, so the result is identical for any
/// thread count.
struct BatchLossResult {
  std::vector<double> per_anchor;         // 0 for skipped anchors
  std::vector<std::uint8_t> contributes;  // 1 if the anchor entered the mean
  std::size_t contributing = 0;
  double mean = 0.0;
};

BatchLossResult batch_scl_loss(const ContrastiveBatch& batch, Temperature tau);
BatchLossResult batch_acl_loss(const ContrastiveBatch& batch,
                               const NegativeWeights& weights, Temperature tau);

}  // namespace ltc
