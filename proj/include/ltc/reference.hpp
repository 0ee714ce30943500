#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "ltc/batch.hpp"
#include "ltc/losses.hpp"
#include "ltc/matrix.hpp"

namespace ltc::ref {

// Serial reference implementations, written as literal per-pair
// enumerations with plain exp/log and no shared softmax machinery.
// They are the ground truth the batch kernels are tested against and the
// baseline the benchmark compares against; nothing in the main library
// calls them.

double scl_pairwise_loss(const ContrastiveBatch& b, std::size_t i, std::size_t p,
                         double tau);

double scl_loss(const ContrastiveBatch& b, std::size_t i, double tau);

/// Positive-term mean of the per-pair losses when each denominator keeps
/// only the effective positive plus the (optionally weighted) negatives
/// and no center term is added. Used by the acl-vs-scl ordering property.
double acl_loss_without_center(const ContrastiveBatch& b, std::size_t i, double tau);

double acl_loss(const ContrastiveBatch& b, std::size_t i,
                const NegativeWeights& w, double tau);

/// Mean over P(i) of the per-pair gradients, each recomputed from scratch.
/// Returns one gradient vector per entry of A(i), in A(i) order.
std::vector<Vec> scl_instance_grad(const ContrastiveBatch& b, std::size_t i,
                                   double tau);

/// Serial whole-batch means (loss averaged over contributing anchors).
double batch_scl_mean(const ContrastiveBatch& b, double tau);
double batch_acl_mean(const ContrastiveBatch& b, const NegativeWeights& w,
                      double tau);

/// Serial whole-batch per-entry gradient of the mean SCL loss, anchor and
/// candidate roles accumulated pair by pair. Shape: entries x dim.
Matrix batch_scl_gradient(const ContrastiveBatch& b, double tau);

/// Repulsive positive-pair recount: for every anchor and every positive,
/// recomputes q by direct enumeration and counts q > 1/|P(i)|.
/// Returns per-class (positive pairs, repulsive pairs).
std::map<int, std::pair<long long, long long>> conflict_recount(
    const ContrastiveBatch& b, double tau);

}  // namespace ltc::ref
