#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ltc/batch.hpp"
#include "ltc/losses.hpp"
#include "ltc/matrix.hpp"

namespace ltc {

/// Gradient of one anchor's loss with respect to a set of candidate
/// entries. Every per-candidate gradient is a scalar multiple of the
/// anchor vector: d loss / d z_k = coefficients[k] * z_anchor.
struct GradientField {
  std::size_t anchor = 0;
  std::vector<std::size_t> indices;    // candidate entry ids, ascending per set
  std::vector<double> coefficients;    // scalar on z_anchor per candidate

  /// Materializes the gradient vector for indices[k].
  Vec vector_for(const ContrastiveBatch& batch, std::size_t k) const;
};

/// Gradient of the pairwise loss L_(i,p) over A(i): the effective positive
/// gets -(1-q_p)/tau, every other candidate +q_k/tau.
GradientField scl_pairwise_grad(const ContrastiveBatch& batch, std::size_t i,
                                std::size_t p, Temperature tau);

/// Gradient of the anchor's averaged loss over A(i): positives get
/// -(1/|P(i)| - q_k)/tau, negatives +q_k/tau.
GradientField scl_instance_grad(const ContrastiveBatch& batch, std::size_t i,
                                Temperature tau);

/// The attraction/repulsion decider 1/p_count - q. Positive attracts.
double nabla(std::size_t p_count, double q);

/// ACL gradient on positives (samples plus the class center): coefficient
/// -(1 - q_aligned)/(tau (|P(i)|+1)), never positive.
GradientField acl_positive_grad(const ContrastiveBatch& batch, std::size_t i,
                                const NegativeWeights& weights, Temperature tau);

/// ACL gradient on negatives: coefficient
/// (1/(tau (|P(i)|+1))) sum_p w_n e^{f_n} / (e^{f_p} + sum_m w_m e^{f_m}),
/// never negative.
GradientField acl_negative_grad(const ContrastiveBatch& batch, std::size_t i,
                                const NegativeWeights& weights, Temperature tau);

enum class ContrastiveKind { scl, acl };

/// d L_i / d z_i. Because every logit is a symmetric bilinear form, the
/// anchor gradient reuses the candidate coefficients:
/// d L_i / d z_i = sum_k coeff_k * z_k.
/// `weights` may be null for SCL.
Vec anchor_grad(ContrastiveKind kind, const ContrastiveBatch& batch, std::size_t i,
                const NegativeWeights* weights, Temperature tau);

/// Central finite differences, (f(x+h e_j) - f(x-h e_j)) / 2h per
/// coordinate. Throws if any probe evaluation is non-finite.
Vec finite_difference_oracle(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> point, double step);

/// Whole-batch contrastive gradient, assembled once per step.
///
/// coeff(i, k) holds anchor i's coefficient on candidate k (zero where k is
/// not in anchor i's sets), already scaled by the batch reduction weight
/// 1/contributing. The per-entry gradient of the batch-mean loss is then
///   d L / d z_k = sum_i coeff(i,k) z_i   (candidate role)
///               + sum_k' coeff(k,k') z_k'  (anchor role, k < sample_count)
/// Center rows are zeroed: centers are EMA statistics, not parameters.
/// Row computations run in parallel; every sum is in ascending order.
struct BatchGradient {
  Matrix coeff;      // sample_count x entries
  Matrix per_entry;  // entries x dim
  std::size_t contributing = 0;
};

BatchGradient batch_contrastive_gradient(ContrastiveKind kind,
                                         const ContrastiveBatch& batch,
                                         const NegativeWeights* weights,
                                         Temperature tau);

}  // namespace ltc
