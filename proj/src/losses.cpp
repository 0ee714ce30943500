#include "ltc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ltc/matrix.hpp"

namespace ltc {

namespace {

// Logits of anchor i against an index list, in list order.
std::vector<double> logits_against(const ContrastiveBatch& b, std::size_t i,
                                   std::span<const std::size_t> ids, double tau) {
  std::vector<double> f(ids.size());
  const auto& zi = b.entries[i].values;
  for (std::size_t k = 0; k < ids.size(); ++k)
    f[k] = dot(zi, b.entries[ids[k]].values) / tau;
  return f;
}

// log(sum_a exp(f_a)) with max-subtraction; summation in input order.
double log_sum_exp(std::span<const double> f) {
  double m = f[0];
  for (double x : f) m = std::max(m, x);
  double s = 0.0;
  for (double x : f) s += std::exp(x - m);
  return m + std::log(s);
}

double scl_anchor_loss(const ContrastiveBatch& b, std::size_t i, double tau) {
  const auto& A = b.candidates[i];
  const auto& P = b.positives[i];
  const auto f = logits_against(b, i, A, tau);
  const double lse = log_sum_exp(f);
  // -log q_(i,p) = lse - f_p, averaged over P(i).
  double sum_fp = 0.0;
  std::size_t a = 0;
  for (std::size_t p : P) {
    while (A[a] != p) ++a;  // P is an ascending subsequence of A
    sum_fp += f[a];
  }
  return lse - sum_fp / static_cast<double>(P.size());
}

double acl_anchor_loss(const ContrastiveBatch& b, std::size_t i,
                       const NegativeWeights& w, double tau) {
  const auto& P = b.positives[i];
  const auto& N = b.negatives[i];
  const std::size_t c = b.center_index[i];
  if (c == ContrastiveBatch::npos)
    throw std::invalid_argument("anchor has no class center");
  if (N.empty()) throw std::invalid_argument("anchor has no negatives");
  if (w.by_entry.size() != b.entries.size())
    throw std::invalid_argument("weight table size mismatch");

  // The provided weights are relative; each anchor's negatives are
  // rescaled to mean 1 over N(i) so the repulsion mass stays calibrated
  // against the single effective positive regardless of which classes
  // happen to populate N(i).
  double raw_sum = 0.0;
  for (std::size_t n : N) {
    const double wn = w.by_entry[n];
    if (!(wn > 0.0)) throw std::invalid_argument("negative weight must be positive");
    raw_sum += wn;
  }
  const double log_rescale = std::log(static_cast<double>(N.size()) / raw_sum);

  // Weighted negative mass in shifted space: sum_n exp(f_n + log w_n - m).
  const auto& zi = b.entries[i].values;
  std::vector<double> g(N.size());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < N.size(); ++k) {
    g[k] = dot(zi, b.entries[N[k]].values) / tau + std::log(w.by_entry[N[k]]) +
           log_rescale;
    m = std::max(m, g[k]);
  }
  double neg_mass = 0.0;
  for (double gk : g) neg_mass += std::exp(gk - m);

  auto term = [&](std::size_t p_idx) {
    const double fp = dot(zi, b.entries[p_idx].values) / tau;
    const double shift = std::max(fp, m);
    // -log( e^{fp} / (e^{fp} + sum_n w_n e^{fn}) )
    return std::log(std::exp(fp - shift) + neg_mass * std::exp(m - shift)) +
           shift - fp;
  };

  double sum = 0.0;
  for (std::size_t p : P) sum += term(p);
  sum += term(c);
  return sum / static_cast<double>(P.size() + 1);
}

}  // namespace

double scl_pairwise_loss(const ContrastiveBatch& batch, std::size_t i,
                         std::size_t p, Temperature tau) {
  const auto& P = batch.positives[i];
  if (!std::binary_search(P.begin(), P.end(), p))
    throw std::invalid_argument("not a positive");
  const auto& A = batch.candidates[i];
  if (A.size() < 2) throw std::invalid_argument("no contrast");
  const auto f = logits_against(batch, i, A, tau.tau);
  const double lse = log_sum_exp(f);
  for (std::size_t a = 0; a < A.size(); ++a)
    if (A[a] == p) return lse - f[a];
  throw std::invalid_argument("positive not in candidate set");
}

double scl_loss(const ContrastiveBatch& batch, std::size_t i, Temperature tau) {
  if (batch.positives[i].empty())
    throw std::invalid_argument("anchor has no positives");
  if (batch.candidates[i].size() < 2) throw std::invalid_argument("no contrast");
  return scl_anchor_loss(batch, i, tau.tau);
}

std::vector<double> negative_weights(const std::map<int, std::size_t>& class_counts,
                                     std::span<const int> negative_labels) {
  std::vector<double> w(negative_labels.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < negative_labels.size(); ++k) {
    auto it = class_counts.find(negative_labels[k]);
    if (it == class_counts.end())
      throw std::invalid_argument("unknown class label in negative_weights");
    w[k] = 1.0 / static_cast<double>(it->second);
    sum += w[k];
  }
  if (!negative_labels.empty()) {
    const double scale = static_cast<double>(negative_labels.size()) / sum;
    for (double& x : w) x *= scale;
  }
  return w;
}

NegativeWeights batch_negative_weights(const ContrastiveBatch& batch) {
  std::vector<int> labels(batch.entries.size());
  for (std::size_t k = 0; k < batch.entries.size(); ++k)
    labels[k] = batch.entries[k].label;
  auto w = negative_weights(batch.class_counts, labels);
  return NegativeWeights{std::move(w)};
}

NegativeWeights unit_negative_weights(const ContrastiveBatch& batch) {
  return NegativeWeights{std::vector<double>(batch.entries.size(), 1.0)};
}

double acl_loss(const ContrastiveBatch& batch, std::size_t i,
                const NegativeWeights& weights, Temperature tau) {
  return acl_anchor_loss(batch, i, weights, tau.tau);
}

double balanced_softmax_loss(std::span<const double> class_logits,
                             std::span<const double> priors, std::size_t label) {
  if (class_logits.size() != priors.size())
    throw std::invalid_argument("logit/prior size mismatch");
  if (label >= class_logits.size())
    throw std::invalid_argument("label out of range");
  double prior_sum = 0.0;
  for (double p : priors) {
    if (!(p > 0.0)) throw std::invalid_argument("priors must be positive");
    prior_sum += p;
  }
  if (std::abs(prior_sum - 1.0) > 1e-9)
    throw std::invalid_argument("priors must sum to 1");
  std::vector<double> adjusted(class_logits.size());
  for (std::size_t j = 0; j < class_logits.size(); ++j)
    adjusted[j] = class_logits[j] + std::log(priors[j]);
  return log_sum_exp(adjusted) - adjusted[label];
}

LossBreakdown combined_loss(double acl, double bs, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
  return LossBreakdown{acl, bs, alpha * acl + bs, alpha};
}

namespace {

template <typename AnchorLoss>
BatchLossResult batch_loss(const ContrastiveBatch& batch, AnchorLoss&& loss_fn,
                           const std::vector<std::uint8_t>& eligible) {
  const auto n = static_cast<std::ptrdiff_t>(batch.sample_count);
  BatchLossResult r;
  r.per_anchor.assign(batch.sample_count, 0.0);
  r.contributes = eligible;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    if (eligible[static_cast<std::size_t>(i)])
      r.per_anchor[static_cast<std::size_t>(i)] =
          loss_fn(static_cast<std::size_t>(i));

  // Fixed ascending reduction keeps the mean bitwise reproducible.
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.sample_count; ++i) {
    if (!r.contributes[i]) continue;
    sum += r.per_anchor[i];
    ++r.contributing;
  }
  r.mean = r.contributing ? sum / static_cast<double>(r.contributing) : 0.0;
  return r;
}

}  // namespace

BatchLossResult batch_scl_loss(const ContrastiveBatch& batch, Temperature tau) {
  std::vector<std::uint8_t> eligible(batch.sample_count, 0);
  for (std::size_t i = 0; i < batch.sample_count; ++i)
    eligible[i] = !batch.positives[i].empty() && batch.candidates[i].size() >= 2;
  return batch_loss(
      batch, [&](std::size_t i) { return scl_anchor_loss(batch, i, tau.tau); },
      eligible);
}

BatchLossResult batch_acl_loss(const ContrastiveBatch& batch,
                               const NegativeWeights& weights, Temperature tau) {
  // Anchors that cannot form an ACL term (no center yet, or a batch so
  // degenerate they see no negatives) are skipped, mirroring the SCL
  // skip policy; the per-anchor operation keeps its error contract.
  if (weights.by_entry.size() != batch.entries.size())
    throw std::invalid_argument("weight table size mismatch");
  for (double w : weights.by_entry)
    if (!(w > 0.0)) throw std::invalid_argument("negative weight must be positive");
  std::vector<std::uint8_t> eligible(batch.sample_count, 0);
  for (std::size_t i = 0; i < batch.sample_count; ++i)
    eligible[i] = batch.center_index[i] != ContrastiveBatch::npos &&
                  !batch.negatives[i].empty();
  return batch_loss(
      batch,
      [&](std::size_t i) { return acl_anchor_loss(batch, i, weights, tau.tau); },
      eligible);
}

}  // namespace ltc
