#include "ltc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ltc {

std::vector<bool> detect_easy_positives(const ContrastiveBatch& batch, std::size_t i) {
  const auto& P = batch.positives[i];
  if (P.empty()) throw std::invalid_argument("anchor has no positives");
  const std::size_t h = batch.dim();
  Vec mean(h, 0.0);
  for (std::size_t p : P)
    for (std::size_t d = 0; d < h; ++d) mean[d] += batch.entries[p].values[d];
  for (double& m : mean) m /= static_cast<double>(P.size());

  const auto& zi = batch.entries[i].values;
  double norm_sq = 0.0;
  for (double m : mean) norm_sq += m * m;
  // Renormalized positive mean; a cancelled mean contributes similarity 0.
  double threshold = 0.0;
  if (norm_sq > 0.0)
    threshold = dot(zi, mean) / std::sqrt(norm_sq);

  std::vector<bool> flags(P.size());
  for (std::size_t k = 0; k < P.size(); ++k)
    flags[k] = dot(zi, batch.entries[P[k]].values) > threshold;
  return flags;
}

void ConflictAccumulator::add(const ContrastiveBatch& batch, const Matrix& coeff) {
  if (coeff.rows != batch.sample_count || coeff.cols != batch.entries.size())
    throw std::invalid_argument("coefficient matrix shape mismatch");
  std::map<int, std::int64_t> entries_of;
  for (std::size_t k = 0; k < batch.sample_count; ++k)
    ++entries_of[batch.entries[k].label];
  for (auto& [label, n] : entries_of) stats_[label].entries += n;

  for (std::size_t i = 0; i < batch.sample_count; ++i) {
    const auto& P = batch.positives[i];
    if (P.empty()) continue;
    auto& st = stats_[batch.entries[i].label];
    const auto easy = detect_easy_positives(batch, i);
    const double* row = coeff.row(i);
    for (std::size_t k = 0; k < P.size(); ++k) {
      ++st.pos_pairs;
      if (row[P[k]] > 0.0) ++st.repulsive;  // ties count as non-conflicting
      if (easy[k]) ++st.easy;
    }
  }
}

ConflictReport ConflictAccumulator::finalize() const {
  ConflictReport r;
  r.per_class = stats_;
  for (auto& [label, st] : r.per_class) {
    if (st.pos_pairs > 0) {
      st.conflict_ratio =
          static_cast<double>(st.repulsive) / static_cast<double>(st.pos_pairs);
      st.beta = static_cast<double>(st.easy) / static_cast<double>(st.pos_pairs);
    }
  }
  return r;
}

ConflictReport conflict_ratio_per_class(std::span<const ContrastiveBatch> batches,
                                        Temperature tau) {
  if (batches.empty()) throw std::invalid_argument("no batches to analyze");
  ConflictAccumulator acc;
  for (const auto& b : batches) {
    const auto grad = batch_contrastive_gradient(ContrastiveKind::scl, b, nullptr, tau);
    acc.add(b, grad.coeff);
  }
  return acc.finalize();
}

std::int64_t positive_pair_count(std::int64_t views, std::int64_t in_batch_count) {
  if (views < 1) throw std::invalid_argument("views must be at least 1");
  if (in_batch_count < 0) throw std::invalid_argument("negative class count");
  const std::int64_t mn = views * in_batch_count;
  return mn * (mn - 1);
}

double conflict_increment_estimate(std::int64_t views, std::int64_t in_batch_count,
                                   double beta) {
  if (views < 2) throw std::invalid_argument("views must be at least 2");
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must lie in [0,1]");
  const auto m_pairs = positive_pair_count(views, in_batch_count);
  const auto two_view = positive_pair_count(2, in_batch_count);
  return static_cast<double>(m_pairs - two_view) * beta;
}

std::map<int, BalanceRow> attraction_repulsion_balance(
    const ContrastiveBatch& batch, const NegativeWeights* weights) {
  std::map<int, BalanceRow> out;
  for (std::size_t i = 0; i < batch.sample_count; ++i) {
    auto& row = out[batch.entries[i].label];
    row.positive_pairs += static_cast<std::int64_t>(batch.positives[i].size());
    row.negative_pairs += static_cast<std::int64_t>(batch.negatives[i].size());
    if (weights != nullptr) {
      if (!row.weighted_negative_mass) row.weighted_negative_mass = 0.0;
      for (std::size_t n : batch.negatives[i])
        *row.weighted_negative_mass += weights->by_entry[n];
    }
  }
  for (auto& [label, row] : out) {
    row.ratio = row.negative_pairs > 0
                    ? static_cast<double>(row.positive_pairs) /
                          static_cast<double>(row.negative_pairs)
                    : std::numeric_limits<double>::infinity();
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("size mismatch");
  if (x.size() < 2) throw std::invalid_argument("need at least two points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ltc
